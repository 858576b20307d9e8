#include "remix/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace remix {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "remix-checkpoint";
constexpr int kVersion = 1;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
}

fs::path manifest_path(const fs::path& p) {
  if (p.extension() == ".json") return p;
  fs::path m = p;
  m += ".json";
  return m;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

json model_spec_to_json(const ModelSpec& s) {
  return json{{"d_x", s.d_x},
              {"d_z", s.d_z},
              {"M", s.M},
              {"encoder_hidden", s.encoder_hidden},
              {"decoder_hidden", s.decoder_hidden},
              {"eps_hidden", s.eps_hidden},
              {"eps_min", s.eps_min},
              {"eps_max", s.eps_max},
              {"slope", s.slope},
              {"likelihood", s.likelihood == Likelihood::kGaussian ? "gaussian" : "bernoulli"}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  s.d_x = j.at("d_x").get<std::size_t>();
  s.d_z = j.at("d_z").get<std::size_t>();
  s.M = j.at("M").get<std::size_t>();
  s.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
  s.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
  s.eps_hidden = j.at("eps_hidden").get<std::size_t>();
  s.eps_min = j.at("eps_min").get<double>();
  s.eps_max = j.at("eps_max").get<double>();
  s.slope = j.at("slope").get<double>();
  const std::string lik = j.at("likelihood").get<std::string>();
  if (lik == "gaussian") s.likelihood = Likelihood::kGaussian;
  else if (lik == "bernoulli") s.likelihood = Likelihood::kBernoulli;
  else throw ConfigError("unknown likelihood '" + lik + "'");
  s.validate();
  return s;
}

void save_checkpoint(const RecursiveMixtureModel& model, const fs::path& stem, const json& extra) {
  fs::path blob_path = stem;
  blob_path += ".bin";
  std::string blob;
  json groups = json::array();
  std::uint64_t offset = 0;
  for (const ParamGroup* g : model.groups()) {
    json tensors = json::array();
    for (const auto& nt : g->tensors()) {
      auto d = nt.tensor.data();
      tensors.push_back({{"name", nt.name},
                         {"shape", nt.tensor.shape()},
                         {"offset", offset},
                         {"count", d.size()}});
      for (double v : d) {
        std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
        char buf[8];
        std::memcpy(buf, &bits, 8);
        blob.append(buf, 8);
      }
      offset += 8 * d.size();
    }
    groups.push_back({{"name", g->name()}, {"tensors", tensors}});
  }
  json manifest{{"format", kFormat},
                {"version", kVersion},
                {"model", model_spec_to_json(model.spec())},
                {"blob", blob_path.filename().string()},
                {"blob_bytes", offset},
                {"groups", groups},
                {"extra", extra}};
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_file_atomic(blob_path, blob);
  write_file_atomic(manifest_path(stem), manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const fs::path mpath = manifest_path(path);
  std::ifstream in(mpath);
  if (!in) throw CheckpointError("cannot open checkpoint manifest " + mpath.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest " + mpath.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format").get<std::string>() != kFormat ||
        manifest.at("version").get<int>() != kVersion)
      throw CheckpointError("unsupported checkpoint format in " + mpath.string());
    ModelSpec spec = model_spec_from_json(manifest.at("model"));
    const fs::path blob_path = mpath.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream bin(blob_path, std::ios::binary);
    if (!bin) throw CheckpointError("cannot open checkpoint blob " + blob_path.string());
    std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (blob.size() != manifest.at("blob_bytes").get<std::uint64_t>())
      throw CheckpointError("checkpoint blob " + blob_path.string() + " has " +
                            std::to_string(blob.size()) + " bytes, manifest says " +
                            manifest.at("blob_bytes").dump());

    Rng scratch(0);
    ModelSpec build = spec;
    RecursiveMixtureModel model(build, scratch);
    const json& groups = manifest.at("groups");
    auto model_groups = model.groups();
    if (groups.size() != model_groups.size())
      throw CheckpointError("checkpoint has " + std::to_string(groups.size()) +
                            " groups, model needs " + std::to_string(model_groups.size()));
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      ParamGroup& g = *model_groups[gi];
      const json& jg = groups[gi];
      if (jg.at("name").get<std::string>() != g.name())
        throw CheckpointError("group " + std::to_string(gi) + " is '" +
                              jg.at("name").get<std::string>() + "', expected '" + g.name() + "'");
      const json& jt = jg.at("tensors");
      if (jt.size() != g.tensors().size())
        throw CheckpointError("group '" + g.name() + "' tensor count mismatch");
      for (std::size_t ti = 0; ti < jt.size(); ++ti) {
        auto& nt = g.tensors()[ti];
        if (jt[ti].at("name").get<std::string>() != nt.name ||
            jt[ti].at("shape").get<Shape>() != nt.tensor.shape())
          throw CheckpointError("tensor '" + nt.name + "' in group '" + g.name() +
                                "' does not match the model layout");
        const auto off = jt[ti].at("offset").get<std::uint64_t>();
        const auto count = jt[ti].at("count").get<std::uint64_t>();
        if (count != nt.tensor.numel() || off + 8 * count > blob.size())
          throw CheckpointError("tensor '" + nt.name + "' extends past the blob");
        auto dst = nt.tensor.mutable_data();
        for (std::uint64_t i = 0; i < count; ++i) {
          std::uint64_t bits;
          std::memcpy(&bits, blob.data() + off + 8 * i, 8);
          dst[i] = std::bit_cast<double>(to_le(bits));
        }
      }
    }
    json extra = manifest.value("extra", json::object());
    return {std::move(model), std::move(extra)};
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest " + mpath.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError("corrupt checkpoint manifest " + mpath.string() + ": " + e.what());
  }
}

}  // namespace remix
