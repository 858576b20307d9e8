#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "remix/checkpoint.hpp"
#include "remix/errors.hpp"

using namespace remix;
namespace fs = std::filesystem;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.d_x = 5;
  s.d_z = 2;
  s.M = 2;
  s.encoder_hidden = {7, 3};
  s.decoder_hidden = {6};
  s.likelihood = Likelihood::kBernoulli;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("remix_test_ckpt_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

}  // namespace

TEST_CASE("save/load round-trips every parameter bit-exactly") {
  Rng rng(3);
  RecursiveMixtureModel model(small_spec(), rng);
  // Make the eps output layers nonzero so they are actually exercised.
  for (std::size_t j = 1; j <= 2; ++j) {
    auto v = model.eps(j).group().flatten();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += 1e-3 * double(i) + 1.0 / 3.0;
    model.eps(j).group().assign(v);
  }
  const fs::path stem = fresh_dir("roundtrip") / "sub" / "model";
  save_checkpoint(model, stem, {{"note", "hello"}});
  CHECK(fs::exists(stem.string() + ".json"));
  CHECK(fs::exists(stem.string() + ".bin"));
  CHECK_FALSE(fs::exists(stem.string() + ".json.tmp"));

  for (const fs::path& p : {stem, fs::path(stem.string() + ".json")}) {
    LoadedCheckpoint back = load_checkpoint(p);
    CHECK(back.extra.at("note") == "hello");
    CHECK(back.model.spec().M == 2);
    CHECK(back.model.spec().likelihood == Likelihood::kBernoulli);
    CHECK(back.model.spec().encoder_hidden == std::vector<std::size_t>{7, 3});
    CHECK(back.model.snapshot() == model.snapshot());
  }

  // Same outputs from the reloaded model.
  LoadedCheckpoint back = load_checkpoint(stem);
  Rng xr(4);
  const Tensor x = xr.randn({3, 5});
  const Tensor a = model.mixing_log_weights(x, 2), b = back.model.mixing_log_weights(x, 2);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
        std::vector<double>(b.data().begin(), b.data().end()));
}

TEST_CASE("model spec JSON round-trip") {
  const ModelSpec s = small_spec();
  const ModelSpec t = model_spec_from_json(model_spec_to_json(s));
  CHECK(t.d_x == s.d_x);
  CHECK(t.decoder_hidden == s.decoder_hidden);
  CHECK(t.eps_max == s.eps_max);
  CHECK(t.likelihood == s.likelihood);
}

TEST_CASE("damaged checkpoints raise CheckpointError") {
  Rng rng(5);
  RecursiveMixtureModel model(small_spec(), rng);
  const fs::path dir = fresh_dir("damaged");
  const fs::path stem = dir / "model";
  save_checkpoint(model, stem);
  const fs::path manifest = stem.string() + ".json", blob = stem.string() + ".bin";
  const std::string good_manifest = slurp(manifest), good_blob = slurp(blob);

  CHECK_THROWS_AS(load_checkpoint(dir / "absent"), CheckpointError);

  SUBCASE("truncated blob") { spit(blob, good_blob.substr(0, good_blob.size() - 8)); }
  SUBCASE("missing blob") { fs::remove(blob); }
  SUBCASE("manifest is not JSON") { spit(manifest, good_manifest.substr(0, good_manifest.size() / 2)); }
  SUBCASE("wrong format tag") {
    auto j = nlohmann::json::parse(good_manifest);
    j["format"] = "something-else";
    spit(manifest, j.dump());
  }
  SUBCASE("missing field") {
    auto j = nlohmann::json::parse(good_manifest);
    j.erase("groups");
    spit(manifest, j.dump());
  }
  SUBCASE("group layout mismatch") {
    auto j = nlohmann::json::parse(good_manifest);
    j["model"]["M"] = 1;
    spit(manifest, j.dump());
  }
  SUBCASE("tensor shape mismatch") {
    auto j = nlohmann::json::parse(good_manifest);
    j["model"]["encoder_hidden"] = {7, 4};
    spit(manifest, j.dump());
  }
  SUBCASE("invalid model spec") {
    auto j = nlohmann::json::parse(good_manifest);
    j["model"]["eps_max"] = 2.0;
    spit(manifest, j.dump());
  }
  CHECK_THROWS_AS(load_checkpoint(stem), CheckpointError);
}
