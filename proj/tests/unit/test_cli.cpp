#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <algorithm>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "remix_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(REMIX_CLI_PATH) + " " + args + " > " + (kRoot / "out.txt").string() +
                          " 2> " + (kRoot / "err.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json tiny_config(const std::string& out_dir, std::size_t d_z = 2) {
  return {{"method", "rme"},
          {"seed", 3},
          {"model", {{"M", 1}, {"d_z", d_z}, {"encoder_hidden", {8}}, {"decoder_hidden", {8}}}},
          {"train",
           {{"batch_size", 32}, {"n_epochs", 1}, {"pretrain_epochs", 1}, {"val_iwae_k", 3}, {"eval_examples", 20}}},
          {"dataset", {{"kind", "bimodal_toy"}, {"n_train", 100}, {"n_test", 10}, {"d_z", d_z}}},
          {"output", {{"dir", out_dir}}}};
}

fs::path write_json(const std::string& name, const json& j) {
  const fs::path p = kRoot / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

// One trained run shared by the read-only tests.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    const fs::path d = kRoot / "run";
    const fs::path cfg = write_json("run.json", tiny_config(d.string()));
    REQUIRE(run("train -q -c " + cfg.string()) == 0);
    return d;
  }();
  return dir;
}

struct Setup {
  Setup() {
    static bool once = [] {
      fs::remove_all(kRoot);
      fs::create_directories(kRoot);
      return true;
    }();
    (void)once;
  }
};

}  // namespace

TEST_CASE_FIXTURE(Setup, "train writes metrics, checkpoint and manifest") {
  const fs::path dir = trained_run();
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "model.bin"));
  CHECK_FALSE(fs::exists(dir / ".lock"));
  const json m = json::parse(slurp(dir / "manifest.json"));
  for (const char* key : {"config", "version", "seed", "output_dir", "started", "finished", "final_metrics", "files"})
    CHECK(m.contains(key));
  CHECK(m["seed"] == 3);
  CHECK(m["config"]["model"]["M"] == 1);
  CHECK(m["final_metrics"].contains("val_iwae"));
}

TEST_CASE_FIXTURE(Setup, "eval, viz-posterior and bench-inference on a checkpoint") {
  const fs::path dir = trained_run();
  const std::string ck = (dir / "model").string();
  CHECK(run("eval --checkpoint " + ck + " -K 5") == 0);
  CHECK(run("eval --checkpoint " + ck + " -K 5 --split val") == 0);
  const std::string csv = slurp(dir / "eval.csv");
  CHECK(csv.rfind("split,K,n,iwae,se\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const fs::path prefix = kRoot / "viz" / "ex";
  CHECK(run("viz-posterior --checkpoint " + ck + " --index 2 --resolution 20 --out " + prefix.string()) == 0);
  for (const char* suffix : {"_true.csv", "_mixture.csv", "_component_0.csv", "_component_1.csv"})
    CHECK(fs::exists(prefix.string() + suffix));
  CHECK(slurp(kRoot / "out.txt").find("grid KL") != std::string::npos);

  CHECK(run("viz-posterior --checkpoint " + ck + " --index 999 --out " + prefix.string()) == 2);
  CHECK(run("bench-inference --checkpoint " + ck + " --repeats 1") == 0);
  CHECK(slurp(kRoot / "out.txt").find("ms/batch") != std::string::npos);
}

TEST_CASE_FIXTURE(Setup, "same seed, same metrics") {
  const fs::path dir = trained_run();
  const fs::path again = kRoot / "again";
  const fs::path cfg = write_json("again.json", tiny_config(again.string()));
  REQUIRE(run("train -q -c " + cfg.string()) == 0);
  // Drop the wall-clock column before comparing.
  auto strip = [](const std::string& s) {
    std::string r, line;
    std::istringstream in(s);
    while (std::getline(in, line)) r += line.substr(0, line.rfind(',')) + "\n";
    return r;
  };
  CHECK(strip(slurp(dir / "metrics.csv")) == strip(slurp(again / "metrics.csv")));
  CHECK(slurp(dir / "model.bin") == slurp(again / "model.bin"));
}

TEST_CASE_FIXTURE(Setup, "exit codes") {
  SUBCASE("bad config is 1") {
    json j = tiny_config((kRoot / "bad").string());
    j["train"]["learning_rate"] = 1;
    CHECK(run("train -c " + write_json("bad.json", j).string()) == 1);
    CHECK(slurp(kRoot / "err.txt").find("learning_rate") != std::string::npos);
    CHECK(run("train -c " + (kRoot / "nope.json").string()) == 1);
    CHECK(run("train -c " + write_json("ok.json", tiny_config((kRoot / "x").string())).string() +
              " --set lr=-1") == 1);
  }
  SUBCASE("busy output directory is 1") {
    const fs::path dir = kRoot / "busy";
    fs::create_directories(dir);
    std::ofstream(dir / ".lock") << "";
    CHECK(run("train -q -c " + write_json("busy.json", tiny_config(dir.string())).string()) == 1);
    CHECK(slurp(kRoot / "err.txt").find("in use") != std::string::npos);
    CHECK(fs::exists(dir / ".lock"));
  }
  SUBCASE("missing dataset is 2") {
    json j = tiny_config((kRoot / "idx").string());
    j["dataset"] = {{"kind", "idx"}, {"images", (kRoot / "missing-images.idx").string()}};
    CHECK(run("train -c " + write_json("idx.json", j).string()) == 2);
  }
  SUBCASE("bad checkpoint is 3") {
    CHECK(run("eval --checkpoint " + (kRoot / "no_such_model").string()) == 3);
    const fs::path dir = trained_run();
    fs::create_directories(kRoot / "broken");
    fs::copy_file(dir / "model.json", kRoot / "broken" / "model.json", fs::copy_options::overwrite_existing);
    std::ofstream(kRoot / "broken" / "model.bin") << "short";
    CHECK(run("eval --checkpoint " + (kRoot / "broken" / "model").string()) == 3);
  }
  SUBCASE("viz on a non-2-d latent space is 4") {
    const fs::path dir = kRoot / "dz3";
    REQUIRE(run("train -q -c " + write_json("dz3.json", tiny_config(dir.string(), 3)).string()) == 0);
    CHECK(run("viz-posterior --checkpoint " + (dir / "model").string() + " --out " + (kRoot / "v3").string()) == 4);
  }
}

TEST_CASE_FIXTURE(Setup, "vae with M > 0 warns") {
  json j = tiny_config((kRoot / "vae").string());
  j["method"] = "vae";
  CHECK(run("train -q -c " + write_json("vae.json", j).string()) == 0);
  CHECK(slurp(kRoot / "err.txt").find("warning") != std::string::npos);
}
