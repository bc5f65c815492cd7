#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "privshield/experiment.hpp"
#include "privshield/image.hpp"

using namespace privshield;
namespace fs = std::filesystem;

namespace {

json tiny_config_json() {
  return json{
      {"seed", 42},
      {"data",
       {{"synthetic",
         {{"n_identities", 8},
          {"samples_per_identity", 12},
          {"k_attributes", 2},
          {"image_size", 16},
          {"channels", 3},
          {"seed", 600}}},
        {"fractions", {0.5, 0.3, 0.2}}}},
      {"nets",
       {{"encoder_stages",
         json::array({{{"channels", 6}, {"stride", 2}},
                      {{"channels", 12}, {"stride", 2}}})},
        {"tap", "fc"},
        {"latent_dim", 8},
        {"classifier_hidden", 12},
        {"discriminator_stages",
         json::array({{{"channels", 6}, {"stride", 2}, {"act", "lrelu"}}})},
        {"perceptual_stages", json::array({{{"channels", 6}, {"stride", 2}}})},
        {"private_stages", json::array({{{"channels", 6}, {"stride", 2}}})},
        {"private_feature_dim", 10}}},
      {"train",
       {{"lambda1", 1.0}, {"total_alternations", 15}, {"batch_size", 8}}},
      {"attack", {{"steps", 40}, {"batch_size", 8}, {"feature_steps", 30},
                  {"grid_size", 4}}},
      {"eval", {{"private_steps", 40}, {"private_batch", 8}}}};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("privshield_exp_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing: defaults, round trip and hashing") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  CHECK(cfg.seed == 42);
  CHECK(cfg.data.synthetic->n_identities == 8);
  CHECK(cfg.train.hp.lambda1 == 1.0);
  CHECK(cfg.train.lr_enc == 1e-3);  // default filled in
  CHECK(cfg.nets.tap == "fc");

  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json().dump() == cfg.to_json().dump());
  CHECK(back.config_hash() == cfg.config_hash());

  ExperimentConfig other = cfg;
  other.train.hp.lambda2 = 3;
  CHECK(other.config_hash() != cfg.config_hash());
}

TEST_CASE("config parsing rejects unknown keys at every level") {
  json j = tiny_config_json();
  j["bogus_top"] = 1;
  j["train"]["bogus_nested"] = 2;
  try {
    ExperimentConfig::from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus_top") != std::string::npos);
    CHECK(msg.find("bogus_nested") != std::string::npos);  // all enumerated
  }
}

TEST_CASE("config parsing rejects contradictions and bad values") {
  json j = tiny_config_json();
  j["data"]["manifest"] = "somewhere.csv";  // synthetic AND manifest
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  json j2 = tiny_config_json();
  j2["train"]["lambda1"] = -2;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j2), ConfigError);

  json j3 = tiny_config_json();
  j3["data"]["fractions"] = {0.5, 0.5};
  CHECK_THROWS_AS(ExperimentConfig::from_json(j3), ConfigError);

  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("cmd_generate writes a loadable deterministic dataset") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  const auto d1 = temp_dir("gen_a");
  const auto d2 = temp_dir("gen_b");
  cmd_generate(cfg, d1.string());
  cmd_generate(cfg, d2.string());
  CHECK(slurp(d1 / "manifest.csv") == slurp(d2 / "manifest.csv"));
  const Dataset back = load_manifest((d1 / "manifest.csv").string());
  CHECK(back.samples.size() == 96);
  CHECK(back.k == 2);
}

TEST_CASE("cmd_train emits checkpoints, history and provenance; reruns are "
          "bit-identical") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  const auto d1 = temp_dir("train_a");
  const auto d2 = temp_dir("train_b");
  const TrainOutput o1 = cmd_train(cfg, d1.string());
  const TrainOutput o2 = cmd_train(cfg, d2.string());

  CHECK(fs::exists(d1 / "config.json"));
  CHECK(fs::exists(d1 / "history.csv"));
  const fs::path step(o1.final_checkpoint_dir);
  CHECK(fs::exists(step / "enc.ckpt"));
  CHECK(fs::exists(step / "f.ckpt"));
  CHECK(fs::exists(step / "dec.ckpt"));
  CHECK_FALSE(fs::exists(step / "disc.ckpt"));  // mu1 == 0

  for (const char* f : {"enc.ckpt", "f.ckpt", "dec.ckpt"})
    CHECK(slurp(step / f) ==
          slurp(fs::path(o2.final_checkpoint_dir) / f));
  CHECK(slurp(d1 / "history.csv") == slurp(d2 / "history.csv"));
}

TEST_CASE("checkpoint_every produces intermediate checkpoints") {
  ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  cfg.train.checkpoint_every = 5;
  const auto dir = temp_dir("train_ckpt");
  cmd_train(cfg, dir.string());
  CHECK(fs::exists(dir / "step_5" / "enc.ckpt"));
  CHECK(fs::exists(dir / "step_10" / "enc.ckpt"));
  CHECK(fs::exists(dir / "step_15" / "enc.ckpt"));
}

TEST_CASE("cmd_attack produces the full artifact set with sane metrics") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  const auto tdir = temp_dir("attack_train");
  const auto adir = temp_dir("attack_out");
  const TrainOutput t = cmd_train(cfg, tdir.string());
  const MetricsReport r = cmd_attack(cfg, t.final_checkpoint_dir, adir.string());

  CHECK(fs::exists(adir / "attack_metrics.json"));
  CHECK(fs::exists(adir / "metrics.csv"));
  CHECK(fs::exists(adir / "reconstructions.png"));
  CHECK(fs::exists(adir / "features.csv"));

  CHECK(r.mean_mcc >= -1.0);
  CHECK(r.mean_mcc <= 1.0);
  CHECK(r.tap == "fc");
  CHECK(r.attack_steps == 40);
  CHECK(r.per_attribute_mcc.size() == 2);

  // Grid: 2 rows x grid_size columns of 16px tiles with 1px separators.
  const Tensor grid = read_png((adir / "reconstructions.png").string());
  CHECK(grid.dim(1) == 2 * 16 + 1);
  CHECK(grid.dim(2) == 4 * 16 + 3);

  // features.csv has one row per test sample.
  std::ifstream fin(adir / "features.csv");
  std::string line;
  int rows = -1;  // header
  while (std::getline(fin, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 19);  // 96 * 0.2
}

TEST_CASE("cmd_attack zero-budget sanity floor") {
  ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  cfg.attack.steps = 0;
  cfg.attack.feature_steps = 0;
  const auto tdir = temp_dir("attack0_train");
  const auto adir = temp_dir("attack0_out");
  const TrainOutput t = cmd_train(cfg, tdir.string());
  const MetricsReport r = cmd_attack(cfg, t.final_checkpoint_dir, adir.string());
  r.validate();  // metrics computable on an untrained decoder
  CHECK(r.attack_steps == 0);
}

TEST_CASE("cmd_report merges runs, skips corrupt ones, and is idempotent") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(tiny_config_json());
  const auto tdir = temp_dir("report_train");
  const TrainOutput t = cmd_train(cfg, tdir.string());
  const auto a1 = temp_dir("report_a1");
  const auto a2 = temp_dir("report_a2");
  cmd_attack(cfg, t.final_checkpoint_dir, a1.string());
  {
    ExperimentConfig cfg2 = cfg;
    cfg2.seed = 43;
    const auto tdir2 = temp_dir("report_train2");
    const TrainOutput t2 = cmd_train(cfg2, tdir2.string());
    cmd_attack(cfg2, t2.final_checkpoint_dir, a2.string());
  }
  const auto missing = temp_dir("report_missing");
  fs::create_directories(missing);

  const auto rdir = temp_dir("report_out");
  cmd_report({a1.string(), a2.string(), missing.string()}, rdir.string());
  CHECK(fs::exists(rdir / "merged.csv"));
  CHECK(fs::exists(rdir / "merged.json"));
  CHECK(fs::exists(rdir / "tradeoff.svg"));

  std::ifstream in(rdir / "merged.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);  // two good runs, one skipped

  const std::string first = slurp(rdir / "merged.csv");
  cmd_report({a1.string(), a2.string(), missing.string()}, rdir.string());
  CHECK(slurp(rdir / "merged.csv") == first);  // idempotent
}

#ifdef PRIVSHIELD_BIN
TEST_CASE("cli exit codes and artifacts") {
  const fs::path work = temp_dir("cli");
  fs::create_directories(work);
  const std::string bin = PRIVSHIELD_BIN;

  auto run = [&](const std::string& args) {
    const std::string cmd = bin + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };

  SUBCASE("malformed config: exit 2, no output created") {
    const fs::path cfg_path = work / "bad.json";
    std::ofstream(cfg_path) << R"({"seed": 1, "typo_section": {}})";
    const fs::path out = work / "bad_out";
    CHECK(run("train --config " + cfg_path.string() + " --out " + out.string()) == 2);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("invalid json: exit 2") {
    const fs::path cfg_path = work / "nonjson.json";
    std::ofstream(cfg_path) << "{nope";
    CHECK(run("train --config " + cfg_path.string() + " --out " +
              (work / "x").string()) == 2);
  }
  SUBCASE("divergence: exit 3") {
    json j = tiny_config_json();
    j["train"]["lambda1"] = 1e308;
    j["train"]["total_alternations"] = 2;
    const fs::path cfg_path = work / "diverge.json";
    std::ofstream(cfg_path) << j.dump();
    CHECK(run("train --config " + cfg_path.string() + " --out " +
              (work / "div_out").string()) == 3);
  }
  SUBCASE("happy path: generate/train/attack/report all exit 0") {
    const fs::path cfg_path = work / "ok.json";
    std::ofstream(cfg_path) << tiny_config_json().dump();
    CHECK(run("generate --config " + cfg_path.string() + " --out " +
              (work / "data").string()) == 0);
    CHECK(run("train --config " + cfg_path.string() + " --out " +
              (work / "run").string()) == 0);
    CHECK(run("attack --config " + cfg_path.string() + " --checkpoint " +
              (work / "run" / "step_15").string() + " --out " +
              (work / "atk").string()) == 0);
    CHECK(run("report --out " + (work / "rep").string() + " " +
              (work / "atk").string()) == 0);
    CHECK(fs::exists(work / "rep" / "merged.csv"));
  }
  SUBCASE("missing config: exit 2") {
    CHECK(run("train --out " + (work / "y").string()) == 2);
  }
}
#endif
