#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "eaekit/cli.hpp"

namespace fs = std::filesystem;
using eaekit::cli::run;

namespace {

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "eaekit_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// small-everything flags so CLI training finishes in well under a second
std::vector<std::string> tiny_flags() {
  return {"--model.d_model", "8",  "--model.n_layers", "1", "--model.n_heads", "2",
          "--model.ffn_mult", "2", "--train.epochs",   "2", "--train.batch_size", "4",
          "--train.lr", "3e-3"};
}

void append(std::vector<std::string>& args, const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
}

}  // namespace

TEST_CASE("gen-synthetic writes six splits plus the registry, deterministically") {
  const auto dir_a = fresh_dir("gen_a");
  const auto dir_b = fresh_dir("gen_b");
  for (const auto& dir : {dir_a, dir_b}) {
    REQUIRE(run({"gen-synthetic", "--seed", "3", "--n1", "12", "--n2", "10", "--overlap", "0.5",
                 "--n3", "6", "--out-dir", dir}) == 0);
  }
  for (const char* rel : {"d1/train.jsonl", "d1/dev.jsonl", "d1/test.jsonl", "d2/train.jsonl",
                          "d2/dev.jsonl", "d2/test.jsonl", "d3/test.jsonl", "templates.tsv"}) {
    INFO(rel);
    REQUIRE(fs::exists(fs::path(dir_a) / rel));
    CHECK(slurp(dir_a + "/" + rel) == slurp(dir_b + "/" + rel));
  }
  CHECK(eaekit::corpus::load_dataset(dir_a + "/d1/train.jsonl").size() == 12);
  CHECK(eaekit::corpus::load_dataset(dir_a + "/d2/train.jsonl").size() == 10);
}

TEST_CASE("gen-synthetic rejects an unwritable output path with exit 2") {
  CHECK(run({"gen-synthetic", "--out-dir", "/proc/definitely/not/writable"}) == 2);
}

TEST_CASE("train then eval, predict, and zero-shot round-trip through files") {
  const auto data_dir = fresh_dir("pipeline_data");
  REQUIRE(run({"gen-synthetic", "--seed", "4", "--n1", "6", "--n2", "6", "--n3", "4", "--overlap",
               "0.5", "--out-dir", data_dir}) == 0);

  const auto run_dir = fresh_dir("pipeline_run");
  std::vector<std::string> targs = {"train",       "--d1",  data_dir + "/d1",
                                    "--d2",        data_dir + "/d2",
                                    "--templates", data_dir + "/templates.tsv",
                                    "--out",       run_dir};
  append(targs, tiny_flags());
  REQUIRE(run(targs) == 0);
  REQUIRE(fs::exists(run_dir + "/checkpoint.bin"));
  REQUIRE(fs::exists(run_dir + "/metrics.jsonl"));
  REQUIRE(fs::exists(run_dir + "/config.snapshot"));

  // metrics log is valid JSONL with one row per epoch
  {
    std::ifstream log(run_dir + "/metrics.jsonl");
    std::string line;
    int rows = 0;
    while (std::getline(log, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("train_loss"));
      ++rows;
    }
    CHECK(rows == 2);
  }

  const auto report_path = run_dir + "/report.json";
  REQUIRE(run({"eval", "--model", run_dir + "/checkpoint.bin", "--data", data_dir + "/d1/test.jsonl",
               "--templates", data_dir + "/templates.tsv", "--report", report_path}) == 0);
  const auto report = nlohmann::json::parse(slurp(report_path));
  CHECK(report.contains("arg_i"));
  CHECK(report.contains("arg_c"));
  CHECK(report.contains("head_c"));

  const auto preds_path = run_dir + "/preds.jsonl";
  REQUIRE(run({"predict", "--model", run_dir + "/checkpoint.bin", "--data",
               data_dir + "/d1/test.jsonl", "--templates", data_dir + "/templates.tsv", "--preds",
               preds_path}) == 0);
  {
    std::ifstream preds(preds_path);
    std::string line;
    int rows = 0;
    while (std::getline(preds, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("id"));
      CHECK(j.contains("role"));
      CHECK(j.contains("slot"));
      CHECK(j.contains("span"));
      CHECK(j.contains("score"));
      ++rows;
    }
    CHECK(rows > 0);
  }

  const auto zs_report = run_dir + "/zs_report.json";
  REQUIRE(run({"zero-shot", "--model", run_dir + "/checkpoint.bin", "--data",
               data_dir + "/d3/test.jsonl", "--templates", data_dir + "/templates.tsv", "--report",
               zs_report}) == 0);
  REQUIRE(fs::exists(zs_report));

  // a missing template registry is a usage error
  CHECK(run({"eval", "--model", run_dir + "/checkpoint.bin", "--data", data_dir + "/d1/test.jsonl",
             "--templates", data_dir + "/nope.tsv"}) == 2);
}

TEST_CASE("a short training run logs a mostly monotone-decreasing loss curve") {
  const auto data_dir = fresh_dir("mono_data");
  REQUIRE(run({"gen-synthetic", "--seed", "8", "--n1", "8", "--n2", "8", "--out-dir", data_dir}) == 0);
  const auto run_dir = fresh_dir("mono_run");
  std::vector<std::string> args = {"train",       "--d1",  data_dir + "/d1",
                                   "--d2",        data_dir + "/d2",
                                   "--templates", data_dir + "/templates.tsv",
                                   "--out",       run_dir};
  auto flags = tiny_flags();
  for (std::size_t i = 0; i + 1 < flags.size(); ++i) {
    if (flags[i] == "--train.epochs") flags[i + 1] = "6";
  }
  append(args, flags);
  REQUIRE(run(args) == 0);

  std::vector<double> losses;
  std::ifstream log(run_dir + "/metrics.jsonl");
  std::string line;
  while (std::getline(log, line)) {
    losses.push_back(nlohmann::json::parse(line).at("train_loss").get<double>());
  }
  REQUIRE(losses.size() == 6);
  int decreasing = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] < losses[i - 1]) ++decreasing;
  }
  CHECK(decreasing >= 4);
}

TEST_CASE("config file values apply and explicit flags override them") {
  const auto dir = fresh_dir("config");
  const auto cfg_path = dir + "/run.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "# comment line\n";
    cfg << "model.d_model = 8\n";
    cfg << "model.n_layers = 1\n";
    cfg << "model.n_heads = 2\n";
    cfg << "model.ffn_mult = 2\n";
    cfg << "train.epochs = 1\n";
    cfg << "train.batch_size = 4\n";
    cfg << "vib.beta = 0.25\n";
  }
  const auto data_dir = fresh_dir("config_data");
  REQUIRE(run({"gen-synthetic", "--seed", "5", "--n1", "4", "--n2", "4", "--out-dir", data_dir}) == 0);

  const auto run_dir = fresh_dir("config_run");
  REQUIRE(run({"train", "--d1", data_dir + "/d1", "--d2", data_dir + "/d2", "--templates",
               data_dir + "/templates.tsv", "--out", run_dir, "--config", cfg_path,
               "--train.epochs", "2"}) == 0);
  const auto snapshot = slurp(run_dir + "/config.snapshot");
  CHECK(snapshot.find("vib.beta = 0.25") != std::string::npos);   // from the file
  CHECK(snapshot.find("train.epochs = 2") != std::string::npos);  // flag wins
  CHECK(snapshot.find("model.d_model = 8") != std::string::npos);

  // the environment variable names a default config file
  setenv("EAEKIT_CONFIG", cfg_path.c_str(), 1);
  const auto env_run_dir = fresh_dir("config_env_run");
  REQUIRE(run({"train", "--d1", data_dir + "/d1", "--d2", data_dir + "/d2", "--templates",
               data_dir + "/templates.tsv", "--out", env_run_dir}) == 0);
  CHECK(slurp(env_run_dir + "/config.snapshot").find("vib.beta = 0.25") != std::string::npos);
  unsetenv("EAEKIT_CONFIG");

  // unknown keys are rejected
  {
    std::ofstream cfg(cfg_path, std::ios::app);
    cfg << "not.a_key = 1\n";
  }
  CHECK(run({"train", "--d1", data_dir + "/d1", "--d2", data_dir + "/d2", "--templates",
             data_dir + "/templates.tsv", "--out", run_dir, "--config", cfg_path}) == 2);
}

TEST_CASE("unknown flags and missing subcommands are usage errors") {
  CHECK(run({"train", "--no-such-flag", "x"}) == 2);
  CHECK(run({}) == 2);
  CHECK(run({"--help"}) == 0);
}

TEST_CASE("two CLI runs with the same seed write identical metrics logs") {
  const auto data_dir = fresh_dir("repro_data");
  REQUIRE(run({"gen-synthetic", "--seed", "9", "--n1", "6", "--n2", "6", "--out-dir", data_dir}) == 0);
  std::vector<std::string> base = {"--d1",        data_dir + "/d1",
                                   "--d2",        data_dir + "/d2",
                                   "--templates", data_dir + "/templates.tsv"};
  append(base, tiny_flags());
  base.insert(base.end(), {"--train.seed", "99"});

  std::string logs[2];
  for (int i = 0; i < 2; ++i) {
    const auto run_dir = fresh_dir("repro_run_" + std::to_string(i));
    std::vector<std::string> args = {"train", "--out", run_dir};
    append(args, base);
    REQUIRE(run(args) == 0);
    logs[i] = slurp(run_dir + "/metrics.jsonl");
  }
  CHECK(logs[0] == logs[1]);
}

TEST_CASE("a diverging run exits with code 3") {
  const auto data_dir = fresh_dir("diverge_data");
  REQUIRE(run({"gen-synthetic", "--seed", "10", "--n1", "4", "--n2", "4", "--out-dir", data_dir}) == 0);
  const auto run_dir = fresh_dir("diverge_run");
  std::vector<std::string> args = {"train",       "--d1",  data_dir + "/d1",
                                   "--d2",        data_dir + "/d2",
                                   "--templates", data_dir + "/templates.tsv",
                                   "--out",       run_dir};
  auto flags = tiny_flags();
  for (std::size_t i = 0; i + 1 < flags.size(); ++i) {
    if (flags[i] == "--train.lr") flags[i + 1] = "1e150";
    if (flags[i] == "--train.epochs") flags[i + 1] = "4";
  }
  append(args, flags);
  args.insert(args.end(), {"--train.grad_clip", "0"});
  CHECK(run(args) == 3);
}

TEST_CASE("sweep emits its results table") {
  const auto data_dir = fresh_dir("sweep_data");
  REQUIRE(run({"gen-synthetic", "--seed", "6", "--n1", "6", "--n2", "6", "--out-dir", data_dir}) == 0);
  const auto out_path = data_dir + "/results.json";
  std::vector<std::string> args = {"sweep",       "--d1",  data_dir + "/d1",
                                   "--d2",        data_dir + "/d2",
                                   "--templates", data_dir + "/templates.tsv",
                                   "--out",       out_path,
                                   "--k-list",    "0,2",
                                   "--seeds",     "3"};
  append(args, tiny_flags());
  REQUIRE(run(args) == 0);
  const auto rows = nlohmann::json::parse(slurp(out_path));
  REQUIRE(rows.is_array());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("k") == 0);
  CHECK(rows[1].at("k") == 2);
  for (const auto& r : rows) {
    CHECK(r.contains("seed"));
    CHECK(r.contains("arg_c"));
  }
}
