#pragma once

// Command-line front end: gen-synthetic, train, eval, predict, zero-shot,
// sweep. Exit codes: 0 success, 2 usage or input error, 3 runtime failure.
// Every config key is also a flag of the same dotted name; flags override
// the config file, which overrides the defaults. EAEKIT_CONFIG names a
// default config file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eaekit/config.hpp"
#include "eaekit/corpus.hpp"
#include "eaekit/synthetic.hpp"
#include "eaekit/trainkit.hpp"

namespace eaekit::cli {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

inline void require_dir_writable(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory " + dir + ": " + ec.message());
  const std::string probe = dir + "/.write_probe";
  std::ofstream f(probe);
  if (!f) throw UsageError("output directory not writable: " + dir);
  f.close();
  fs::remove(probe, ec);
}

// Pre-scan for --config/-c so the file can seed the defaults before CLI11
// binds the remaining flags over them.
inline std::optional<std::string> find_config_arg(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" || args[i] == "-c") {
      if (i + 1 < args.size()) return args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      return args[i].substr(std::string("--config=").size());
    }
  }
  if (const char* env = std::getenv("EAEKIT_CONFIG")) {
    if (*env != '\0') return std::string(env);
  }
  return std::nullopt;
}

inline void register_config_flags(CLI::App* cmd, config::RunConfig& cfg) {
  // swallowed by the pre-scan; registered so it parses and shows in --help
  static std::string config_path_sink;
  cmd->add_option("-c,--config", config_path_sink,
                  "flat key=value config file (also via EAEKIT_CONFIG)");
  for (auto& b : config::bindings(cfg)) {
    std::visit([cmd, &b](auto* ptr) { cmd->add_option("--" + b.key, *ptr, b.help); }, b.target);
  }
}

inline corpus::Schema parse_schema(const std::string& s) {
  if (s == "unified") return corpus::Schema::Unified;
  if (s == "sentence") return corpus::Schema::SentenceStyle;
  if (s == "document") return corpus::Schema::DocumentStyle;
  throw UsageError("unknown schema '" + s + "' (expected unified|sentence|document)");
}

inline void write_split(const std::string& dir, const char* name,
                        const std::vector<corpus::EventInstance>& data) {
  corpus::save_dataset(dir + "/" + name, data);
}

inline void print_stats(const std::string& label, const std::vector<corpus::EventInstance>& data) {
  const auto st = corpus::corpus_stats(data);
  std::cout << label << ": docs=" << st.n_docs << " events=" << st.n_events
            << " args=" << st.n_args << "\n";
}

}  // namespace detail

// --- command bodies ------------------------------------------------------

struct GenSyntheticArgs {
  std::uint64_t seed = 0;
  int n1 = 200;
  int n2 = 200;
  int n3 = 0;
  double overlap = 0.5;
  std::string out_dir;
};

inline void run_gen_synthetic(const GenSyntheticArgs& a) {
  using namespace detail;
  if (a.n1 <= 0 || a.n2 <= 0) throw UsageError("--n1 and --n2 must be positive");
  if (a.overlap < 0.0 || a.overlap > 1.0) throw UsageError("--overlap must be in [0,1]");
  require_dir_writable(a.out_dir);
  require_dir_writable(a.out_dir + "/d1");
  require_dir_writable(a.out_dir + "/d2");

  const auto side = [](int n) { return std::max(2, n / 5); };
  const auto train = corpus::make_synthetic_corpora(a.seed, a.n1, a.n2, a.overlap, "train", 0);
  const auto dev = corpus::make_synthetic_corpora(a.seed, side(a.n1), side(a.n2), a.overlap, "dev", 1);
  const auto test = corpus::make_synthetic_corpora(a.seed, side(a.n1), side(a.n2), a.overlap, "test", 2);

  write_split(a.out_dir + "/d1", "train.jsonl", train.d1);
  write_split(a.out_dir + "/d1", "dev.jsonl", dev.d1);
  write_split(a.out_dir + "/d1", "test.jsonl", test.d1);
  write_split(a.out_dir + "/d2", "train.jsonl", train.d2);
  write_split(a.out_dir + "/d2", "dev.jsonl", dev.d2);
  write_split(a.out_dir + "/d2", "test.jsonl", test.d2);

  auto templates = train.templates;
  if (a.n3 > 0) {
    require_dir_writable(a.out_dir + "/d3");
    const auto zs = corpus::make_zero_shot_corpus(a.seed, a.n3, "test");
    write_split(a.out_dir + "/d3", "test.jsonl", zs.instances);
    templates.insert(zs.templates.begin(), zs.templates.end());
    print_stats("d3/test", zs.instances);
  }
  prompts::save_template_registry(a.out_dir + "/templates.tsv", templates);

  std::cout << "shared event types: " << train.n_shared_types << "\n";
  print_stats("d1/train", train.d1);
  print_stats("d1/dev", dev.d1);
  print_stats("d1/test", test.d1);
  print_stats("d2/train", train.d2);
  print_stats("d2/dev", dev.d2);
  print_stats("d2/test", test.d2);
}

struct TrainArgs {
  std::string d1_dir;
  std::string d2_dir;
  std::string templates_path;
  std::string out_dir;
  config::RunConfig cfg;
};

inline void run_train(const TrainArgs& a) {
  using namespace detail;
  require_file(a.templates_path, "template registry");
  require_file(a.d1_dir + "/train.jsonl", "d1 train split");
  if (!a.d2_dir.empty()) require_file(a.d2_dir + "/train.jsonl", "d2 train split");
  require_dir_writable(a.out_dir);

  const auto registry = prompts::load_template_registry(a.templates_path);
  const auto d1 = trainkit::load_splits(a.d1_dir);
  std::optional<trainkit::DataSplits> d2;
  if (!a.d2_dir.empty()) d2 = trainkit::load_splits(a.d2_dir);
  if (a.cfg.ssp_enabled && !d2) {
    throw UsageError("--d2 is required while ssp.enabled=true (pass --ssp.enabled false to train a "
                     "single-dataset extractor)");
  }

  auto tm = trainkit::train(d1, d2 ? &*d2 : nullptr, registry, a.cfg);
  trainkit::write_metrics_log(a.out_dir + "/metrics.jsonl", tm.result.log_rows);
  trainkit::save_checkpoint(a.out_dir + "/checkpoint.bin", *tm.model, a.cfg,
                            tm.result.best_dev_arg_c, tm.result.best_epoch);
  {
    std::ofstream snap(a.out_dir + "/config.snapshot");
    for (const auto& [k, v] : config::to_flat_map(a.cfg)) snap << k << " = " << v << "\n";
  }
  std::cout << "best dev arg-c " << tm.result.best_dev_arg_c << " at epoch "
            << tm.result.best_epoch << "\n"
            << "checkpoint: " << a.out_dir << "/checkpoint.bin\n";
}

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::string templates_path;
  std::string schema = "unified";
  std::string report_path;   // optional
  std::string preds_path;    // optional (predict/zero-shot)
  bool shared_path = false;  // zero-shot
};

inline void run_eval_like(const EvalArgs& a, bool want_report) {
  using namespace detail;
  require_file(a.model_path, "checkpoint");
  require_file(a.data_path, "dataset");
  require_file(a.templates_path, "template registry");

  auto ck = trainkit::load_checkpoint(a.model_path);
  const auto registry = prompts::load_template_registry(a.templates_path);
  const auto data = corpus::load_dataset(a.data_path, parse_schema(a.schema));

  std::vector<extractor::Prediction> preds;
  if (a.shared_path) {
    preds = trainkit::zero_shot_predict(*ck.model, data, registry);
  } else {
    for (const auto& inst : data) {
      const auto pi = model::prepare(inst, registry, ck.model->vocab(),
                                     ck.cfg.backbone.max_encoder_len);
      auto p = model::predict_instance(*ck.model, pi, model::PredictPath::Auto);
      preds.insert(preds.end(), p.begin(), p.end());
    }
  }
  if (!a.preds_path.empty()) extractor::save_predictions(a.preds_path, preds);

  if (want_report) {
    const auto report = evalkit::compute_metrics(evalkit::group_predictions(preds), data);
    std::cout << evalkit::to_table(report);
    if (!a.report_path.empty()) {
      std::ofstream out(a.report_path);
      if (!out) throw UsageError("cannot write report: " + a.report_path);
      out << evalkit::to_json(report).dump(2) << "\n";
    }
  }
}

struct SweepArgs {
  std::string source_dir;
  std::string target_dir;
  std::string templates_path;
  std::string out_path;
  std::vector<int> k_list = {0, 10, 50, 100, 200};
  std::vector<std::uint64_t> seeds;
  config::RunConfig cfg;
};

inline void run_sweep(const SweepArgs& a) {
  using namespace detail;
  require_file(a.templates_path, "template registry");
  require_file(a.source_dir + "/train.jsonl", "source train split");
  require_file(a.target_dir + "/train.jsonl", "target train split");

  const auto registry = prompts::load_template_registry(a.templates_path);
  const auto source = trainkit::load_splits(a.source_dir, true);
  const auto target = trainkit::load_splits(a.target_dir, true);
  auto seeds = a.seeds;
  if (seeds.empty()) seeds.push_back(a.cfg.seed);

  const auto rows = trainkit::low_resource_sweep(source, target, registry, a.k_list, seeds, a.cfg);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back(trainkit::to_json(r));
  if (!a.out_path.empty()) {
    std::ofstream f(a.out_path);
    if (!f) throw UsageError("cannot write results table: " + a.out_path);
    f << out.dump(2) << "\n";
  }
  std::cout << out.dump(2) << "\n";
}

// --- entry point -----------------------------------------------------------

inline int run(std::vector<std::string> args) {
  CLI::App app{"multi-format event argument extraction toolkit"};
  app.require_subcommand(1);

  GenSyntheticArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-synthetic", "write synthetic multi-format corpora");
  cmd_gen->add_option("--seed", gen.seed, "generator seed");
  cmd_gen->add_option("--n1", gen.n1, "train size of corpus 1");
  cmd_gen->add_option("--n2", gen.n2, "train size of corpus 2");
  cmd_gen->add_option("--n3", gen.n3, "held-out zero-shot test size (0 = skip)");
  cmd_gen->add_option("--overlap", gen.overlap, "fraction of event types shared across corpora");
  cmd_gen->add_option("--out-dir", gen.out_dir, "output directory")->required();

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "train on one or two corpora");
  cmd_train->add_option("--d1", train.d1_dir, "corpus 1 directory (train/dev[/test].jsonl)")->required();
  cmd_train->add_option("--d2", train.d2_dir, "corpus 2 directory");
  cmd_train->add_option("--templates", train.templates_path, "template registry file")->required();
  cmd_train->add_option("--out", train.out_dir, "output directory")->required();
  detail::register_config_flags(cmd_train, train.cfg);

  EvalArgs eval_args;
  auto* cmd_eval = app.add_subcommand("eval", "score a checkpoint against gold data");
  EvalArgs predict_args;
  auto* cmd_predict = app.add_subcommand("predict", "dump per-slot span predictions");
  EvalArgs zs_args;
  zs_args.shared_path = true;
  auto* cmd_zs = app.add_subcommand("zero-shot", "predict an unseen format via the shared extractor");
  for (auto [cmd, a] : {std::pair{cmd_eval, &eval_args}, std::pair{cmd_predict, &predict_args},
                        std::pair{cmd_zs, &zs_args}}) {
    cmd->add_option("--model", a->model_path, "checkpoint file")->required();
    cmd->add_option("--data", a->data_path, "dataset file (JSONL)")->required();
    cmd->add_option("--templates", a->templates_path, "template registry file")->required();
    cmd->add_option("--schema", a->schema, "input schema: unified|sentence|document");
    cmd->add_option("--report", a->report_path, "write the metrics report JSON here");
    cmd->add_option("--preds", a->preds_path, "write the prediction dump JSONL here");
  }
  cmd_predict->get_option("--preds")->required();

  SweepArgs sweep;
  auto* cmd_sweep = app.add_subcommand("sweep", "low-resource transfer sweep over k target samples");
  cmd_sweep->add_option("--d1", sweep.source_dir, "source corpus directory")->required();
  cmd_sweep->add_option("--d2", sweep.target_dir, "target corpus directory")->required();
  cmd_sweep->add_option("--templates", sweep.templates_path, "template registry file")->required();
  cmd_sweep->add_option("--out", sweep.out_path, "results table JSON");
  cmd_sweep->add_option("--k-list", sweep.k_list, "target sample counts")->delimiter(',');
  cmd_sweep->add_option("--seeds", sweep.seeds, "one run per seed")->delimiter(',');
  detail::register_config_flags(cmd_sweep, sweep.cfg);

  // config file seeds the defaults; explicit flags then win during parse
  try {
    if (const auto cfg_path = detail::find_config_arg(args)) {
      detail::require_file(*cfg_path, "config file");
      config::apply_config_file(train.cfg, *cfg_path);
      config::apply_config_file(sweep.cfg, *cfg_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    // CLI11's vector overload consumes the args back to front
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_gen->parsed()) run_gen_synthetic(gen);
    if (cmd_train->parsed()) run_train(train);
    if (cmd_eval->parsed()) run_eval_like(eval_args, true);
    if (cmd_predict->parsed()) run_eval_like(predict_args, false);
    if (cmd_zs->parsed()) run_eval_like(zs_args, true);
    if (cmd_sweep->parsed()) run_sweep(sweep);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const trainkit::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

inline int run_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args));
}

}  // namespace eaekit::cli
