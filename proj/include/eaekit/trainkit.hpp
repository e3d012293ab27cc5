#pragma once

// Joint training over two datasets with round-robin batching, dev-set model
// selection on mean Arg-C, checkpointing, zero-shot prediction through the
// shared extractor, and the low-resource sweep.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eaekit/config.hpp"
#include "eaekit/corpus.hpp"
#include "eaekit/evalkit.hpp"
#include "eaekit/model.hpp"
#include "eaekit/optim.hpp"
#include "eaekit/prompts.hpp"

namespace eaekit::trainkit {

using json = nlohmann::json;

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct DataSplits {
  std::vector<corpus::EventInstance> train;
  std::vector<corpus::EventInstance> dev;
  std::vector<corpus::EventInstance> test;
};

inline DataSplits load_splits(const std::string& dir, bool need_test = false) {
  DataSplits out;
  out.train = corpus::load_dataset(dir + "/train.jsonl");
  out.dev = corpus::load_dataset(dir + "/dev.jsonl");
  std::ifstream probe(dir + "/test.jsonl");
  if (probe.good() || need_test) out.test = corpus::load_dataset(dir + "/test.jsonl");
  return out;
}

// --- evaluation helpers --------------------------------------------------

inline std::vector<evalkit::InstancePredictions> predict_all(
    model::Model& m, const std::vector<model::PreparedInstance>& prepared,
    model::PredictPath path, std::mt19937_64* eval_noise_rng = nullptr) {
  std::vector<extractor::Prediction> flat;
  for (const auto& pi : prepared) {
    auto preds = model::predict_instance(m, pi, path, eval_noise_rng);
    flat.insert(flat.end(), preds.begin(), preds.end());
  }
  return evalkit::group_predictions(flat);
}

inline evalkit::MetricsReport evaluate(model::Model& m,
                                       const std::vector<model::PreparedInstance>& prepared,
                                       const std::vector<corpus::EventInstance>& golds,
                                       model::PredictPath path = model::PredictPath::Auto) {
  return evalkit::compute_metrics(predict_all(m, prepared, path), golds);
}

// --- checkpointing -------------------------------------------------------

struct Checkpoint {
  static constexpr char kMagic[8] = {'E', 'A', 'E', 'K', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  config::RunConfig cfg;
  std::vector<std::string> vocab_tokens;
  double dev_metric = 0.0;
  int dev_epoch = -1;
  std::unique_ptr<model::Model> model;
};

inline void save_checkpoint(const std::string& path, model::Model& m,
                            const config::RunConfig& cfg, double dev_metric, int dev_epoch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(Checkpoint::kMagic, sizeof(Checkpoint::kMagic));
  const std::uint32_t version = Checkpoint::kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));

  json meta{{"config", config::to_flat_map(cfg)},
            {"vocab", m.vocab().tokens()},
            {"dev_metric", dev_metric},
            {"dev_epoch", dev_epoch}};
  const std::string meta_str = meta.dump();
  const std::uint64_t meta_len = meta_str.size();
  out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  const ParamList params = m.params();
  const std::uint64_t n_tensors = params.size();
  out.write(reinterpret_cast<const char*>(&n_tensors), sizeof(n_tensors));
  for (const Param* p : params) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
    out.write(p->name.data(), name_len);
    const std::uint32_t rows = static_cast<std::uint32_t>(p->value.rows);
    const std::uint32_t cols = static_cast<std::uint32_t>(p->value.cols);
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(p->value.a.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, Checkpoint::kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t meta_len = 0;
  in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  const json meta = json::parse(meta_str);

  Checkpoint ck;
  ck.cfg = config::from_flat_map(meta.at("config").get<std::map<std::string, std::string>>());
  ck.vocab_tokens = meta.at("vocab").get<std::vector<std::string>>();
  ck.dev_metric = meta.at("dev_metric").get<double>();
  ck.dev_epoch = meta.at("dev_epoch").get<int>();

  ck.model = std::make_unique<model::Model>(config::to_model_config(ck.cfg),
                                            backbone::Vocab::from_tokens(ck.vocab_tokens), ck.cfg.seed);

  std::map<std::string, Param*> by_name;
  for (Param* p : ck.model->params()) by_name[p->name] = p;

  std::uint64_t n_tensors = 0;
  in.read(reinterpret_cast<char*>(&n_tensors), sizeof(n_tensors));
  std::size_t filled = 0;
  for (std::uint64_t t = 0; t < n_tensors; ++t) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint tensor '" + name + "' has no home");
    Param& p = *it->second;
    if (p.value.rows != static_cast<int>(rows) || p.value.cols != static_cast<int>(cols)) {
      throw std::runtime_error("checkpoint tensor '" + name + "' shape mismatch");
    }
    in.read(reinterpret_cast<char*>(p.value.a.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    ++filled;
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  if (filled != by_name.size()) {
    throw std::runtime_error("checkpoint is missing tensors (" + std::to_string(filled) + "/" +
                             std::to_string(by_name.size()) + ")");
  }
  return ck;
}

// --- training ------------------------------------------------------------

struct TrainResult {
  std::vector<json> log_rows;
  double best_dev_arg_c = 0.0;
  int best_epoch = -1;
};

struct TrainedModel {
  std::unique_ptr<model::Model> model;
  TrainResult result;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  return idx;
}

}  // namespace detail

// Trains on one or two corpora. With the shared-specific architecture each
// optimizer step draws one batch from each dataset (the smaller one cycles);
// without it the corpora are merged into a single stream. After every epoch
// both dev splits are scored with Arg-C and the best-mean checkpoint is
// retained; dev splits whose corpus has no training data are excluded from
// the selection metric.
inline TrainedModel train(const DataSplits& d1, const DataSplits* d2,
                          const prompts::TemplateRegistry& registry, const config::RunConfig& cfg) {
  if (d1.train.empty() && (d2 == nullptr || d2->train.empty())) {
    throw std::invalid_argument("train: no training data");
  }
  if (cfg.ssp_enabled && d2 == nullptr) {
    throw std::invalid_argument(
        "train: the shared-specific architecture needs a second dataset (it may have an empty "
        "train split); disable ssp.enabled for single-dataset training");
  }

  std::vector<const std::vector<corpus::EventInstance>*> vocab_sources{&d1.train};
  if (d2 != nullptr) vocab_sources.push_back(&d2->train);
  std::map<std::string, std::string> template_texts;
  for (const auto& [event_type, tmpl] : registry) {
    template_texts[event_type] = prompts::serialize_template(tmpl);
  }
  backbone::Vocab vocab = backbone::Vocab::build(vocab_sources, template_texts);

  TrainedModel tm;
  tm.model = std::make_unique<model::Model>(config::to_model_config(cfg), vocab, cfg.seed);
  model::Model& m = *tm.model;

  const int max_len = cfg.backbone.max_encoder_len;
  auto prep1 = model::prepare_all(d1.train, registry, vocab, max_len);
  auto prep1_dev = model::prepare_all(d1.dev, registry, vocab, max_len);
  std::vector<model::PreparedInstance> prep2, prep2_dev;
  if (d2 != nullptr) {
    prep2 = model::prepare_all(d2->train, registry, vocab, max_len);
    prep2_dev = model::prepare_all(d2->dev, registry, vocab, max_len);
  }

  // Merged stream for the basic (no-SSP) extractor.
  std::vector<const model::PreparedInstance*> merged;
  if (!cfg.ssp_enabled) {
    for (const auto& pi : prep1) merged.push_back(&pi);
    for (const auto& pi : prep2) merged.push_back(&pi);
  }

  const ParamList params = m.params();
  Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 dropout_rng(mix_seed(cfg.seed, 11));
  std::mt19937_64 noise_rng(mix_seed(cfg.seed, 12));

  std::vector<Mat> best_params;
  double best_dev = -1.0;
  int best_epoch = -1;

  const int B = std::max(1, cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 order_rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0, ssp_sum = 0.0, vib_sum = 0.0;
    long n_seen = 0;

    auto run_step = [&](const model::Batch& b1, const model::Batch& b2) {
      Graph g(true, &dropout_rng);
      Var l_ssp = model::ssp_loss(g, m, b1, b2);
      Var l_total = l_ssp;
      double vib_val = 0.0;
      if (cfg.ssp_enabled && cfg.vib_enabled) {
        Var l_vib = model::shared_vib_loss(g, m, b1, b2, noise_rng);
        vib_val = g.val(l_vib).a[0];
        l_total = model::total_loss(g, l_ssp, l_vib);
      }
      const double step_loss = g.val(l_total).a[0];
      if (!std::isfinite(step_loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ": loss = " + std::to_string(step_loss));
      }
      g.backward(l_total);
      clip_global_norm(params, cfg.grad_clip);
      adam.step(params);
      zero_grads(params);
      loss_sum += step_loss;
      ssp_sum += g.val(l_ssp).a[0];
      vib_sum += vib_val;
      n_seen += static_cast<long>(b1.size() + b2.size());
    };

    if (cfg.ssp_enabled) {
      auto idx1 = detail::shuffled_indices(prep1.size(), order_rng);
      auto idx2 = detail::shuffled_indices(prep2.size(), order_rng);
      const std::size_t driver = std::max(idx1.size(), idx2.size());
      if (driver == 0) throw std::invalid_argument("train: both train splits are empty");
      const std::size_t steps = (driver + B - 1) / B;
      std::size_t cursor1 = 0, cursor2 = 0;
      auto take = [B](const std::vector<std::size_t>& idx,
                      const std::vector<model::PreparedInstance>& prep, std::size_t& cursor,
                      bool is_driver) {
        model::Batch batch;
        if (idx.empty()) return batch;
        const std::size_t want = is_driver
                                     ? std::min<std::size_t>(B, idx.size() - cursor % idx.size())
                                     : std::min<std::size_t>(B, idx.size());
        for (std::size_t j = 0; j < want; ++j) {
          batch.push_back(&prep[idx[(cursor + j) % idx.size()]]);
        }
        cursor += want;
        return batch;
      };
      const bool d1_drives = idx1.size() >= idx2.size();
      for (std::size_t s = 0; s < steps; ++s) {
        model::Batch b1 = take(idx1, prep1, cursor1, d1_drives);
        model::Batch b2 = take(idx2, prep2, cursor2, !d1_drives);
        run_step(b1, b2);
      }
    } else {
      auto idx = detail::shuffled_indices(merged.size(), order_rng);
      const std::size_t steps = (idx.size() + B - 1) / B;
      for (std::size_t s = 0; s < steps; ++s) {
        model::Batch b;
        for (std::size_t j = s * B; j < std::min(idx.size(), (s + 1) * B); ++j) {
          b.push_back(merged[idx[j]]);
        }
        run_step(b, {});
      }
    }

    double dev1 = 0.0, dev2 = 0.0, dev_mean = 0.0;
    int dev_terms = 0;
    if (!prep1_dev.empty() && !prep1.empty()) {
      dev1 = evaluate(m, prep1_dev, d1.dev).arg_c.f1;
      dev_mean += dev1;
      ++dev_terms;
    }
    if (d2 != nullptr && !prep2_dev.empty() && !prep2.empty()) {
      dev2 = evaluate(m, prep2_dev, d2->dev).arg_c.f1;
      dev_mean += dev2;
      ++dev_terms;
    }
    dev_mean = dev_terms > 0 ? dev_mean / dev_terms : 0.0;

    if (dev_mean > best_dev) {
      best_dev = dev_mean;
      best_epoch = epoch;
      best_params.clear();
      for (const Param* p : params) best_params.push_back(p->value);
    }

    tm.result.log_rows.push_back(json{{"epoch", epoch},
                                      {"train_loss", n_seen > 0 ? loss_sum / n_seen : 0.0},
                                      {"loss_ssp", n_seen > 0 ? ssp_sum / n_seen : 0.0},
                                      {"loss_vib", n_seen > 0 ? vib_sum / n_seen : 0.0},
                                      {"dev_arg_c_d1", dev1},
                                      {"dev_arg_c_d2", dev2},
                                      {"dev_arg_c_mean", dev_mean}});
  }

  // Leave the model at its best-dev state so the in-memory model matches
  // what save_checkpoint writes.
  if (!best_params.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  }
  tm.result.best_dev_arg_c = std::max(best_dev, 0.0);
  tm.result.best_epoch = best_epoch;
  return tm;
}

inline void write_metrics_log(const std::string& path, const std::vector<json>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics log: " + path);
  for (const auto& row : rows) out << row.dump() << "\n";
}

// --- zero-shot -------------------------------------------------------------

// Predictions for an unseen-format corpus through the format-shared
// extractor alone: no gate, no format-specific path, shared classifier head.
inline std::vector<extractor::Prediction> zero_shot_predict(
    model::Model& m, const std::vector<corpus::EventInstance>& instances,
    const prompts::TemplateRegistry& registry) {
  if (!m.has_shared_extractor()) {
    throw std::invalid_argument("zero-shot needs a model trained with ssp.enabled");
  }
  std::mt19937_64 eval_noise(mix_seed(0, 31));
  std::vector<extractor::Prediction> out;
  for (const auto& inst : instances) {
    const auto pi = model::prepare(inst, registry, m.vocab(), m.config().backbone.max_encoder_len);
    auto preds = model::predict_instance(m, pi, model::PredictPath::Shared, &eval_noise);
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

// --- low-resource sweep ------------------------------------------------

struct SweepRow {
  int k = 0;
  std::uint64_t seed = 0;
  double arg_i = 0.0;
  double arg_c = 0.0;
  double head_c = 0.0;
};

inline json to_json(const SweepRow& r) {
  return {{"k", r.k}, {"seed", r.seed}, {"arg_i", r.arg_i}, {"arg_c", r.arg_c}, {"head_c", r.head_c}};
}

// Trains full source + k target samples per (k, seed) and scores the target
// test split. k = 0 is zero-shot evaluation through the shared extractor.
inline std::vector<SweepRow> low_resource_sweep(const DataSplits& source, const DataSplits& target,
                                                const prompts::TemplateRegistry& registry,
                                                const std::vector<int>& k_list,
                                                const std::vector<std::uint64_t>& seeds,
                                                const config::RunConfig& base_cfg) {
  std::vector<SweepRow> rows;
  for (int k : k_list) {
    if (k < 0 || static_cast<std::size_t>(k) > target.train.size()) {
      throw std::invalid_argument("sweep: k=" + std::to_string(k) + " exceeds target train size " +
                                  std::to_string(target.train.size()));
    }
    for (std::uint64_t seed : seeds) {
      config::RunConfig cfg = base_cfg;
      cfg.seed = seed;
      DataSplits tk;
      tk.train = corpus::subsample(target.train, static_cast<std::size_t>(k), mix_seed(seed, 555));
      tk.dev = target.dev;

      TrainedModel tm = train(source, &tk, registry, cfg);
      evalkit::MetricsReport report;
      if (k == 0) {
        report = evalkit::compute_metrics(
            evalkit::group_predictions(zero_shot_predict(*tm.model, target.test, registry)),
            target.test);
      } else {
        const auto prep_test = model::prepare_all(target.test, registry, tm.model->vocab(),
                                                  cfg.backbone.max_encoder_len);
        report = evaluate(*tm.model, prep_test, target.test);
      }
      rows.push_back(SweepRow{k, seed, report.arg_i.f1, report.arg_c.f1, report.head_c.f1});
    }
  }
  return rows;
}

}  // namespace eaekit::trainkit
