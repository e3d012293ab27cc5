#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "eaekit/synthetic.hpp"
#include "eaekit/trainkit.hpp"

using namespace eaekit;
using namespace eaekit::trainkit;
namespace fs = std::filesystem;

namespace {

config::RunConfig tiny_run_config() {
  config::RunConfig cfg;
  cfg.backbone.d_model = 8;
  cfg.backbone.n_layers = 1;
  cfg.backbone.n_heads = 2;
  cfg.backbone.ffn_mult = 2;
  cfg.backbone.max_encoder_len = 40;
  cfg.backbone.max_decoder_len = 16;
  cfg.backbone.dropout = 0.1;
  cfg.lr = 3e-3;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.seed = 21;
  return cfg;
}

struct TinyData {
  DataSplits d1, d2;
  prompts::TemplateRegistry registry;

  explicit TinyData(int n = 4, std::uint64_t seed = 5) {
    const auto train = corpus::make_synthetic_corpora(seed, n, n, 0.5, "train", 0);
    const auto dev = corpus::make_synthetic_corpora(seed, 2, 2, 0.5, "dev", 1);
    d1.train = train.d1;
    d1.dev = dev.d1;
    d2.train = train.d2;
    d2.dev = dev.d2;
    for (const auto& [t, text] : train.templates) registry[t] = prompts::parse_template(t, text);
  }
};

std::string dump_rows(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

}  // namespace

TEST_CASE("one epoch of training lowers the loss on a tiny corpus") {
  TinyData data(8);
  auto cfg = tiny_run_config();
  cfg.epochs = 6;
  const auto tm = train(data.d1, &data.d2, data.registry, cfg);
  REQUIRE(tm.result.log_rows.size() == 6);
  const double first = tm.result.log_rows.front().at("train_loss").get<double>();
  const double last = tm.result.log_rows.back().at("train_loss").get<double>();
  CHECK(last < first);
}

TEST_CASE("the same seed reproduces the metrics log byte for byte") {
  TinyData data;
  const auto cfg = tiny_run_config();
  const auto a = train(data.d1, &data.d2, data.registry, cfg);
  const auto b = train(data.d1, &data.d2, data.registry, cfg);
  CHECK(dump_rows(a.result.log_rows) == dump_rows(b.result.log_rows));
  CHECK(a.result.best_dev_arg_c == b.result.best_dev_arg_c);

  auto other = cfg;
  other.seed = 22;
  const auto c = train(data.d1, &data.d2, data.registry, other);
  CHECK(dump_rows(c.result.log_rows) != dump_rows(a.result.log_rows));
}

TEST_CASE("checkpoints round-trip bitwise and reproduce the dev metric") {
  TinyData data;
  const auto cfg = tiny_run_config();
  auto tm = train(data.d1, &data.d2, data.registry, cfg);

  const auto dir = fs::temp_directory_path() / "eaekit_trainkit_tests";
  fs::create_directories(dir);
  const auto path = (dir / "ck.bin").string();
  save_checkpoint(path, *tm.model, cfg, tm.result.best_dev_arg_c, tm.result.best_epoch);

  auto ck = load_checkpoint(path);
  CHECK(ck.dev_metric == tm.result.best_dev_arg_c);
  CHECK(ck.dev_epoch == tm.result.best_epoch);
  CHECK(ck.cfg.seed == cfg.seed);

  const auto orig = tm.model->params();
  const auto loaded = ck.model->params();
  REQUIRE(orig.size() == loaded.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(orig[i]->name == loaded[i]->name);
    REQUIRE(orig[i]->value.size() == loaded[i]->value.size());
    for (std::size_t j = 0; j < orig[i]->value.size(); ++j) {
      REQUIRE(orig[i]->value.a[j] == loaded[i]->value.a[j]);
    }
  }

  // recomputing dev Arg-C from the loaded model gives the stored metric
  const auto prep1 = model::prepare_all(data.d1.dev, data.registry, ck.model->vocab(),
                                        cfg.backbone.max_encoder_len);
  const auto prep2 = model::prepare_all(data.d2.dev, data.registry, ck.model->vocab(),
                                        cfg.backbone.max_encoder_len);
  const double dev1 = evaluate(*ck.model, prep1, data.d1.dev).arg_c.f1;
  const double dev2 = evaluate(*ck.model, prep2, data.d2.dev).arg_c.f1;
  CHECK((dev1 + dev2) / 2.0 == ck.dev_metric);
}

TEST_CASE("ablation flags produce the four architectures with consistent parameter counts") {
  TinyData data;
  backbone::Vocab vocab = backbone::Vocab::build({&data.d1.train, &data.d2.train}, {});
  const int d = 8;

  auto count = [&](bool ssp, bool vib) {
    auto cfg = tiny_run_config();
    cfg.ssp_enabled = ssp;
    cfg.vib_enabled = vib;
    model::Model m(config::to_model_config(cfg), vocab, 1);
    return m.n_parameters();
  };

  const auto full = count(true, true);
  const auto wo_vib = count(true, false);
  const auto wo_ssp = count(false, false);
  const auto single = count(false, false);

  CHECK(full == wo_vib + 2 * static_cast<std::size_t>(d) * d);  // W_mu and W_sigma
  CHECK(wo_ssp == single);

  // three backbones plus three heads plus two gates against the single model
  auto cfg = tiny_run_config();
  model::Model single_m(config::to_model_config([&] {
                          auto c = cfg;
                          c.ssp_enabled = false;
                          c.vib_enabled = false;
                          return c;
                        }()),
                        vocab, 1);
  std::size_t backbone_params = 0, head_params = 0;
  for (Param* p : single_m.single_backbone().params(true)) backbone_params += p->value.size();
  for (Param* p : single_m.single_head().params()) head_params += p->value.size();
  const std::size_t gate_params = 2ul * d * d + d;
  CHECK(wo_vib == 3 * backbone_params + 3 * head_params + 2 * gate_params);

  // vib without ssp is coerced off
  auto coerced = tiny_run_config();
  coerced.ssp_enabled = false;
  coerced.vib_enabled = true;
  model::Model m(config::to_model_config(coerced), vocab, 1);
  CHECK(m.n_parameters() == single);
  CHECK(m.vib_params() == nullptr);
}

TEST_CASE("single-dataset training works with ssp disabled and rejects ssp") {
  TinyData data;
  auto cfg = tiny_run_config();
  cfg.ssp_enabled = false;
  cfg.epochs = 2;
  const auto tm = train(data.d1, nullptr, data.registry, cfg);
  CHECK(tm.result.log_rows.size() == 2);
  CHECK_FALSE(tm.model->has_shared_extractor());

  auto bad = tiny_run_config();
  bad.ssp_enabled = true;
  REQUIRE_THROWS_AS(train(data.d1, nullptr, data.registry, bad), std::invalid_argument);
}

TEST_CASE("zero-shot prediction runs through the shared extractor") {
  TinyData data;
  auto cfg = tiny_run_config();
  cfg.epochs = 2;
  auto tm = train(data.d1, &data.d2, data.registry, cfg);

  const auto zs = corpus::make_zero_shot_corpus(5, 6);
  prompts::TemplateRegistry zs_registry;
  for (const auto& [t, text] : zs.templates) zs_registry[t] = prompts::parse_template(t, text);

  const auto preds = zero_shot_predict(*tm.model, zs.instances, zs_registry);
  CHECK(!preds.empty());
  std::size_t expect = 0;
  for (const auto& inst : zs.instances) expect += zs_registry.at(inst.event_type).slots.size();
  CHECK(preds.size() == expect);

  // zero-shot differs from the fused path on a training-format instance
  const auto pi = model::prepare(data.d1.train[0], data.registry, tm.model->vocab(), 40);
  const auto fused = model::predict_instance(*tm.model, pi, model::PredictPath::Auto);
  const auto shared = model::predict_instance(*tm.model, pi, model::PredictPath::Shared);
  REQUIRE(fused.size() == shared.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < fused.size(); ++i) {
    any_diff = any_diff || fused[i].score != shared[i].score;
  }
  CHECK(any_diff);

  // a model without the shared extractor refuses
  auto single_cfg = tiny_run_config();
  single_cfg.ssp_enabled = false;
  single_cfg.epochs = 1;
  auto single = train(data.d1, nullptr, data.registry, single_cfg);
  REQUIRE_THROWS_AS(zero_shot_predict(*single.model, zs.instances, zs_registry),
                    std::invalid_argument);

  // missing template
  prompts::TemplateRegistry empty;
  REQUIRE_THROWS_WITH(zero_shot_predict(*tm.model, zs.instances, empty),
                      Catch::Matchers::ContainsSubstring("no template"));
}

TEST_CASE("training aborts with a diagnostic when the loss diverges") {
  TinyData data;
  auto cfg = tiny_run_config();
  cfg.lr = 1e150;
  cfg.grad_clip = 0.0;
  cfg.epochs = 4;
  REQUIRE_THROWS_AS(train(data.d1, &data.d2, data.registry, cfg), DivergenceError);
}

TEST_CASE("tied embeddings share one table set and survive a checkpoint round-trip") {
  TinyData data;
  auto cfg = tiny_run_config();
  cfg.epochs = 2;
  cfg.ssp_tie_embeddings = true;
  auto tied = train(data.d1, &data.d2, data.registry, cfg);

  auto untied_cfg = cfg;
  untied_cfg.ssp_tie_embeddings = false;
  auto untied = train(data.d1, &data.d2, data.registry, untied_cfg);

  // two extra copies of (tok, pos_enc, pos_dec) in the untied model
  const auto& bc = cfg.backbone;
  const std::size_t vocab_size = tied.model->vocab().size();
  const std::size_t tables = static_cast<std::size_t>(bc.d_model) *
                             (vocab_size + 2ul * bc.max_encoder_len);
  CHECK(untied.model->n_parameters() == tied.model->n_parameters() + 2 * tables);

  const auto dir = fs::temp_directory_path() / "eaekit_trainkit_tests";
  fs::create_directories(dir);
  const auto path = (dir / "tied.bin").string();
  save_checkpoint(path, *tied.model, cfg, tied.result.best_dev_arg_c, tied.result.best_epoch);
  auto ck = load_checkpoint(path);
  CHECK(ck.cfg.ssp_tie_embeddings);
  const auto a = tied.model->params();
  const auto b = ck.model->params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->name == b[i]->name);
    REQUIRE(a[i]->value.a == b[i]->value.a);
  }
}

TEST_CASE("observed KL at convergence falls monotonically as beta grows") {
  TinyData data;
  data.d1.dev = data.d1.train;
  data.d2.dev = data.d2.train;

  auto mean_kl_for = [&](double beta) {
    auto cfg = tiny_run_config();
    cfg.backbone.d_model = 16;
    cfg.lr = 2e-3;
    cfg.batch_size = 8;
    cfg.epochs = 60;
    cfg.seed = 13;
    cfg.vib_beta = beta;
    auto tm = train(data.d1, &data.d2, data.registry, cfg);
    auto& m = *tm.model;
    const auto p1 = model::prepare_all(data.d1.train, data.registry, m.vocab(), 500);
    const auto p2 = model::prepare_all(data.d2.train, data.registry, m.vocab(), 500);
    double kl = 0.0;
    int n = 0;
    for (const auto* prep : {&p1, &p2}) {
      for (const auto& pi : *prep) {
        Graph g(false);
        auto out = m.forward_shared(g, pi, nullptr);
        vib::GaussianPosterior post{g.val(out.post.mu), g.val(out.post.log_var)};
        kl += vib::kl_to_standard_normal(post);
        ++n;
      }
    }
    return kl / n;
  };

  const double kl_free = mean_kl_for(0.0);
  const double kl_mild = mean_kl_for(0.01);
  const double kl_hard = mean_kl_for(10.0);
  INFO("KL " << kl_free << " -> " << kl_mild << " -> " << kl_hard);
  CHECK(kl_mild <= kl_free * 1.02);  // mild pressure never grows the KL
  CHECK(kl_hard < kl_mild);
  CHECK(kl_hard < 0.5);
}

TEST_CASE("the low-resource sweep emits one row per (k, seed)") {
  TinyData data(6);
  data.d1.test = data.d1.dev;
  data.d2.test = data.d2.dev;
  auto cfg = tiny_run_config();
  cfg.epochs = 1;
  const auto rows = low_resource_sweep(data.d1, data.d2, data.registry, {0, 2}, {7, 8}, cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].k == 0);
  CHECK(rows[1].k == 0);
  CHECK(rows[2].k == 2);
  CHECK(rows[3].k == 2);
  for (const auto& r : rows) {
    const auto j = to_json(r);
    CHECK(j.contains("arg_i"));
    CHECK(j.contains("arg_c"));
    CHECK(j.contains("head_c"));
    CHECK(j.at("seed").get<std::uint64_t>() >= 7);
  }
  REQUIRE_THROWS_AS(low_resource_sweep(data.d1, data.d2, data.registry, {99}, {7}, cfg),
                    std::invalid_argument);
}
