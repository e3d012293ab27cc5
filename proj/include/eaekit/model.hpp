#pragma once

// Full model assembly and the loss surface. With the shared-specific
// architecture enabled the model owns two format-specific extractors, one
// format-shared extractor, a sigmoid fusion gate per format, and (optionally)
// the VIB posterior over the shared representation. With it disabled the
// model collapses to a single basic prompt extractor trained on merged data.

#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "eaekit/backbone.hpp"
#include "eaekit/corpus.hpp"
#include "eaekit/extractor.hpp"
#include "eaekit/optim.hpp"
#include "eaekit/prompts.hpp"
#include "eaekit/ssp.hpp"
#include "eaekit/vib.hpp"

namespace eaekit::model {

struct ModelConfig {
  backbone::BackboneConfig backbone;
  bool ssp_enabled = true;
  bool tie_embeddings = false;
  bool vib_enabled = true;
  double vib_beta = 0.001;
  int vib_d_z = 0;  // 0 means d_model (Z substitutes directly for H)
  bool vib_projection = true;  // project Z back to d_model when d_z differs
  bool vib_eval_use_mean = true;
  int max_span_len = 10;

  int effective_d_z() const { return vib_d_z > 0 ? vib_d_z : backbone.d_model; }

  void validate() const {
    backbone.validate();
    if (max_span_len < 1) throw std::invalid_argument("config: max_span_len must be >= 1");
    if (vib_beta < 0.0) throw std::invalid_argument("config: vib.beta must be nonnegative");
  }
};

// An instance after truncation, marker insertion, tokenization, template
// lookup, and gold-to-slot assignment. Everything the forward pass needs.
struct PreparedInstance {
  std::string id;
  int format_id = 1;
  std::vector<int> marked_ids;
  std::vector<int> prompt_ids;
  std::vector<prompts::Slot> slots;
  extractor::SlotAssignment assignment;  // targets in marked coordinates
  std::vector<int> to_original;          // marked index -> original index, -1 for markers
};

inline PreparedInstance prepare(const corpus::EventInstance& inst,
                                const prompts::TemplateRegistry& registry,
                                const backbone::Vocab& vocab, int max_encoder_len) {
  auto it = registry.find(inst.event_type);
  if (it == registry.end()) {
    throw std::runtime_error("no template registered for event type '" + inst.event_type + "'");
  }
  const prompts::PromptTemplate& tmpl = it->second;
  prompts::validate_against_roles(tmpl, inst.roles);

  // Two marker tokens join the sequence, so the window shrinks by two.
  const corpus::EventInstance clipped = corpus::truncate_around_trigger(inst, max_encoder_len - 2);
  const corpus::MarkedInstance marked = corpus::insert_trigger_markers(clipped);

  PreparedInstance out;
  out.id = inst.id;
  out.format_id = inst.format_id;
  out.marked_ids = vocab.encode(marked.tokens);
  out.prompt_ids = vocab.encode(tmpl.tokens);
  out.slots = tmpl.slots;
  out.assignment = extractor::assign_gold_to_slots(tmpl, marked.gold_args);
  out.to_original.resize(marked.to_original.size());
  // relate back to the untruncated instance
  const int n = static_cast<int>(inst.tokens.size());
  int window_lo = 0;
  if (n > max_encoder_len - 2) {
    // recover the window offset from the clipped trigger
    window_lo = inst.trigger.start - clipped.trigger.start;
  }
  for (std::size_t i = 0; i < marked.to_original.size(); ++i) {
    out.to_original[i] = marked.to_original[i] < 0 ? -1 : marked.to_original[i] + window_lo;
  }
  return out;
}

inline std::vector<PreparedInstance> prepare_all(const std::vector<corpus::EventInstance>& data,
                                                 const prompts::TemplateRegistry& registry,
                                                 const backbone::Vocab& vocab, int max_encoder_len) {
  std::vector<PreparedInstance> out;
  out.reserve(data.size());
  long dropped = 0;
  for (const auto& inst : data) {
    out.push_back(prepare(inst, registry, vocab, max_encoder_len));
    dropped += out.back().assignment.n_dropped;
  }
  if (dropped > 0) {
    std::cerr << "warning: " << dropped << " gold span(s) had no free slot of their role and were dropped\n";
  }
  return out;
}

using Batch = std::vector<const PreparedInstance*>;

struct SharedPathOut {
  std::vector<extractor::SlotLogits> logits;
  bool has_posterior = false;
  vib::PosteriorVars post;
};

class Model {
 public:
  Model(ModelConfig cfg, backbone::Vocab vocab, std::uint64_t seed)
      : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    if (!cfg_.ssp_enabled && cfg_.vib_enabled) {
      // VIB regularizes the shared extractor, which only exists under SSP.
      cfg_.vib_enabled = false;
    }
    std::mt19937_64 rng(mix_seed(seed, 977));
    const auto& bc = cfg_.backbone;
    const double std0 = bc.init_std;
    if (cfg_.ssp_enabled) {
      if (cfg_.tie_embeddings) {
        tied_tables_ = std::make_unique<backbone::EmbeddingTables>("emb", bc, vocab_.size(), rng);
      }
      spec1_ = std::make_unique<backbone::ToyTransformer>("spec1", bc, vocab_.size(), rng, tied_tables_.get());
      spec2_ = std::make_unique<backbone::ToyTransformer>("spec2", bc, vocab_.size(), rng, tied_tables_.get());
      shared_ = std::make_unique<backbone::ToyTransformer>("shared", bc, vocab_.size(), rng, tied_tables_.get());
      head1_ = std::make_unique<extractor::HeadParams>("head1", bc.d_model, std0, rng);
      head2_ = std::make_unique<extractor::HeadParams>("head2", bc.d_model, std0, rng);
      head_shared_ = std::make_unique<extractor::HeadParams>("head_shared", bc.d_model, std0, rng);
      gate1_ = std::make_unique<ssp::GateParams>("gate1", bc.d_model, std0, rng);
      gate2_ = std::make_unique<ssp::GateParams>("gate2", bc.d_model, std0, rng);
      if (cfg_.vib_enabled) {
        vib_ = std::make_unique<vib::VIBParams>("vib", bc.d_model, cfg_.effective_d_z(), cfg_.vib_beta,
                                                std0, rng);
        if (cfg_.effective_d_z() != bc.d_model && cfg_.vib_projection) {
          vib_proj_ = std::make_unique<Param>("vib/w_out",
                                              Mat::randn(cfg_.effective_d_z(), bc.d_model, std0, rng));
        }
      }
    } else {
      single_ = std::make_unique<backbone::ToyTransformer>("single", bc, vocab_.size(), rng, nullptr);
      head_single_ = std::make_unique<extractor::HeadParams>("head", bc.d_model, std0, rng);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const backbone::Vocab& vocab() const { return vocab_; }
  bool has_shared_extractor() const { return cfg_.ssp_enabled; }

  backbone::ToyTransformer& specific_backbone(int format_id) {
    require_ssp("specific_backbone");
    if (format_id == 1) return *spec1_;
    if (format_id == 2) return *spec2_;
    throw std::invalid_argument("format_id must be 1 or 2, got " + std::to_string(format_id));
  }
  backbone::ToyTransformer& shared_backbone() {
    require_ssp("shared_backbone");
    return *shared_;
  }
  backbone::ToyTransformer& single_backbone() {
    if (cfg_.ssp_enabled) throw std::logic_error("single_backbone: model runs with SSP enabled");
    return *single_;
  }
  extractor::HeadParams& head_for(int format_id) {
    require_ssp("head_for");
    return format_id == 1 ? *head1_ : *head2_;
  }
  extractor::HeadParams& shared_head() {
    require_ssp("shared_head");
    return *head_shared_;
  }
  extractor::HeadParams& single_head() {
    if (cfg_.ssp_enabled) throw std::logic_error("single_head: model runs with SSP enabled");
    return *head_single_;
  }
  ssp::GateParams& gate_for(int format_id) {
    require_ssp("gate_for");
    return format_id == 1 ? *gate1_ : *gate2_;
  }
  vib::VIBParams* vib_params() { return vib_.get(); }
  Param* vib_projection() { return vib_proj_.get(); }

  // Deterministic, deduplicated parameter order; drives the optimizer, the
  // gradient clipping, and the checkpoint layout.
  ParamList params() {
    ParamList out;
    if (cfg_.ssp_enabled) {
      if (tied_tables_) {
        for (Param* p : tied_tables_->params()) out.push_back(p);
      }
      for (Param* p : spec1_->params(!cfg_.tie_embeddings)) out.push_back(p);
      for (Param* p : spec2_->params(!cfg_.tie_embeddings)) out.push_back(p);
      for (Param* p : shared_->params(!cfg_.tie_embeddings)) out.push_back(p);
      for (Param* p : head1_->params()) out.push_back(p);
      for (Param* p : head2_->params()) out.push_back(p);
      for (Param* p : head_shared_->params()) out.push_back(p);
      for (Param* p : gate1_->params()) out.push_back(p);
      for (Param* p : gate2_->params()) out.push_back(p);
      if (vib_) {
        for (Param* p : vib_->params()) out.push_back(p);
      }
      if (vib_proj_) out.push_back(vib_proj_.get());
    } else {
      for (Param* p : single_->params(true)) out.push_back(p);
      for (Param* p : head_single_->params()) out.push_back(p);
    }
    return out;
  }

  std::size_t n_parameters() {
    std::size_t n = 0;
    for (Param* p : params()) n += p->value.size();
    return n;
  }

  // Fused path: format-specific and shared representations combined by the
  // format's gate, scored by the format-specific head; role representations
  // come from the format-specific decoder.
  std::vector<extractor::SlotLogits> forward_fused(Graph& g, const PreparedInstance& pi) {
    require_ssp("forward_fused");
    auto& spec = specific_backbone(pi.format_id);
    Var enc_s = spec.encode(g, pi.marked_ids);
    Var h_spec = spec.decode_context(g, pi.marked_ids, enc_s);
    Var h_prompt = spec.decode_prompt(g, pi.prompt_ids, enc_s);
    Var enc_sh = shared_->encode(g, pi.marked_ids);
    Var h_shared = shared_->decode_context(g, pi.marked_ids, enc_sh);
    Var fused = ssp::fuse(g, h_spec, h_shared, gate_for(pi.format_id));
    return score_slots(g, fused, h_prompt, pi, head_for(pi.format_id));
  }

  // Shared path: the format-shared extractor end to end. Under VIB the
  // classifier consumes Z (sampled when noise_rng is given, the posterior
  // mean otherwise).
  SharedPathOut forward_shared(Graph& g, const PreparedInstance& pi, std::mt19937_64* noise_rng) {
    require_ssp("forward_shared");
    SharedPathOut out;
    Var enc = shared_->encode(g, pi.marked_ids);
    Var h_shared = shared_->decode_context(g, pi.marked_ids, enc);
    Var h_prompt = shared_->decode_prompt(g, pi.prompt_ids, enc);
    Var ctx = h_shared;
    if (cfg_.vib_enabled) {
      out.post = vib::posterior(g, h_shared, *vib_);
      out.has_posterior = true;
      Var z;
      if (noise_rng != nullptr) {
        const Mat& mu = g.val(out.post.mu);
        Mat noise(mu.rows, mu.cols);
        std::normal_distribution<double> n01(0.0, 1.0);
        for (auto& x : noise.a) x = n01(*noise_rng);
        z = vib::sample(g, out.post, noise);
      } else {
        z = out.post.mu;
      }
      if (g.val(z).cols != cfg_.backbone.d_model) {
        if (!vib_proj_) {
          throw std::invalid_argument("vib: d_z differs from d_model and no output projection is configured");
        }
        z = g.matmul(z, g.param(*vib_proj_));
      }
      ctx = z;
    }
    out.logits = score_slots(g, ctx, h_prompt, pi, *head_shared_);
    return out;
  }

  // Basic extractor path (model without SSP).
  std::vector<extractor::SlotLogits> forward_basic(Graph& g, const PreparedInstance& pi) {
    if (cfg_.ssp_enabled) throw std::logic_error("forward_basic: model runs with SSP enabled");
    Var enc = single_->encode(g, pi.marked_ids);
    Var h = single_->decode_context(g, pi.marked_ids, enc);
    Var h_prompt = single_->decode_prompt(g, pi.prompt_ids, enc);
    return score_slots(g, h, h_prompt, pi, *head_single_);
  }

 private:
  void require_ssp(const char* what) const {
    if (!cfg_.ssp_enabled) {
      throw std::logic_error(std::string(what) + ": model was built without the shared-specific architecture");
    }
  }

  std::vector<extractor::SlotLogits> score_slots(Graph& g, Var context, Var h_prompt,
                                                 const PreparedInstance& pi,
                                                 extractor::HeadParams& head) {
    Var with_null = g.concat_rows(context, g.param(head.null_emb));
    Var ws = g.param(head.w_start);
    Var we = g.param(head.w_end);
    std::vector<extractor::SlotLogits> out;
    out.reserve(pi.slots.size());
    for (const auto& slot : pi.slots) {
      Var r = extractor::pool_role(g, h_prompt, slot);
      out.push_back(extractor::score_span_logits(g, r, with_null, ws, we));
    }
    return out;
  }

  ModelConfig cfg_;
  backbone::Vocab vocab_;
  std::unique_ptr<backbone::EmbeddingTables> tied_tables_;
  std::unique_ptr<backbone::ToyTransformer> spec1_, spec2_, shared_, single_;
  std::unique_ptr<extractor::HeadParams> head1_, head2_, head_shared_, head_single_;
  std::unique_ptr<ssp::GateParams> gate1_, gate2_;
  std::unique_ptr<vib::VIBParams> vib_;
  std::unique_ptr<Param> vib_proj_;
};

// --- losses ----------------------------------------------------------------

// L_SSP = L_specific_1 + L_specific_2 over the fused representations. With
// SSP disabled this degrades to the basic extractor's loss over the merged
// batches.
inline Var ssp_loss(Graph& g, Model& m, const Batch& batch1, const Batch& batch2) {
  std::vector<Var> terms;
  for (const Batch* b : {&batch1, &batch2}) {
    for (const PreparedInstance* pi : *b) {
      auto logits = m.has_shared_extractor() ? m.forward_fused(g, *pi) : m.forward_basic(g, *pi);
      terms.push_back(extractor::span_loss_graph(g, logits, pi->assignment));
    }
  }
  return g.add_scalars(terms);
}

// L_SharedVIB = sum_k ( L_shared_k + beta * sum_x KL(p(z|x) || q(z)) ).
// The shared span loss scores the sampled Z through the shared head.
inline Var shared_vib_loss(Graph& g, Model& m, const Batch& batch1, const Batch& batch2,
                           std::mt19937_64& noise_rng) {
  if (!m.has_shared_extractor()) {
    throw std::logic_error("shared_vib_loss: model has no shared extractor");
  }
  const bool sample_z = g.training();
  std::vector<Var> terms;
  for (const Batch* b : {&batch1, &batch2}) {
    for (const PreparedInstance* pi : *b) {
      SharedPathOut out = m.forward_shared(g, *pi, sample_z ? &noise_rng : nullptr);
      terms.push_back(extractor::span_loss_graph(g, out.logits, pi->assignment));
      if (out.has_posterior && m.vib_params()->beta > 0.0) {
        terms.push_back(g.scale(vib::kl_to_standard_normal(g, out.post), m.vib_params()->beta));
      }
    }
  }
  return g.add_scalars(terms);
}

inline Var total_loss(Graph& g, Var l_ssp, Var l_shared_vib) { return g.add(l_ssp, l_shared_vib); }

// --- prediction --------------------------------------------------------

enum class PredictPath { Auto, Shared };

inline extractor::SpanDistribution distribution_from_logits(const Mat& start_logits,
                                                            const Mat& end_logits) {
  extractor::SpanDistribution d;
  d.p_start = extractor::detail::softmax(std::vector<double>(start_logits.a.begin(), start_logits.a.end()));
  d.p_end = extractor::detail::softmax(std::vector<double>(end_logits.a.begin(), end_logits.a.end()));
  return d;
}

// Maps a span in marked coordinates back onto the original tokens. Spans
// that cover only marker tokens decode to null.
inline std::optional<corpus::Span> to_original_span(const std::optional<corpus::Span>& span,
                                                    const std::vector<int>& to_original) {
  if (!span) return std::nullopt;
  int s = span->start, e = span->end;
  while (s <= e && to_original[s] < 0) ++s;
  while (e >= s && to_original[e] < 0) --e;
  if (s > e) return std::nullopt;
  return corpus::Span(to_original[s], to_original[e]);
}

// Runs one instance in eval mode and decodes one prediction per slot.
inline std::vector<extractor::Prediction> predict_instance(Model& m, const PreparedInstance& pi,
                                                           PredictPath path,
                                                           std::mt19937_64* eval_noise_rng = nullptr) {
  Graph g(false);
  std::vector<extractor::SlotLogits> logits;
  if (path == PredictPath::Shared) {
    std::mt19937_64* rng = nullptr;
    if (m.config().vib_enabled && !m.config().vib_eval_use_mean) rng = eval_noise_rng;
    logits = m.forward_shared(g, pi, rng).logits;
  } else if (m.has_shared_extractor()) {
    logits = m.forward_fused(g, pi);
  } else {
    logits = m.forward_basic(g, pi);
  }
  std::vector<extractor::Prediction> out;
  out.reserve(pi.slots.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto dist = distribution_from_logits(g.val(logits[i].start), g.val(logits[i].end));
    const auto marked_span = extractor::decode_span(dist, m.config().max_span_len);
    extractor::Prediction p;
    p.id = pi.id;
    p.role = pi.slots[i].role;
    p.slot = static_cast<int>(i);
    p.span = to_original_span(marked_span, pi.to_original);
    p.score = extractor::span_score(dist, marked_span);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace eaekit::model
