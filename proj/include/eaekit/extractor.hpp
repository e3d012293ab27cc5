#pragma once

// Prompt-based span extraction head: role-slot pooling, bilinear start/end
// scoring against the context states with an appended learned null position,
// joint span decoding, gold-to-slot assignment, and the span cross-entropy.
//
// The scoring ops exist twice on purpose: a plain-Mat form used for decoding
// and for independent checks, and a Graph form used for training. Tests pin
// the two to each other.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "eaekit/corpus.hpp"
#include "eaekit/graph.hpp"
#include "eaekit/prompts.hpp"

namespace eaekit::extractor {

// One classifier head: bilinear forms for start/end plus the learned null
// row appended to the context states.
struct HeadParams {
  Param w_start;
  Param w_end;
  Param null_emb;

  HeadParams(const std::string& prefix, int d_model, double init_std, std::mt19937_64& rng)
      : w_start(prefix + "/w_start", Mat::randn(d_model, d_model, init_std, rng)),
        w_end(prefix + "/w_end", Mat::randn(d_model, d_model, init_std, rng)),
        null_emb(prefix + "/null_emb", Mat::randn(1, d_model, init_std, rng)) {}

  ParamList params() { return {&w_start, &w_end, &null_emb}; }
};

// Start/end probabilities over sentence positions plus one trailing null
// position (index size-1).
struct SpanDistribution {
  std::vector<double> p_start;
  std::vector<double> p_end;

  int n_positions() const { return static_cast<int>(p_start.size()) - 1; }
  int null_index() const { return static_cast<int>(p_start.size()) - 1; }
};

// --- pooling -----------------------------------------------------------

// Mean of the slot's rows of H_p.
inline Mat pool_role(const Mat& h_prompt, const prompts::Slot& slot) {
  if (slot.first < 0 || slot.last >= h_prompt.rows || slot.first > slot.last) {
    throw std::out_of_range("pool_role: slot range [" + std::to_string(slot.first) + "," +
                            std::to_string(slot.last) + "] outside prompt states");
  }
  Mat out(1, h_prompt.cols);
  for (int i = slot.first; i <= slot.last; ++i) {
    const double* row = h_prompt.row(i);
    for (int j = 0; j < h_prompt.cols; ++j) out.a[j] += row[j];
  }
  const double inv = 1.0 / slot.length();
  for (auto& x : out.a) x *= inv;
  return out;
}

inline Var pool_role(Graph& g, Var h_prompt, const prompts::Slot& slot) {
  if (slot.first < 0 || slot.last >= g.val(h_prompt).rows || slot.first > slot.last) {
    throw std::out_of_range("pool_role: slot range outside prompt states");
  }
  return g.mean_rows(h_prompt, slot.first, slot.last + 1);
}

// --- scoring -----------------------------------------------------------

namespace detail {

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  double sum = 0.0;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  return out;
}

// r * W * [H; null]^T as raw logits.
inline std::vector<double> bilinear_logits(const Mat& r, const Mat& h_context, const Mat& w,
                                           const Mat& null_row) {
  const int d = r.cols;
  if (r.rows != 1 || w.rows != d || w.cols != d || h_context.cols != d || null_row.cols != d) {
    throw std::invalid_argument("bilinear_logits: dimension mismatch");
  }
  std::vector<double> rw(d, 0.0);
  for (int i = 0; i < d; ++i) {
    const double ri = r.a[i];
    if (ri == 0.0) continue;
    const double* wi = w.row(i);
    for (int j = 0; j < d; ++j) rw[j] += ri * wi[j];
  }
  std::vector<double> logits(h_context.rows + 1, 0.0);
  for (int p = 0; p < h_context.rows; ++p) {
    const double* hp = h_context.row(p);
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += rw[j] * hp[j];
    logits[p] = s;
  }
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += rw[j] * null_row.a[j];
  logits.back() = s;
  return logits;
}

}  // namespace detail

// Eq.-style classifier: p_start/p_end are softmaxes of r·W·[H; null]^T.
inline SpanDistribution score_span(const Mat& role_rep, const Mat& h_context, const Mat& w_start,
                                   const Mat& w_end, const Mat& null_row) {
  SpanDistribution d;
  d.p_start = detail::softmax(detail::bilinear_logits(role_rep, h_context, w_start, null_row));
  d.p_end = detail::softmax(detail::bilinear_logits(role_rep, h_context, w_end, null_row));
  return d;
}

// Graph form: returns the 1 x (L+1) start/end logits for one slot.
struct SlotLogits {
  Var start;
  Var end;
};

inline SlotLogits score_span_logits(Graph& g, Var role_rep, Var h_with_null, Var w_start, Var w_end) {
  SlotLogits out;
  out.start = g.matmul_nt(g.matmul(role_rep, w_start), h_with_null);
  out.end = g.matmul_nt(g.matmul(role_rep, w_end), h_with_null);
  return out;
}

// --- decoding ----------------------------------------------------------

// Argmax of p_start[s]*p_end[e] over {(s,e): s<=e, e-s < max_span_len} plus
// the null candidate. Ties prefer smaller s, then smaller e; the null
// candidate loses exact ties against spans.
inline std::optional<corpus::Span> decode_span(const SpanDistribution& d, int max_span_len) {
  if (max_span_len < 1) throw std::invalid_argument("decode_span: max_span_len must be >= 1");
  const int n = d.n_positions();
  const int null_idx = d.null_index();
  double best = d.p_start[null_idx] * d.p_end[null_idx];
  std::optional<corpus::Span> best_span;
  for (int s = 0; s < n; ++s) {
    for (int e = s; e < n && e - s < max_span_len; ++e) {
      const double score = d.p_start[s] * d.p_end[e];
      if (score > best || (score == best && !best_span && score > 0.0)) {
        best = score;
        best_span = corpus::Span(s, e);
      }
    }
  }
  return best_span;
}

inline double span_score(const SpanDistribution& d, const std::optional<corpus::Span>& span) {
  if (span) return d.p_start[span->start] * d.p_end[span->end];
  return d.p_start[d.null_index()] * d.p_end[d.null_index()];
}

// --- gold assignment ---------------------------------------------------

struct SlotAssignment {
  // one entry per slot of the template; nullopt = null span
  std::vector<std::optional<corpus::Span>> spans;
  int n_dropped = 0;  // surplus gold spans that had no slot left
};

// Gold spans sorted by start index are zipped onto the role's slots in
// template order; surplus slots get null, surplus gold spans are dropped.
inline SlotAssignment assign_gold_to_slots(const prompts::PromptTemplate& tmpl,
                                           const std::map<std::string, std::vector<corpus::Span>>& gold) {
  SlotAssignment out;
  out.spans.assign(tmpl.slots.size(), std::nullopt);
  std::map<std::string, std::vector<corpus::Span>> sorted = gold;
  for (auto& [role, spans] : sorted) std::sort(spans.begin(), spans.end());
  std::map<std::string, std::size_t> used;
  for (std::size_t i = 0; i < tmpl.slots.size(); ++i) {
    const auto& role = tmpl.slots[i].role;
    auto it = sorted.find(role);
    if (it == sorted.end()) continue;
    std::size_t& k = used[role];
    if (k < it->second.size()) out.spans[i] = it->second[k++];
  }
  for (const auto& [role, spans] : sorted) {
    auto it = used.find(role);
    const std::size_t taken = it == used.end() ? 0 : it->second;
    out.n_dropped += static_cast<int>(spans.size() - taken);
  }
  return out;
}

// --- loss --------------------------------------------------------------

// Start/end targets in marked-token coordinates; null slots point at the
// appended null position.
inline std::pair<int, int> slot_targets(const std::optional<corpus::Span>& assigned, int null_index) {
  if (assigned) return {assigned->start, assigned->end};
  return {null_index, null_index};
}

// Plain cross-entropy over already-normalized distributions; the
// independent counterpart of the Graph loss below.
inline double span_loss(const std::vector<SpanDistribution>& dists, const SlotAssignment& assignment) {
  if (dists.size() != assignment.spans.size()) {
    throw std::invalid_argument("span_loss: one distribution per slot required");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const auto [ts, te] = slot_targets(assignment.spans[i], dists[i].null_index());
    loss += -std::log(dists[i].p_start[ts]) - std::log(dists[i].p_end[te]);
  }
  return loss;
}

inline Var span_loss_graph(Graph& g, const std::vector<SlotLogits>& logits,
                           const SlotAssignment& assignment) {
  if (logits.size() != assignment.spans.size()) {
    throw std::invalid_argument("span_loss_graph: one logit pair per slot required");
  }
  std::vector<Var> terms;
  terms.reserve(logits.size() * 2);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const int null_index = g.val(logits[i].start).cols - 1;
    const auto [ts, te] = slot_targets(assignment.spans[i], null_index);
    terms.push_back(g.ce_from_logits(logits[i].start, ts));
    terms.push_back(g.ce_from_logits(logits[i].end, te));
  }
  return g.add_scalars(terms);
}

// --- prediction record ---------------------------------------------------

struct Prediction {
  std::string id;
  std::string role;
  int slot = 0;
  std::optional<corpus::Span> span;  // original-token coordinates
  double score = 0.0;
};

inline nlohmann::json to_json(const Prediction& p) {
  nlohmann::json j{{"id", p.id}, {"role", p.role}, {"slot", p.slot}, {"score", p.score}};
  if (p.span) {
    j["span"] = {p.span->start, p.span->end};
  } else {
    j["span"] = nullptr;
  }
  return j;
}

inline void save_predictions(const std::string& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions file: " + path);
  for (const auto& p : preds) out << to_json(p).dump() << "\n";
}

}  // namespace eaekit::extractor
