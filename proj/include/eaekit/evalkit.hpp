#pragma once

// Micro-averaged Arg-I / Arg-C / Head-C scoring. Matching is one-to-one:
// predictions are consumed in score order and each gold span may be matched
// at most once.

#include <algorithm>
#include <cctype>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eaekit/corpus.hpp"
#include "eaekit/extractor.hpp"

namespace eaekit::evalkit {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long n_pred = 0;
  long n_gold = 0;
  long n_correct = 0;
};

struct MetricsReport {
  Prf arg_i;
  Prf arg_c;
  Prf head_c;
};

using HeadFn = std::function<int(const std::vector<std::string>&, const corpus::Span&)>;

inline bool is_punct_token(const std::string& tok) {
  if (tok.empty()) return false;
  for (char c : tok) {
    if (!std::ispunct(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// Default head rule: last token of the span after stripping trailing
// punctuation tokens.
inline int default_head(const std::vector<std::string>& tokens, const corpus::Span& span) {
  int h = span.end;
  while (h > span.start && is_punct_token(tokens[h])) --h;
  return h;
}

namespace detail {

inline Prf finish(long n_pred, long n_gold, long n_correct) {
  Prf out;
  out.n_pred = n_pred;
  out.n_gold = n_gold;
  out.n_correct = n_correct;
  out.precision = n_pred > 0 ? static_cast<double>(n_correct) / n_pred : 0.0;
  out.recall = n_gold > 0 ? static_cast<double>(n_correct) / n_gold : 0.0;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

}  // namespace detail

// Predictions for one event instance; null (span-less) slots are excluded
// upstream.
struct InstancePredictions {
  std::string id;
  std::vector<extractor::Prediction> args;
};

inline std::vector<InstancePredictions> group_predictions(const std::vector<extractor::Prediction>& preds) {
  std::vector<InstancePredictions> out;
  std::map<std::string, std::size_t> where;
  for (const auto& p : preds) {
    if (!p.span) continue;
    auto it = where.find(p.id);
    if (it == where.end()) {
      where[p.id] = out.size();
      out.push_back(InstancePredictions{p.id, {}});
      it = where.find(p.id);
    }
    out[it->second].args.push_back(p);
  }
  return out;
}

// Micro P/R/F1 under a configurable match key. Within one instance each
// prediction, visited in descending score order, consumes at most one
// unconsumed gold argument with an equal key.
template <typename KeyFn>
inline Prf micro_f1(const std::vector<InstancePredictions>& preds,
                    const std::vector<corpus::EventInstance>& golds, KeyFn key_of_pred,
                    KeyFn key_of_gold) {
  std::map<std::string, const corpus::EventInstance*> gold_by_id;
  long n_gold = 0;
  for (const auto& g : golds) {
    gold_by_id[g.id] = &g;
    for (const auto& [role, spans] : g.gold_args) n_gold += static_cast<long>(spans.size());
  }

  long n_pred = 0, n_correct = 0;
  for (const auto& ip : preds) {
    n_pred += static_cast<long>(ip.args.size());
    auto it = gold_by_id.find(ip.id);
    if (it == gold_by_id.end()) continue;
    const corpus::EventInstance& g = *it->second;

    std::vector<std::pair<std::string, corpus::Span>> gold_args;
    for (const auto& [role, spans] : g.gold_args) {
      for (const auto& s : spans) gold_args.emplace_back(role, s);
    }
    std::vector<bool> used(gold_args.size(), false);

    std::vector<const extractor::Prediction*> ordered;
    for (const auto& p : ip.args) ordered.push_back(&p);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->score > b->score; });

    for (const auto* p : ordered) {
      const auto pk = key_of_pred(g.tokens, p->role, *p->span);
      for (std::size_t k = 0; k < gold_args.size(); ++k) {
        if (used[k]) continue;
        if (key_of_gold(g.tokens, gold_args[k].first, gold_args[k].second) == pk) {
          used[k] = true;
          ++n_correct;
          break;
        }
      }
    }
  }
  return detail::finish(n_pred, n_gold, n_correct);
}

// Span offsets must match a gold argument of the same instance (any role).
inline Prf arg_i_f1(const std::vector<InstancePredictions>& preds,
                    const std::vector<corpus::EventInstance>& golds) {
  auto key = [](const std::vector<std::string>&, const std::string&, const corpus::Span& s) {
    return std::tuple<std::string, int, int>("", s.start, s.end);
  };
  return micro_f1(preds, golds, key, key);
}

// Both span offsets and the role must match.
inline Prf arg_c_f1(const std::vector<InstancePredictions>& preds,
                    const std::vector<corpus::EventInstance>& golds) {
  auto key = [](const std::vector<std::string>&, const std::string& role, const corpus::Span& s) {
    return std::tuple<std::string, int, int>(role, s.start, s.end);
  };
  return micro_f1(preds, golds, key, key);
}

// Role plus headword index must match.
inline Prf head_c_f1(const std::vector<InstancePredictions>& preds,
                     const std::vector<corpus::EventInstance>& golds,
                     const HeadFn& head_fn = default_head) {
  auto key = [&head_fn](const std::vector<std::string>& tokens, const std::string& role,
                        const corpus::Span& s) {
    return std::tuple<std::string, int, int>(role, head_fn(tokens, s), 0);
  };
  return micro_f1(preds, golds, key, key);
}

inline MetricsReport compute_metrics(const std::vector<InstancePredictions>& preds,
                                     const std::vector<corpus::EventInstance>& golds,
                                     const HeadFn& head_fn = default_head) {
  MetricsReport r;
  r.arg_i = arg_i_f1(preds, golds);
  r.arg_c = arg_c_f1(preds, golds);
  r.head_c = head_c_f1(preds, golds, head_fn);
  return r;
}

inline nlohmann::json to_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall},     {"f1", p.f1},
          {"n_pred", p.n_pred},       {"n_gold", p.n_gold},     {"n_correct", p.n_correct}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"arg_i", to_json(r.arg_i)}, {"arg_c", to_json(r.arg_c)}, {"head_c", to_json(r.head_c)}};
}

inline std::string to_table(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "metric    precision    recall        f1    n_pred    n_gold  n_correct\n";
  auto row = [&os](const char* name, const Prf& p) {
    os << std::left << std::setw(8) << name << std::right << std::setw(11) << p.precision
       << std::setw(10) << p.recall << std::setw(10) << p.f1 << std::setw(10) << p.n_pred
       << std::setw(10) << p.n_gold << std::setw(11) << p.n_correct << "\n";
  };
  row("arg-i", r.arg_i);
  row("arg-c", r.arg_c);
  row("head-c", r.head_c);
  return os.str();
}

}  // namespace eaekit::evalkit
