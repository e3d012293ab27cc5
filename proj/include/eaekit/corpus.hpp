#pragma once

// Unified event-instance data model, JSONL readers for two external dataset
// schemas, trigger-marker insertion, trigger-centered truncation, and
// deterministic subsampling.

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace eaekit::corpus {

using json = nlohmann::json;

// Token span, 0-based and inclusive on both ends.
struct Span {
  int start = 0;
  int end = 0;

  Span() = default;
  Span(int s, int e) : start(s), end(e) {}

  int length() const { return end - start + 1; }
  bool operator==(const Span& o) const { return start == o.start && end == o.end; }
  bool operator<(const Span& o) const {
    return start != o.start ? start < o.start : end < o.end;
  }
};

struct EventInstance {
  std::string id;
  std::vector<std::string> tokens;
  std::string event_type;
  Span trigger;
  std::vector<std::string> roles;                  // the role set R, ordered
  std::map<std::string, std::vector<Span>> gold_args;  // role -> spans
  int format_id = 1;
};

struct CorpusStats {
  long n_docs = 0;
  long n_events = 0;
  long n_args = 0;
};

enum class Schema { Unified, SentenceStyle, DocumentStyle };

inline const char* kTriggerOpen = "<t>";
inline const char* kTriggerClose = "</t>";

namespace detail {

inline void validate_span(const Span& s, int n_tokens, const std::string& id, const char* what) {
  if (s.start < 0 || s.start > s.end || s.end >= n_tokens) {
    throw std::runtime_error("record '" + id + "': " + what + " span [" +
                             std::to_string(s.start) + "," + std::to_string(s.end) +
                             "] out of range for " + std::to_string(n_tokens) + " tokens");
  }
}

inline void validate_instance(const EventInstance& inst) {
  if (inst.tokens.empty()) throw std::runtime_error("record '" + inst.id + "': empty token list");
  if (inst.roles.empty()) throw std::runtime_error("record '" + inst.id + "': empty role set");
  validate_span(inst.trigger, static_cast<int>(inst.tokens.size()), inst.id, "trigger");
  for (const auto& [role, spans] : inst.gold_args) {
    if (std::find(inst.roles.begin(), inst.roles.end(), role) == inst.roles.end()) {
      throw std::runtime_error("record '" + inst.id + "': argument role '" + role +
                               "' not in role set");
    }
    for (const Span& s : spans) {
      validate_span(s, static_cast<int>(inst.tokens.size()), inst.id, ("role '" + role + "'").c_str());
    }
  }
}

inline Span span_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw std::runtime_error("span must be a [start,end] pair");
  return Span(j[0].get<int>(), j[1].get<int>());
}

inline EventInstance unified_from_json(const json& j) {
  EventInstance inst;
  inst.id = j.at("id").get<std::string>();
  inst.tokens = j.at("tokens").get<std::vector<std::string>>();
  inst.event_type = j.at("event_type").get<std::string>();
  inst.trigger = span_from_json(j.at("trigger"));
  inst.roles = j.at("roles").get<std::vector<std::string>>();
  for (const auto& [role, spans] : j.at("args").items()) {
    std::vector<Span> v;
    for (const auto& s : spans) v.push_back(span_from_json(s));
    inst.gold_args[role] = std::move(v);
  }
  inst.format_id = j.at("format_id").get<int>();
  return inst;
}

// One event mention out of a sentence_style or document_style record.
inline EventInstance event_from_json(const json& ev, const std::string& base_id, int mention_idx,
                                     std::vector<std::string> tokens, int format_id) {
  EventInstance inst;
  inst.id = base_id + "#" + std::to_string(mention_idx);
  inst.tokens = std::move(tokens);
  inst.event_type = ev.at("event_type").get<std::string>();
  inst.trigger = span_from_json(ev.at("trigger"));
  for (const auto& arg : ev.at("arguments")) {
    const auto role = arg.at("role").get<std::string>();
    inst.gold_args[role].push_back(span_from_json(arg.at("span")));
  }
  if (ev.contains("roles")) {
    inst.roles = ev.at("roles").get<std::vector<std::string>>();
  } else {
    // Fall back to the argument roles in first-appearance order.
    for (const auto& arg : ev.at("arguments")) {
      const auto role = arg.at("role").get<std::string>();
      if (std::find(inst.roles.begin(), inst.roles.end(), role) == inst.roles.end()) {
        inst.roles.push_back(role);
      }
    }
  }
  inst.format_id = format_id;
  return inst;
}

}  // namespace detail

inline json to_json(const EventInstance& inst) {
  json args = json::object();
  for (const auto& [role, spans] : inst.gold_args) {
    json v = json::array();
    for (const Span& s : spans) v.push_back({s.start, s.end});
    args[role] = std::move(v);
  }
  return json{{"id", inst.id},
              {"tokens", inst.tokens},
              {"event_type", inst.event_type},
              {"trigger", {inst.trigger.start, inst.trigger.end}},
              {"roles", inst.roles},
              {"args", std::move(args)},
              {"format_id", inst.format_id}};
}

// Reads one JSONL file. sentence_style carries an "events" list per sentence
// record; document_style carries "sentences" (a list of token lists) plus an
// "events" list with document-level offsets. Both are flattened to one
// EventInstance per event mention.
inline std::vector<EventInstance> load_dataset(const std::string& path,
                                               Schema schema = Schema::Unified) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<EventInstance> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    try {
      switch (schema) {
        case Schema::Unified: {
          EventInstance inst = detail::unified_from_json(j);
          detail::validate_instance(inst);
          out.push_back(std::move(inst));
          break;
        }
        case Schema::SentenceStyle: {
          const auto base_id = j.at("sent_id").get<std::string>();
          auto tokens = j.at("tokens").get<std::vector<std::string>>();
          const int format_id = j.value("format_id", 1);
          int idx = 0;
          for (const auto& ev : j.at("events")) {
            EventInstance inst = detail::event_from_json(ev, base_id, idx++, tokens, format_id);
            detail::validate_instance(inst);
            out.push_back(std::move(inst));
          }
          break;
        }
        case Schema::DocumentStyle: {
          const auto base_id = j.at("doc_id").get<std::string>();
          std::vector<std::string> tokens;
          for (const auto& sent : j.at("sentences")) {
            for (const auto& t : sent) tokens.push_back(t.get<std::string>());
          }
          const int format_id = j.value("format_id", 2);
          int idx = 0;
          for (const auto& ev : j.at("events")) {
            EventInstance inst = detail::event_from_json(ev, base_id, idx++, tokens, format_id);
            detail::validate_instance(inst);
            out.push_back(std::move(inst));
          }
          break;
        }
      }
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  return out;
}

inline void save_dataset(const std::string& path, const std::vector<EventInstance>& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  for (const auto& inst : data) out << to_json(inst).dump() << "\n";
}

// An instance after trigger-marker insertion (and optional truncation).
// to_original maps marked token index -> original token index, -1 for the
// marker tokens themselves.
struct MarkedInstance {
  std::vector<std::string> tokens;
  Span trigger;
  std::map<std::string, std::vector<Span>> gold_args;
  std::vector<int> to_original;
};

// Index shift under marker insertion: "<t>" lands before trigger.start and
// "</t>" right after trigger.end.
inline int marked_index(int orig, const Span& trigger) {
  int idx = orig;
  if (orig >= trigger.start) ++idx;
  if (orig > trigger.end) ++idx;
  return idx;
}

inline MarkedInstance insert_trigger_markers(const EventInstance& inst) {
  detail::validate_instance(inst);
  MarkedInstance m;
  const int n = static_cast<int>(inst.tokens.size());
  m.tokens.reserve(n + 2);
  m.to_original.reserve(n + 2);
  for (int i = 0; i < n; ++i) {
    if (i == inst.trigger.start) {
      m.tokens.emplace_back(kTriggerOpen);
      m.to_original.push_back(-1);
    }
    m.tokens.push_back(inst.tokens[i]);
    m.to_original.push_back(i);
    if (i == inst.trigger.end) {
      m.tokens.emplace_back(kTriggerClose);
      m.to_original.push_back(-1);
    }
  }
  m.trigger = Span(marked_index(inst.trigger.start, inst.trigger),
                   marked_index(inst.trigger.end, inst.trigger));
  for (const auto& [role, spans] : inst.gold_args) {
    for (const Span& s : spans) {
      m.gold_args[role].push_back(
          Span(marked_index(s.start, inst.trigger), marked_index(s.end, inst.trigger)));
    }
  }
  return m;
}

inline std::vector<std::string> strip_trigger_markers(const std::vector<std::string>& marked) {
  std::vector<std::string> out;
  out.reserve(marked.size());
  for (const auto& t : marked) {
    if (t != kTriggerOpen && t != kTriggerClose) out.push_back(t);
  }
  return out;
}

// Truncates to a window of at most max_tokens centered on the trigger.
// Gold spans that do not fit the window entirely are dropped.
inline EventInstance truncate_around_trigger(const EventInstance& inst, int max_tokens) {
  if (max_tokens < inst.trigger.length()) {
    throw std::invalid_argument("truncate_around_trigger: window smaller than the trigger");
  }
  const int n = static_cast<int>(inst.tokens.size());
  if (n <= max_tokens) return inst;
  const int center = (inst.trigger.start + inst.trigger.end) / 2;
  int lo = center - max_tokens / 2;
  lo = std::clamp(lo, 0, n - max_tokens);
  if (inst.trigger.start < lo) lo = inst.trigger.start;
  if (inst.trigger.end >= lo + max_tokens) lo = inst.trigger.end - max_tokens + 1;
  const int hi = lo + max_tokens;  // exclusive

  EventInstance out;
  out.id = inst.id;
  out.event_type = inst.event_type;
  out.format_id = inst.format_id;
  out.roles = inst.roles;
  out.tokens.assign(inst.tokens.begin() + lo, inst.tokens.begin() + hi);
  out.trigger = Span(inst.trigger.start - lo, inst.trigger.end - lo);
  for (const auto& [role, spans] : inst.gold_args) {
    for (const Span& s : spans) {
      if (s.start >= lo && s.end < hi) out.gold_args[role].push_back(Span(s.start - lo, s.end - lo));
    }
  }
  return out;
}

// Uniform sample without replacement, deterministic per seed. Preserves the
// original corpus order of the selected instances.
inline std::vector<EventInstance> subsample(const std::vector<EventInstance>& data, std::size_t k,
                                            std::uint64_t seed) {
  if (k > data.size()) {
    throw std::invalid_argument("subsample: k=" + std::to_string(k) + " exceeds corpus size " +
                                std::to_string(data.size()));
  }
  if (k == 0) return {};
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<EventInstance> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

inline CorpusStats corpus_stats(const std::vector<EventInstance>& data) {
  CorpusStats st;
  std::set<std::string> docs;
  for (const auto& inst : data) {
    ++st.n_events;
    for (const auto& [role, spans] : inst.gold_args) st.n_args += static_cast<long>(spans.size());
    docs.insert(inst.id.substr(0, inst.id.find('#')));
  }
  st.n_docs = static_cast<long>(docs.size());
  return st;
}

}  // namespace eaekit::corpus
