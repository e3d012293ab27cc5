#pragma once

// Deterministic multi-format synthetic corpus generator. A fixed universe of
// event concepts is rendered under per-format surface names: event types get
// disjoint names in every format while role names are only partially renamed,
// and argument fillers come from lexicons shared across formats. A third
// format rendering exists for held-out zero-shot evaluation.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eaekit/corpus.hpp"
#include "eaekit/optim.hpp"

namespace eaekit::corpus {

namespace synth_detail {

inline const std::vector<std::vector<const char*>>& lexicons() {
  static const std::vector<std::vector<const char*>> lex = {
      // 0: person
      {"maria", "daniel", "ahmed", "the mayor", "the senator", "lucia", "omar", "a teacher",
       "the envoy", "yusuf"},
      // 1: group agent
      {"rebels", "the militia", "soldiers", "protesters", "a gunman", "the police", "workers",
       "the crew", "pirates", "villagers"},
      // 2: target
      {"civilians", "the convoy", "a school", "the embassy", "a market", "the bridge", "a patrol",
       "the camp", "a hospital", "the depot"},
      // 3: instrument
      {"rockets", "a knife", "drones", "explosives", "rifles", "a mortar", "grenades", "mortars",
       "machetes", "a drone"},
      // 4: place
      {"baghdad", "the capital", "karachi", "a village", "the harbor", "downtown", "the border",
       "a suburb", "the plaza", "kabul"},
      // 5: time
      {"yesterday", "on monday", "last week", "at dawn", "overnight", "in march", "this morning",
       "at noon"},
      // 6: goods
      {"weapons", "grain", "medicine", "fuel", "computers", "livestock", "timber", "textiles",
       "spare parts", "vaccines"},
      // 7: organization
      {"the army", "the council", "acme corp", "the ministry", "the union", "a charity",
       "the firm", "the agency", "the committee", "a startup"},
  };
  return lex;
}

inline const std::vector<const char*>& context_phrases() {
  static const std::vector<const char*> ctx = {"reportedly", "officials said", "sources said",
                                               "apparently", "meanwhile", "witnesses said"};
  return ctx;
}

enum class ItemKind { Lit, Verb, Role, Ctx };

struct PatItem {
  ItemKind kind;
  const char* lit = nullptr;
  int role = -1;
};

inline PatItem lit(const char* s) { return {ItemKind::Lit, s, -1}; }
inline PatItem verb() { return {ItemKind::Verb, nullptr, -1}; }
inline PatItem role(int r) { return {ItemKind::Role, nullptr, r}; }
inline PatItem ctx() { return {ItemKind::Ctx, nullptr, -1}; }

struct ConceptRole {
  const char* names[3];  // surface name per format
  int lexicon;
};

struct Concept {
  const char* event_names[3];
  std::vector<ConceptRole> roles;
  std::vector<const char*> verbs;
  std::vector<std::vector<PatItem>> patterns;
  const char* template_skeleton;  // "{i}" marks a slot for role i
};

inline const std::vector<Concept>& concepts() {
  static const std::vector<Concept> all = {
      {{"Conflict.Attack", "conflict-attack-detonate", "ATTACK_EVENT"},
       {{{"Attacker", "Aggressor", "Attacker"}, 1},
        {{"Target", "Target", "Target"}, 2},
        {{"Instrument", "Weapon", "Instrument"}, 3},
        {{"Place", "Place", "Site"}, 4}},
       {"attacked", "bombed", "raided", "stormed"},
       {{ctx(), role(0), verb(), role(1), lit("with"), role(2), lit("in"), role(3)},
        {role(0), verb(), role(1), lit("in"), role(3), ctx()},
        {ctx(), role(0), verb(), role(1)}},
       "{0} attacked {1} with {2} in {3}"},
      {{"Life.Marry", "personal-wed", "MARRY_EVENT"},
       {{{"Person", "Spouse", "Person"}, 0}, {{"Place", "Venue", "Place"}, 4}},
       {"married", "wed"},
       {{role(0), verb(), role(0), lit("at"), role(1), ctx()},
        {ctx(), role(0), verb(), role(0)},
        {role(0), verb(), role(0), lit("at"), role(1), lit("and"), role(1)}},
       "{0} married {0} at {1} ( and {1} )"},
      {{"Movement.Transport", "movement-haul-cargo", "TRANSPORT_EVENT"},
       {{{"Carrier", "Transporter", "Carrier"}, 1},
        {{"Cargo", "Goods", "Cargo"}, 6},
        {{"Origin", "Origin", "Origin"}, 4},
        {{"Destination", "Endpoint", "Destination"}, 4}},
       {"shipped", "hauled", "ferried", "moved"},
       {{ctx(), role(0), verb(), role(1), lit("from"), role(2), lit("to"), role(3)},
        {role(0), verb(), role(1), lit("to"), role(3)},
        {role(0), verb(), role(1), lit("from"), role(2), ctx()}},
       "{0} shipped {1} from {2} to {3}"},
      {{"Contact.Meet", "contact-summit", "MEET_EVENT"},
       {{{"Participant", "Attendee", "Participant"}, 0},
        {{"Place", "Venue", "Place"}, 4},
        {{"Time", "When", "Time"}, 5}},
       {"met", "greeted"},
       {{ctx(), role(0), verb(), role(0), lit("in"), role(1), role(2)},
        {role(0), verb(), role(0), role(2)},
        {role(0), verb(), role(0), lit("in"), role(1)}},
       "{0} met {0} in {1} at {2}"},
      {{"Transaction.Purchase", "commerce-buy-goods", "BUY_EVENT"},
       {{{"Buyer", "Purchaser", "Buyer"}, 7},
        {{"Goods", "Merchandise", "Goods"}, 6},
        {{"Seller", "Vendor", "Seller"}, 7}},
       {"bought", "purchased", "acquired"},
       {{ctx(), role(0), verb(), role(1), lit("from"), role(2)},
        {role(0), verb(), role(1), ctx()}},
       "{0} bought {1} from {2}"},
      {{"Personnel.Hire", "employment-recruit", "HIRE_EVENT"},
       {{{"Employer", "Recruiter", "Employer"}, 7},
        {{"Employee", "Hire", "Employee"}, 0},
        {{"Place", "Place", "Place"}, 4}},
       {"hired", "recruited"},
       {{role(0), verb(), role(1), lit("in"), role(2), ctx()}, {ctx(), role(0), verb(), role(1)}},
       "{0} hired {1} in {2}"},
      {{"Justice.Protest", "civil-unrest-march", "PROTEST_EVENT"},
       {{{"Protester", "Marcher", "Protester"}, 1},
        {{"Place", "Location", "Place"}, 4},
        {{"Time", "Time", "Time"}, 5}},
       {"protested", "marched", "rallied"},
       {{ctx(), role(0), verb(), lit("in"), role(1), role(2)},
        {role(0), verb(), role(2)},
        {role(0), verb(), lit("in"), role(1)}},
       "{0} protested in {1} at {2}"},
      {{"Disaster.Rescue", "emergency-extract", "RESCUE_EVENT"},
       {{{"Rescuer", "Responder", "Savior"}, 1},
        {{"Victim", "Evacuee", "Victim"}, 0},
        {{"Place", "Site", "Place"}, 4}},
       {"rescued", "freed", "evacuated"},
       {{ctx(), role(0), verb(), role(1), lit("in"), role(2)}, {role(0), verb(), role(1), ctx()}},
       "{0} rescued {1} in {2}"},
  };
  return all;
}

inline void push_phrase(std::vector<std::string>& tokens, const char* phrase) {
  std::istringstream ss(phrase);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline EventInstance gen_instance(const Concept& c, int fmt, int format_id, std::string id,
                                  std::mt19937_64& rng) {
  EventInstance inst;
  inst.id = std::move(id);
  inst.event_type = c.event_names[fmt];
  inst.format_id = format_id;
  for (const auto& r : c.roles) inst.roles.push_back(r.names[fmt]);

  const auto& pattern = c.patterns[pick(rng, c.patterns.size())];
  const char* verb_word = c.verbs[pick(rng, c.verbs.size())];
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (const auto& item : pattern) {
    switch (item.kind) {
      case ItemKind::Lit:
        push_phrase(inst.tokens, item.lit);
        break;
      case ItemKind::Verb: {
        const int pos = static_cast<int>(inst.tokens.size());
        inst.tokens.push_back(verb_word);
        inst.trigger = Span(pos, pos);
        break;
      }
      case ItemKind::Role: {
        const auto& lex = lexicons()[c.roles[item.role].lexicon];
        const int start = static_cast<int>(inst.tokens.size());
        push_phrase(inst.tokens, lex[pick(rng, lex.size())]);
        const int end = static_cast<int>(inst.tokens.size()) - 1;
        inst.gold_args[c.roles[item.role].names[fmt]].push_back(Span(start, end));
        break;
      }
      case ItemKind::Ctx:
        if (coin(rng) < 0.75) push_phrase(inst.tokens, context_phrases()[pick(rng, context_phrases().size())]);
        break;
    }
  }
  return inst;
}

inline std::string render_template(const Concept& c, int fmt) {
  std::string out;
  const std::string skel = c.template_skeleton;
  for (std::size_t i = 0; i < skel.size();) {
    if (skel[i] == '{') {
      const auto close = skel.find('}', i);
      const int r = std::stoi(skel.substr(i + 1, close - i - 1));
      out += "<";
      out += c.roles[r].names[fmt];
      out += ">";
      i = close + 1;
    } else {
      out += skel[i++];
    }
  }
  return out;
}

}  // namespace synth_detail

struct SyntheticCorpora {
  std::vector<EventInstance> d1;
  std::vector<EventInstance> d2;
  std::map<std::string, std::string> templates;  // event type -> template, both formats
  int n_shared_types = 0;
};

struct ZeroShotCorpus {
  std::vector<EventInstance> instances;  // format_id 3
  std::map<std::string, std::string> templates;
};

// Two corpora over a shared vocabulary. A fraction `overlap` of the concept
// universe appears in both corpora under different event-type names; the
// remaining concepts are split between them. Deterministic per seed; `tag`
// namespaces the instance ids and `stream` selects an independent instance
// stream while keeping the concept partition fixed, so train/dev/test splits
// of one corpus pair stay consistent.
inline SyntheticCorpora make_synthetic_corpora(std::uint64_t seed, int n1, int n2, double overlap,
                                               const std::string& tag = "", std::uint64_t stream = 0) {
  if (n1 <= 0 || n2 <= 0) throw std::invalid_argument("make_synthetic_corpora: n1 and n2 must be positive");
  if (overlap < 0.0 || overlap > 1.0) throw std::invalid_argument("make_synthetic_corpora: overlap must be in [0,1]");

  using namespace synth_detail;
  const auto& all = concepts();
  const int n_concepts = static_cast<int>(all.size());
  const int n_shared = static_cast<int>(std::lround(overlap * n_concepts));

  std::vector<int> order(n_concepts);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(seed, 0));
  for (int i = n_concepts - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<int>(pick(split_rng, i + 1))]);
  }

  std::vector<int> c1(order.begin(), order.begin() + n_shared);
  std::vector<int> c2 = c1;
  for (int i = n_shared; i < n_concepts; ++i) {
    if ((i - n_shared) % 2 == 0) {
      c1.push_back(order[i]);
    } else {
      c2.push_back(order[i]);
    }
  }
  std::sort(c1.begin(), c1.end());
  std::sort(c2.begin(), c2.end());

  SyntheticCorpora out;
  out.n_shared_types = n_shared;

  const std::string sep = tag.empty() ? "-" : "-" + tag + "-";
  const std::uint64_t base = mix_seed(seed, 7777 + stream);
  std::mt19937_64 rng1(mix_seed(base, 1));
  for (int i = 0; i < n1; ++i) {
    const auto& c = all[c1[pick(rng1, c1.size())]];
    out.d1.push_back(gen_instance(c, 0, 1, "d1" + sep + std::to_string(i), rng1));
  }
  std::mt19937_64 rng2(mix_seed(base, 2));
  for (int i = 0; i < n2; ++i) {
    const auto& c = all[c2[pick(rng2, c2.size())]];
    out.d2.push_back(gen_instance(c, 1, 2, "d2" + sep + std::to_string(i), rng2));
  }

  for (int ci : c1) out.templates[all[ci].event_names[0]] = render_template(all[ci], 0);
  for (int ci : c2) out.templates[all[ci].event_names[1]] = render_template(all[ci], 1);
  return out;
}

// Held-out third-format rendering of the full concept universe, for
// zero-shot evaluation. Same filler vocabulary, new event-type names,
// mostly-shared role names.
inline ZeroShotCorpus make_zero_shot_corpus(std::uint64_t seed, int n, const std::string& tag = "") {
  if (n <= 0) throw std::invalid_argument("make_zero_shot_corpus: n must be positive");
  using namespace synth_detail;
  const auto& all = concepts();
  ZeroShotCorpus out;
  const std::string sep = tag.empty() ? "-" : "-" + tag + "-";
  std::mt19937_64 rng(mix_seed(seed, 3));
  for (int i = 0; i < n; ++i) {
    const auto& c = all[pick(rng, all.size())];
    out.instances.push_back(gen_instance(c, 2, 3, "d3" + sep + std::to_string(i), rng));
  }
  for (const auto& c : all) out.templates[c.event_names[2]] = render_template(c, 2);
  return out;
}

}  // namespace eaekit::corpus
