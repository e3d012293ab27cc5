#pragma once

// Per-event-type prompt templates with named role slots. Slot markup uses
// angle brackets around the role name; a role may own several slots.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eaekit::prompts {

struct Slot {
  std::string role;
  int first = 0;  // inclusive token range inside the template
  int last = 0;

  int length() const { return last - first + 1; }
};

struct PromptTemplate {
  std::string event_type;
  std::vector<std::string> tokens;  // slot positions hold the bare role name
  std::vector<Slot> slots;          // ordered by first position
};

// Parses "<Person> married <Person> at <Place>" style markup. Repeated role
// names yield distinct slots. Each slot placeholder occupies exactly one
// template token.
inline PromptTemplate parse_template(const std::string& event_type, const std::string& text) {
  PromptTemplate t;
  t.event_type = event_type;

  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) break;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    const std::string word = text.substr(pos, end - pos);
    const std::size_t column = pos + 1;  // 1-based character column

    const bool opens = word.front() == '<';
    const bool closes = word.back() == '>';
    if (opens != closes) {
      throw std::runtime_error("template for '" + event_type + "': unbalanced slot brackets at column " +
                               std::to_string(column));
    }
    if (opens) {
      const std::string role = word.substr(1, word.size() - 2);
      if (role.empty() || role.find('<') != std::string::npos || role.find('>') != std::string::npos) {
        throw std::runtime_error("template for '" + event_type + "': malformed slot at column " +
                                 std::to_string(column));
      }
      const int idx = static_cast<int>(t.tokens.size());
      t.tokens.push_back(role);
      t.slots.push_back(Slot{role, idx, idx});
    } else {
      if (word.find('<') != std::string::npos || word.find('>') != std::string::npos) {
        throw std::runtime_error("template for '" + event_type + "': unbalanced slot brackets at column " +
                                 std::to_string(column));
      }
      t.tokens.push_back(word);
    }
    pos = end;
  }
  return t;
}

inline std::string serialize_template(const PromptTemplate& t) {
  std::vector<bool> is_slot(t.tokens.size(), false);
  for (const auto& s : t.slots) {
    for (int i = s.first; i <= s.last; ++i) is_slot[i] = true;
  }
  std::string out;
  for (std::size_t i = 0; i < t.tokens.size(); ++i) {
    if (i) out += ' ';
    out += is_slot[i] ? "<" + t.tokens[i] + ">" : t.tokens[i];
  }
  return out;
}

// Indices of the slots carrying `role`, in template order.
inline std::vector<int> slots_for_role(const PromptTemplate& t, const std::string& role) {
  std::vector<int> out;
  for (std::size_t i = 0; i < t.slots.size(); ++i) {
    if (t.slots[i].role == role) out.push_back(static_cast<int>(i));
  }
  return out;
}

// Checks every slot role against an event type's role set.
inline void validate_against_roles(const PromptTemplate& t, const std::vector<std::string>& roles) {
  for (const auto& s : t.slots) {
    bool found = false;
    for (const auto& r : roles) {
      if (r == s.role) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw std::runtime_error("template for '" + t.event_type + "': slot role '" + s.role +
                               "' not in the event's role set");
    }
  }
}

using TemplateRegistry = std::map<std::string, PromptTemplate>;

// Registry file: one line per event type, "EVENT_TYPE<TAB>template string".
inline TemplateRegistry load_template_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open template registry: " + path);
  TemplateRegistry reg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected EVENT_TYPE<TAB>template");
    }
    const std::string event_type = line.substr(0, tab);
    reg[event_type] = parse_template(event_type, line.substr(tab + 1));
  }
  return reg;
}

inline void save_template_registry(const std::string& path,
                                   const std::map<std::string, std::string>& templates) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write template registry: " + path);
  for (const auto& [event_type, text] : templates) out << event_type << '\t' << text << '\n';
}

}  // namespace eaekit::prompts
