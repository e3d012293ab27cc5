#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "eaekit/prompts.hpp"
#include "eaekit/synthetic.hpp"

using namespace eaekit::prompts;

TEST_CASE("parse_template") {
  SECTION("the marry prompt yields four slots in textual order") {
    const auto t = parse_template("Life.Marry", "<Person> married <Person> at <Place> ( and <Place> )");
    REQUIRE(t.slots.size() == 4);
    CHECK(t.slots[0].role == "Person");
    CHECK(t.slots[1].role == "Person");
    CHECK(t.slots[2].role == "Place");
    CHECK(t.slots[3].role == "Place");
    for (std::size_t i = 1; i < t.slots.size(); ++i) CHECK(t.slots[i - 1].first < t.slots[i].first);
  }

  SECTION("slotless text parses to zero slots") {
    const auto t = parse_template("E", "no slots here");
    CHECK(t.slots.empty());
    CHECK(t.tokens.size() == 3);
  }

  SECTION("single-token slots land on their template positions") {
    const auto t = parse_template("E", "<A> x <B>");
    REQUIRE(t.slots.size() == 2);
    CHECK(t.slots[0].first == 0);
    CHECK(t.slots[0].last == 0);
    CHECK(t.slots[1].first == 2);
    CHECK(t.slots[1].last == 2);
    CHECK(t.tokens == std::vector<std::string>{"A", "x", "B"});
  }

  SECTION("unbalanced brackets report the column") {
    REQUIRE_THROWS_WITH(parse_template("E", "<A married <B>"),
                        Catch::Matchers::ContainsSubstring("column 1"));
    REQUIRE_THROWS_WITH(parse_template("E", "ok <Broken again"),
                        Catch::Matchers::ContainsSubstring("column 4"));
  }

  SECTION("slot roles are validated against a role set") {
    const auto t = parse_template("E", "<A> x <B>");
    REQUIRE_NOTHROW(validate_against_roles(t, {"A", "B", "C"}));
    REQUIRE_THROWS_WITH(validate_against_roles(t, {"A"}),
                        Catch::Matchers::ContainsSubstring("'B'"));
  }
}

TEST_CASE("slots_for_role") {
  const auto marry = parse_template("Life.Marry", "<Person> married <Person> at <Place> ( and <Place> )");
  CHECK(slots_for_role(marry, "Place") == std::vector<int>{2, 3});
  CHECK(slots_for_role(marry, "Victim").empty());
  const auto twice = parse_template("E", "<A> x <A>");
  CHECK(slots_for_role(twice, "A") == std::vector<int>{0, 1});
}

TEST_CASE("parse then re-serialize is the identity on normalized whitespace") {
  const std::vector<std::string> texts = {
      "<Person> married <Person> at <Place> ( and <Place> )",
      "<Attacker> attacked <Target> with <Instrument> in <Place>",
      "plain words only",
      "<A> x <B>",
  };
  for (const auto& text : texts) {
    CHECK(serialize_template(parse_template("E", text)) == text);
  }
  // untidy whitespace normalizes to single spaces
  CHECK(serialize_template(parse_template("E", "  <A>   x\t<B> ")) == "<A> x <B>");
}

TEST_CASE("the union of slots_for_role over all roles covers each slot exactly once") {
  const auto corpora = eaekit::corpus::make_synthetic_corpora(1, 5, 5, 1.0);
  for (const auto& [event_type, text] : corpora.templates) {
    const auto t = parse_template(event_type, text);
    std::set<std::string> roles;
    for (const auto& s : t.slots) roles.insert(s.role);
    std::vector<int> all;
    for (const auto& r : roles) {
      for (int idx : slots_for_role(t, r)) all.push_back(idx);
    }
    std::sort(all.begin(), all.end());
    std::vector<int> expect(t.slots.size());
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
  }
}

TEST_CASE("template registry round-trips through its file format") {
  const auto corpora = eaekit::corpus::make_synthetic_corpora(1, 5, 5, 0.5);
  const auto path = (std::filesystem::temp_directory_path() / "eaekit_templates.tsv").string();
  save_template_registry(path, corpora.templates);
  const auto reg = load_template_registry(path);
  REQUIRE(reg.size() == corpora.templates.size());
  for (const auto& [event_type, text] : corpora.templates) {
    REQUIRE(reg.count(event_type) == 1);
    CHECK(serialize_template(reg.at(event_type)) == text);
  }

  const auto bad = (std::filesystem::temp_directory_path() / "eaekit_bad_templates.tsv").string();
  std::ofstream(bad) << "NoTabHere\n";
  REQUIRE_THROWS_WITH(load_template_registry(bad), Catch::Matchers::ContainsSubstring(":1:"));
}
