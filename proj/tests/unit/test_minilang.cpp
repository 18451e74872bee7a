#include <random>
#include <set>

#include "doctest.h"
#include "xpr/error.hpp"
#include "xpr/minilang.hpp"

using namespace xpr;
using lang::CompareOp;
using lang::Grammar;
using lang::GrammarSpec;
using lang::Program;
using lang::Value;

namespace {

Program make_program(std::string type,
                     std::vector<lang::Condition> conds) {
  Program p;
  p.target_type = std::move(type);
  p.conditions = std::move(conds);
  return p;
}

// The Figure-1-like restaurant grammar used across the minilang tests.
Grammar restaurant_grammar(int max_conditions = 3) {
  GrammarSpec spec;
  spec.max_conditions = max_conditions;
  spec.types.push_back({"restaurant", {"star_rating", "cuisine"}});
  spec.props.push_back(
      {"star_rating", true, {Value::number(3), Value::number(5)}});
  spec.props.push_back(
      {"cuisine", false, {Value::symbol("thai"), Value::symbol("italian")}});
  return Grammar::build(spec);
}

}  // namespace

TEST_CASE("render produces the canonical text") {
  CHECK(lang::render(make_program(
            "restaurant", {{"star_rating", CompareOp::Eq, Value::number(3)}})) ==
        "select restaurant where star_rating = 3");
  CHECK(lang::render(make_program(
            "restaurant",
            {{"star_rating", CompareOp::Eq, Value::number(3)},
             {"cuisine", CompareOp::Eq, Value::symbol("thai")}})) ==
        "select restaurant where star_rating = 3 and cuisine = thai");
}

TEST_CASE("parse accepts syntactically legal but semantically bad programs") {
  const Program p = lang::parse("select restaurant where cuisine > 3");
  CHECK(p.target_type == "restaurant");
  REQUIRE(p.conditions.size() == 1);
  CHECK(p.conditions[0].property == "cuisine");
  CHECK(p.conditions[0].op == CompareOp::Gt);
  CHECK(p.conditions[0].value == Value::number(3));
}

TEST_CASE("parse reports the first offending token") {
  auto index_of = [](const char* text) {
    try {
      lang::parse(text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SyntaxError);
      return e.token_index();
    }
    return -1;
  };
  CHECK(index_of("select where") == 1);
  CHECK(index_of("pick restaurant where a = 1") == 0);
  CHECK(index_of("select restaurant") == 2);
  CHECK(index_of("select restaurant where a = 1 or b = 2") == 6);
  CHECK(index_of("select restaurant where a ~ 1") == 4);
  CHECK(index_of("select restaurant where a = 1 and b = 2 and c = 3 and") ==
        14);
  CHECK(index_of("select restaurant where a = 1 extra") == 6);
}

TEST_CASE("parse and render round-trip") {
  for (const char* text :
       {"select restaurant where star_rating = 3",
        "select restaurant where star_rating = 3 and cuisine = thai",
        "select restaurant where a < 1.5 and b > 2 and c = x"}) {
    const Program p = lang::parse(text);
    CHECK(lang::render(p) == text);
    CHECK(lang::parse(lang::render(p)) == p);
  }
}

TEST_CASE("action sequence lengths follow the production structure") {
  const Grammar g = restaurant_grammar();
  const Program one = lang::parse("select restaurant where star_rating = 3");
  CHECK(lang::actions(one, g).size() == 5);
  const Program two = lang::parse(
      "select restaurant where star_rating = 3 and cuisine = thai");
  CHECK(lang::actions(two, g).size() == 9);
}

TEST_CASE("actions reject names outside the grammar") {
  const Grammar g = restaurant_grammar();
  auto code_of = [&](const char* text) {
    try {
      lang::actions(lang::parse(text), g);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  CHECK(code_of("select hotel where star_rating = 3") ==
        ErrorCode::UnknownSymbol);
  CHECK(code_of("select restaurant where rating = 3") ==
        ErrorCode::UnknownSymbol);
  // "thai" is a literal of cuisine, not of star_rating: not decodable.
  CHECK(code_of("select restaurant where star_rating = thai") ==
        ErrorCode::UnknownSymbol);
  // Type errors the executor can see are still decodable.
  CHECK_NOTHROW(lang::actions(lang::parse("select restaurant where cuisine > thai"), g));
}

TEST_CASE("enumerate covers the exact product") {
  // 1 type, 2 properties sharing pools of two numeric values, 3 ops
  // each, one conjunct: 2 x 3 x 2 = 12 programs.
  GrammarSpec spec;
  spec.max_conditions = 1;
  spec.types.push_back({"item", {"a", "b"}});
  spec.props.push_back({"a", true, {Value::number(1), Value::number(2)}});
  spec.props.push_back({"b", true, {Value::number(1), Value::number(2)}});
  const Grammar g = Grammar::build(spec);
  const auto programs = lang::enumerate_programs(g);
  CHECK(programs.size() == 12);

  std::set<std::string> rendered;
  for (const auto& p : programs) rendered.insert(lang::render(p));
  CHECK(rendered.size() == programs.size());  // no duplicates
}

TEST_CASE("a property with an empty pool contributes no programs") {
  GrammarSpec spec;
  spec.max_conditions = 1;
  spec.types.push_back({"item", {"a", "b"}});
  spec.props.push_back({"a", true, {Value::number(1), Value::number(2)}});
  spec.props.push_back({"b", true, {}});
  const Grammar g = Grammar::build(spec);
  CHECK(lang::enumerate_programs(g).size() == 6);  // only property a
}

TEST_CASE("enumerate respects the capacity bound") {
  const Grammar g = restaurant_grammar();
  CHECK_THROWS_AS((void)lang::enumerate_programs(g, 10),
                  Error);
}

TEST_CASE("actions and decode are a bijection over the whole space") {
  const Grammar g = restaurant_grammar();
  const auto programs = lang::enumerate_programs(g);
  std::set<std::vector<lang::ActionId>> seen;
  for (const auto& p : programs) {
    const auto acts = lang::actions(p, g);
    CHECK(seen.insert(acts).second);
    CHECK(lang::decode(acts, g) == p);
  }
  // Lexicographic output order by action ids.
  std::vector<std::vector<lang::ActionId>> all;
  for (const auto& p : programs) all.push_back(lang::actions(p, g));
  CHECK(std::is_sorted(all.begin(), all.end()));
}

TEST_CASE("mask-legal random walks always terminate in a parseable program") {
  const Grammar g = restaurant_grammar();
  std::mt19937_64 rng(3);
  for (int it = 0; it < 200; ++it) {
    Grammar::Cursor c = g.start();
    std::vector<lang::ActionId> acts;
    std::vector<lang::ActionId> legal;
    int guard = 0;
    while (!g.is_complete(c)) {
      g.legal_actions(c, legal);
      REQUIRE(!legal.empty());
      const lang::ActionId a = legal[rng() % legal.size()];
      acts.push_back(a);
      c = g.advance(c, a);
      REQUIRE(++guard <= g.max_sequence_length());
    }
    const Program p = lang::decode(acts, g);
    CHECK(lang::parse(lang::render(p)) == p);
    CHECK(lang::actions(p, g) == acts);
  }
}

TEST_CASE("value tokens canonicalize numbers") {
  CHECK(Value::from_token("3").is_number());
  CHECK(Value::from_token("3").token() == "3");
  CHECK(Value::from_token("3.5").token() == "3.5");
  CHECK(!Value::from_token("thai").is_number());
  CHECK(Value::from_token("3x").kind == Value::Kind::Symbol);
}
