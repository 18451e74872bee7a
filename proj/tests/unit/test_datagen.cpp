#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "xpr/datagen.hpp"
#include "xpr/error.hpp"

using namespace xpr;
using datagen::DomainSpec;
using lang::Value;

namespace {

DomainSpec tiny_domain(std::uint64_t seed) {
  DomainSpec spec;
  spec.type_name = "item";
  spec.seed = seed;
  spec.row_count = 3;
  spec.properties = {
      {"a", true, {Value::number(1), Value::number(2), Value::number(3)}},
      {"b", true, {Value::number(1), Value::number(2), Value::number(3)}},
  };
  spec.templates = {
      {{"find", "items", "with", "<prop1>", "<value1>"},
       {{"", lang::CompareOp::Eq, true}}},
  };
  return spec;
}

}  // namespace

TEST_CASE("one template over two properties and three values yields six") {
  const auto gen = datagen::generate(tiny_domain(5));
  CHECK(gen.examples.size() == 6);
  std::set<std::string> ids, renders;
  for (const auto& ex : gen.examples) {
    ids.insert(ex.id);
    renders.insert(lang::render(ex.gold));
  }
  CHECK(ids.size() == 6);
  CHECK(renders.size() == 6);
}

TEST_CASE("generation is a pure function of the spec") {
  const auto a = datagen::generate(tiny_domain(9));
  const auto b = datagen::generate(tiny_domain(9));
  std::ostringstream kb_a, kb_b;
  a.kb.save(kb_a);
  b.kb.save(kb_b);
  CHECK(kb_a.str() == kb_b.str());
  REQUIRE(a.examples.size() == b.examples.size());
  for (std::size_t i = 0; i < a.examples.size(); ++i) {
    CHECK(a.examples[i].id == b.examples[i].id);
    CHECK(a.examples[i].tokens == b.examples[i].tokens);
    CHECK(a.examples[i].gold == b.examples[i].gold);
  }
}

TEST_CASE("every generated gold program is executable") {
  const auto gen =
      datagen::generate(datagen::default_restaurant_domain(3, 400, 30));
  CHECK(gen.examples.size() == 400);
  for (const auto& ex : gen.examples) {
    CHECK(exec::reward(ex.gold, gen.kb));
  }
  // Gold programs are also decodable under the KB-derived grammar.
  const lang::Grammar g = exec::grammar_from_kb(gen.kb);
  for (const auto& ex : gen.examples) {
    CHECK_NOTHROW((void)lang::actions(ex.gold, g));
  }
}

TEST_CASE("the default domain includes hidden-condition ambiguity") {
  const auto gen =
      datagen::generate(datagen::default_restaurant_domain(3, 1000, 40));
  int multi = 0;
  for (const auto& ex : gen.examples) {
    // A hidden condition shows as a gold conjunct whose value token
    // never appears in the utterance.
    for (std::size_t ci = 1; ci < ex.gold.conditions.size(); ++ci) {
      const std::string tok = ex.gold.conditions[ci].value.token();
      bool mentioned = false;
      for (const auto& t : ex.tokens) mentioned |= t == tok;
      multi += !mentioned;
    }
  }
  CHECK(multi > 50);
}

TEST_CASE("split honors the labeled fraction exactly") {
  const auto gen =
      datagen::generate(datagen::default_restaurant_domain(7, 1000, 40));
  const auto corpus = datagen::split(gen.examples, 0.3, 11);
  CHECK(corpus.labeled.size() == 300);
  CHECK(corpus.unlabeled.size() == 700);

  const auto corpus10 = datagen::split(gen.examples, 0.1, 11);
  CHECK(corpus10.labeled.size() == 100);
  CHECK(corpus10.unlabeled.size() == 900);

  // Union is the corpus, intersection empty, hidden gold retained.
  std::set<std::string> seen;
  for (const auto& ex : corpus.labeled) seen.insert(ex.id);
  for (const auto& ex : corpus.unlabeled) {
    CHECK(seen.insert(ex.id).second);
    CHECK(ex.hidden_gold.has_value());
  }
  CHECK(seen.size() == gen.examples.size());
}

TEST_CASE("spec validation rejects unknown properties") {
  DomainSpec spec = tiny_domain(1);
  spec.templates.push_back(
      {{"odd", "<value1>"}, {{"missing", lang::CompareOp::Eq, true}}});
  CHECK_THROWS_AS((void)datagen::generate(spec), Error);

  DomainSpec uncovered = tiny_domain(1);
  uncovered.templates = {
      {{"only", "a", "<value1>"}, {{"a", lang::CompareOp::Eq, true}}}};
  CHECK_THROWS_AS((void)datagen::generate(uncovered), Error);
}

TEST_CASE("corpus files round-trip") {
  const auto gen = datagen::generate(tiny_domain(13));
  const auto corpus = datagen::split(gen.examples, 0.5, 3);
  const std::string path = "test_corpus.tsv";
  const std::string side = path + ".gold";
  datagen::write_corpus(path, corpus, "test fixture");
  datagen::write_sidecar(side, corpus, "test fixture");

  const auto loaded = datagen::read_corpus(path, side);
  REQUIRE(loaded.labeled.size() == corpus.labeled.size());
  REQUIRE(loaded.unlabeled.size() == corpus.unlabeled.size());
  for (std::size_t i = 0; i < corpus.labeled.size(); ++i) {
    CHECK(loaded.labeled[i].id == corpus.labeled[i].id);
    CHECK(loaded.labeled[i].tokens == corpus.labeled[i].tokens);
    CHECK(loaded.labeled[i].gold == corpus.labeled[i].gold);
  }
  for (std::size_t i = 0; i < corpus.unlabeled.size(); ++i) {
    CHECK(loaded.unlabeled[i].hidden_gold == corpus.unlabeled[i].hidden_gold);
  }
  std::remove(path.c_str());
  std::remove(side.c_str());
}
