#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "xpr/executor.hpp"
#include "xpr/search.hpp"
#include "xpr/selfcheck.hpp"

using namespace xpr;

namespace {

exec::KnowledgeBase figure_kb() {
  std::istringstream in(R"(!type restaurant
!prop restaurant star_rating numeric
!prop restaurant cuisine categorical
r1 star_rating 3
r1 cuisine thai
r2 star_rating 5
r2 cuisine italian
)");
  return exec::KnowledgeBase::load(in);
}

}  // namespace

TEST_CASE("a full-width beam reproduces the enumeration with exact scores") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 4; ++trial) {
    check::Instance inst = check::random_instance(rng(), 2, 400, 0.4);
    const auto programs = lang::enumerate_programs(inst.scorer->grammar());
    const auto beam = search::beam_search(*inst.scorer, inst.x, inst.params,
                                          static_cast<int>(programs.size()));
    REQUIRE(beam.size() == programs.size());

    // Exact scoring oracle, sorted the way the beam sorts.
    struct Scored {
      double lp;
      std::vector<lang::ActionId> acts;
    };
    std::vector<Scored> want;
    for (const auto& p : programs) {
      const auto acts = lang::actions(p, inst.scorer->grammar());
      want.push_back(
          {inst.scorer->log_prob_actions(inst.x, acts, inst.params), acts});
    }
    std::sort(want.begin(), want.end(), [](const Scored& a, const Scored& b) {
      if (a.lp != b.lp) return a.lp > b.lp;
      return a.acts < b.acts;
    });
    for (std::size_t i = 0; i < beam.size(); ++i) {
      CHECK(beam[i].actions == want[i].acts);
      CHECK(beam[i].logprob == doctest::Approx(want[i].lp).epsilon(1e-12));
    }
  }
}

TEST_CASE("beam width one is the greedy decode") {
  check::Instance inst = check::random_instance(15, 2, 400, 0.4);
  const model::Scorer& scorer = *inst.scorer;
  const auto beam = search::beam_search(scorer, inst.x, inst.params, 1);
  REQUIRE(beam.size() == 1);

  // Greedy reference: argmax legal action at every step.
  const auto enc = scorer.encode(inst.x, inst.params);
  model::Scorer::DecodeState st = scorer.start_state(enc);
  std::vector<lang::ActionId> greedy;
  while (!scorer.grammar().is_complete(st.cursor)) {
    const auto r = scorer.step(enc, st, inst.params);
    lang::ActionId best = r.legal[0];
    for (lang::ActionId a : r.legal) {
      if (r.log_probs[a] > r.log_probs[best]) best = a;
    }
    greedy.push_back(best);
    st = scorer.apply(st, r, best);
  }
  CHECK(beam[0].actions == greedy);
}

TEST_CASE("uniform parameters yield the lexicographically smallest programs") {
  // Uniform pools and one conjunct: every complete program ties, so the
  // tie-break decides the whole beam.
  lang::GrammarSpec spec;
  spec.max_conditions = 1;
  spec.types.push_back({"item", {"a", "b"}});
  spec.props.push_back({"a", true,
                        {lang::Value::number(1), lang::Value::number(2),
                         lang::Value::number(3)}});
  spec.props.push_back({"b", true,
                        {lang::Value::number(1), lang::Value::number(2),
                         lang::Value::number(3)}});
  lang::Grammar g = lang::Grammar::build(spec);
  model::ModelConfig mc{4, g.action_count(), 2, 3};
  model::Params zeros{mc, std::vector<double>(mc.param_count(), 0.0)};
  model::Scorer scorer(g, mc);
  model::Utterance x{{0, 1, 2}};

  const auto all = lang::enumerate_programs(scorer.grammar());
  std::vector<std::vector<lang::ActionId>> lex;
  for (const auto& p : all) lex.push_back(lang::actions(p, scorer.grammar()));
  std::sort(lex.begin(), lex.end());

  const int k = 5;
  const auto beam = search::beam_search(scorer, x, zeros, k);
  REQUIRE(static_cast<int>(beam.size()) == k);
  for (int i = 0; i < k; ++i) CHECK(beam[i].actions == lex[i]);
}

TEST_CASE("partition reproduces the figure's classification") {
  const exec::KnowledgeBase kb = figure_kb();
  const lang::Grammar g = exec::grammar_from_kb(kb);
  model::ModelConfig mc{6, g.action_count(), 2, 3};
  model::Scorer scorer(g, mc);
  const model::Params params = model::init_params(mc, 5);
  model::Utterance x{{0, 1, 2, 3}};

  // Hand-build a beam from one executable gold and one type-error
  // program.
  const auto gold = lang::parse(
      "select restaurant where star_rating = 3 and cuisine = thai");
  const auto bad = lang::parse("select restaurant where cuisine > thai");
  std::vector<search::ScoredSequence> beam(2);
  beam[0].program = gold;
  beam[0].actions = lang::actions(gold, scorer.grammar());
  beam[0].logprob = scorer.log_prob(x, gold, params);
  beam[1].program = bad;
  beam[1].actions = lang::actions(bad, scorer.grammar());
  beam[1].logprob = scorer.log_prob(x, bad, params);

  const auto part = search::partition(beam, kb);
  REQUIRE(part.p_se.size() == 1);
  REQUIRE(part.p_sn.size() == 1);
  CHECK(part.p_se[0].program == gold);
  CHECK(part.p_sn[0].program == bad);
  CHECK(part.mass_se == doctest::Approx(std::exp(beam[0].logprob)));
  CHECK(part.mass_sn == doctest::Approx(std::exp(beam[1].logprob)));
}

TEST_CASE("full enumeration masses sum to one") {
  check::Instance inst = check::random_instance(44, 2, 400, 0.4);
  const auto beam = search::beam_search(*inst.scorer, inst.x, inst.params,
                                        static_cast<int>(inst.space_size));
  const auto part = search::partition(beam, inst.kb);
  CHECK(part.mass_se + part.mass_sn == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(part.mass_se ==
        doctest::Approx(search::exact_executable_mass(
                            *inst.scorer, inst.x, inst.params, inst.kb))
            .epsilon(1e-9));
}

TEST_CASE("exact executable mass has the right extremes") {
  // KB where every decodable program is executable: single row, single
  // categorical property, EQ-only space would be needed; use a numeric
  // property with one value so > and < are empty but decodable.
  std::istringstream in(R"(!type t
!prop t color categorical
c1 color red
c2 color red
)");
  const exec::KnowledgeBase kb = exec::KnowledgeBase::load(in);
  lang::Grammar g = exec::grammar_from_kb(kb, 1);
  model::ModelConfig mc{4, g.action_count(), 2, 3};
  model::Scorer scorer(g, mc);
  const model::Params params = model::init_params(mc, 3);
  model::Utterance x{{1, 2}};

  // Programs: color = red (reward 1), color > red, color < red (type
  // errors). Executable mass is exactly p("color = red").
  const double mass =
      search::exact_executable_mass(scorer, x, params, kb);
  const double want = std::exp(scorer.log_prob(
      x, lang::parse("select t where color = red"), params));
  CHECK(mass == doctest::Approx(want).epsilon(1e-12));

  // Empty KB data: every denotation is empty, mass 0. Build it with the
  // same grammar but a KB whose rows are gone.
  exec::KnowledgeBase empty = kb;
  empty.entities.clear();
  CHECK(search::exact_executable_mass(scorer, x, params, empty) == 0.0);
}
