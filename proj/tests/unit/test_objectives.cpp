#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "xpr/objectives.hpp"
#include "xpr/selfcheck.hpp"

using namespace xpr;
using obj::Objective;

namespace {

// A partition with prescribed member probabilities; programs and action
// ids are synthetic, distinct placeholders.
search::SeenPartition make_partition(const std::vector<double>& p_se,
                                     const std::vector<double>& p_sn) {
  search::SeenPartition part;
  int tag = 0;
  auto make_seq = [&tag](double prob) {
    search::ScoredSequence s;
    s.logprob = std::log(prob);
    s.actions = {tag};
    s.program.target_type = "t";
    s.program.conditions.push_back(
        {"a", lang::CompareOp::Eq, lang::Value::number(tag)});
    ++tag;
    return s;
  };
  for (double p : p_se) {
    part.p_se.push_back(make_seq(p));
    part.mass_se += p;
  }
  for (double p : p_sn) {
    part.p_sn.push_back(make_seq(p));
    part.mass_sn += p;
  }
  return part;
}

double entropy_weight_sum(const obj::PosteriorQ& q) {
  return q.explicit_mass() + q.implicit_residual;
}

}  // namespace

TEST_CASE("self-training q is a delta on the most probable program") {
  const auto part = make_partition({0.2, 0.1}, {});
  const auto q = obj::q_self_training(part);
  REQUIRE(q.has_value());
  REQUIRE(q->support.size() == 1);
  CHECK(q->support[0].second == 1.0);
  CHECK(q->support[0].first == part.p_se[0].program);
  CHECK(entropy_weight_sum(*q) == doctest::Approx(1.0));

  CHECK(!obj::q_self_training(make_partition({}, {0.5})).has_value());
}

TEST_CASE("top-k q renormalizes over the seen executable set") {
  const auto part = make_partition({0.2, 0.1}, {});
  const auto q = obj::q_top_k(part);
  REQUIRE(q.has_value());
  CHECK(q->support[0].second == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(q->support[1].second == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  const auto single = obj::q_top_k(make_partition({0.07}, {0.2}));
  CHECK(single->support[0].second == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loss values follow the closed-form formulas") {
  // L_ST = -log p(y*)
  auto st = obj::unsup_loss(Objective::SelfTraining,
                            make_partition({0.2, 0.1}, {0.3}));
  CHECK(st.loss == doctest::Approx(1.6094379124341003).epsilon(1e-12));

  // L_top-k = -log mass_se
  auto topk =
      obj::unsup_loss(Objective::TopK, make_partition({0.2, 0.1}, {0.3}));
  CHECK(topk.loss == doctest::Approx(1.2039728043259361).epsilon(1e-12));

  // L_repulsion = -log(1 - mass_sn)
  auto rep =
      obj::unsup_loss(Objective::Repulsion, make_partition({0.1}, {0.3}));
  CHECK(rep.loss == doctest::Approx(0.35667494393873245).epsilon(1e-12));
  auto rep0 = obj::unsup_loss(Objective::Repulsion, make_partition({0.1}, {}));
  CHECK(rep0.loss == 0.0);

  // L_gentle = -c log mass_se - (1-c) log(1 - mass_se - mass_sn)
  auto gen =
      obj::unsup_loss(Objective::Gentle, make_partition({0.2}, {0.3}));
  CHECK(gen.loss == doctest::Approx(1.1512925464970227).epsilon(1e-9));

  // Expected failure mass for the reinforce baseline.
  auto rl =
      obj::unsup_loss(Objective::Reinforce, make_partition({0.2, 0.1}, {0.3}));
  CHECK(rl.loss == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("gentle reduces to top-k on a full-width all-seen beam") {
  // mass_se + mass_sn == 1: the unseen term vanishes and c == 1.
  const auto part = make_partition({0.25, 0.35}, {0.4});
  const auto gentle = obj::unsup_loss(Objective::Gentle, part);
  const auto topk = obj::unsup_loss(Objective::TopK, part);
  CHECK(gentle.loss == doctest::Approx(topk.loss).epsilon(1e-9));
}

TEST_CASE("gentle q shifts the non-executable mass onto the seen set") {
  const auto part = make_partition({0.2}, {0.3});
  const auto q = obj::q_gentle(part);
  REQUIRE(q.support.size() == 1);
  CHECK(q.support[0].second == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(q.implicit_residual == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("every q construction is a distribution") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> unif(0.01, 0.2);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> se(rng() % 4), sn(rng() % 4);
    for (double& v : se) v = unif(rng);
    for (double& v : sn) v = unif(rng);
    const auto part = make_partition(se, sn);

    std::vector<obj::PosteriorQ> qs;
    if (!se.empty()) {
      qs.push_back(*obj::q_self_training(part));
      qs.push_back(*obj::q_top_k(part));
      qs.push_back(*obj::q_sparse(part));
    }
    qs.push_back(obj::q_repulsion(part));
    qs.push_back(obj::q_gentle(part));
    for (const auto& q : qs) {
      for (const auto& [prog, w] : q.support) CHECK(w >= 0.0);
      CHECK(q.implicit_residual >= 0.0);
      CHECK(entropy_weight_sum(q) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(std::isfinite(q.entropy()));
    }
  }
}

TEST_CASE("q_repulsion equals p renormalized over the complement of P_SN") {
  check::Instance inst = check::random_instance(31, 2, 400, 0.4);
  const auto beam = search::beam_search(*inst.scorer, inst.x, inst.params,
                                        static_cast<int>(inst.space_size));
  const auto part = search::partition(beam, inst.kb);
  const auto q = obj::q_repulsion(part);
  // Full width: the residual is zero and each executable program has
  // weight p / (1 - mass_sn).
  CHECK(q.implicit_residual == doctest::Approx(0.0).epsilon(1e-9));
  for (std::size_t i = 0; i < part.p_se.size(); ++i) {
    CHECK(q.support[i].second ==
          doctest::Approx(std::exp(part.p_se[i].logprob) /
                          (1.0 - part.mass_sn))
              .epsilon(1e-9));
  }
}

TEST_CASE("sparsemax handles the canonical fixtures") {
  {
    const auto p = obj::sparsemax(std::vector<double>{1.3, 1.3, 1.3});
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  {
    const auto p = obj::sparsemax(std::vector<double>{2.0, 0.0});
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
  }
  {
    const std::vector<double> z{0.7, 0.3, -1.0};
    const auto p = obj::sparsemax(z);
    CHECK(p[0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(p[2] == 0.0);
    // Brute-force Euclidean projection confirms.
    const auto q = check::project_simplex_bisection(z);
    for (int i = 0; i < 3; ++i) {
      CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("sparse q interpolates between self-training and top-k") {
  // Single element: a delta, and all three losses coincide exactly.
  {
    const auto part = make_partition({0.15}, {0.2});
    const auto q = obj::q_sparse(part);
    CHECK(q->support[0].second == 1.0);
    const double st = obj::unsup_loss(Objective::SelfTraining, part).loss;
    const double topk = obj::unsup_loss(Objective::TopK, part).loss;
    const double sparse = obj::unsup_loss(Objective::Sparse, part).loss;
    CHECK(st == topk);
    CHECK(st == sparse);
  }
  // A log-prob gap of at least one forces a vertex.
  {
    const auto part = make_partition({0.5, 0.5 * std::exp(-1.5)}, {});
    const auto q = obj::q_sparse(part);
    CHECK(q->support[0].second == 1.0);
    CHECK(q->support[1].second == 0.0);
    CHECK(obj::unsup_loss(Objective::Sparse, part).loss ==
          doctest::Approx(
              obj::unsup_loss(Objective::SelfTraining, part).loss));
  }
  // All equal: uniform q and L_sparse = L_top-k + log |P_SE|.
  {
    const auto part = make_partition({0.1, 0.1, 0.1}, {});
    const auto q = obj::q_sparse(part);
    for (const auto& [prog, w] : q->support) {
      CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    }
    const double sparse = obj::unsup_loss(Objective::Sparse, part).loss;
    const double topk = obj::unsup_loss(Objective::TopK, part).loss;
    CHECK(sparse == doctest::Approx(topk + std::log(3.0)).epsilon(1e-9));
  }
}

TEST_CASE("reinforce weights vanish when nothing executable is seen") {
  const auto part = make_partition({}, {0.2, 0.1});
  const auto rl = obj::unsup_loss(Objective::Reinforce, part);
  CHECK(!rl.skipped);
  CHECK(rl.grad_weights.empty());
  CHECK(rl.loss == 1.0);
}

TEST_CASE("empty seen-executable sets skip or fall back") {
  const auto part = make_partition({}, {0.3});
  CHECK(obj::unsup_loss(Objective::SelfTraining, part).skipped);
  CHECK(obj::unsup_loss(Objective::TopK, part).skipped);
  CHECK(obj::unsup_loss(Objective::Sparse, part).skipped);
  const auto gentle = obj::unsup_loss(Objective::Gentle, part);
  const auto rep = obj::unsup_loss(Objective::Repulsion, part);
  CHECK(!gentle.skipped);
  CHECK(gentle.loss == rep.loss);
}

TEST_CASE("losses stay finite under adversarial masses") {
  const double tiny = 1e-300;
  for (const auto& part :
       {make_partition({1.0 - 1e-13}, {1e-13}),
        make_partition({tiny}, {1.0 - 1e-13}),
        make_partition({tiny, tiny}, {tiny}),
        make_partition({0.5}, {0.5})}) {
    for (Objective o : obj::all_objectives()) {
      const auto r = obj::unsup_loss(o, part);
      if (r.skipped) continue;
      CHECK(std::isfinite(r.loss));
      CHECK(r.loss >= 0.0);
      for (const auto& gw : r.grad_weights) CHECK(std::isfinite(gw.weight));
    }
  }
}

TEST_CASE("kkt: the renormalized distribution wins against perturbations") {
  check::Instance inst = check::random_instance(61, 2, 300, 0.4);
  const auto report = obj::kkt_estep_check(*inst.scorer, inst.x, inst.params,
                                           inst.kb, 500, 9);
  CHECK(report.pass());
  CHECK(report.best_perturbed >= report.q_star_objective - 1e-12);
}

TEST_CASE("kkt: a single executable program gives a delta with KL = -log p") {
  // One categorical value: "color = red" is the only executable program.
  std::istringstream in(R"(!type t
!prop t color categorical
c1 color red
)");
  const exec::KnowledgeBase kb = exec::KnowledgeBase::load(in);
  lang::Grammar g = exec::grammar_from_kb(kb, 1);
  model::ModelConfig mc{4, g.action_count(), 2, 3};
  model::Scorer scorer(g, mc);
  const model::Params params = model::init_params(mc, 2);
  const model::Utterance x{{0, 3}};

  const auto report = obj::kkt_estep_check(scorer, x, params, kb, 200, 4);
  CHECK(report.executable_count == 1);
  CHECK(report.pass());
  const double lp =
      scorer.log_prob(x, lang::parse("select t where color = red"), params);
  CHECK(report.q_star_objective == doctest::Approx(-lp).epsilon(1e-12));
}

TEST_CASE("objective tokens round-trip") {
  for (Objective o : obj::all_objectives()) {
    CHECK(obj::parse_objective(obj::objective_token(o)) == o);
  }
  CHECK(!obj::parse_objective("bogus").has_value());
}
