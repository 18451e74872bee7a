#include <random>

#include "doctest.h"
#include "xpr/error.hpp"
#include "xpr/metrics.hpp"
#include "xpr/selfcheck.hpp"

using namespace xpr;

namespace {

search::ScoredSequence seq_of_length(int len, double logprob, int tag) {
  search::ScoredSequence s;
  s.actions.assign(len, tag);
  s.logprob = logprob;
  s.program.target_type = "t";
  s.program.conditions.push_back(
      {"a", lang::CompareOp::Eq, lang::Value::number(tag)});
  return s;
}

}  // namespace

TEST_CASE("avg_ratio implements the online length-ratio formula") {
  metrics::DiagnosticsAccumulator acc;
  search::SeenPartition part;
  part.p_se.push_back(seq_of_length(8, -1.0, 0));
  part.p_se.push_back(seq_of_length(8, -1.5, 1));
  acc.add_example(4, part, nullptr);
  CHECK(metrics::avg_ratio(acc) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("avg_ratio is undefined with no seen-executable programs") {
  metrics::DiagnosticsAccumulator acc;
  search::SeenPartition empty;
  acc.add_example(5, empty, nullptr);
  CHECK_THROWS_AS((void)metrics::avg_ratio(acc), Error);
}

TEST_CASE("coverage counts hidden-gold hits per example") {
  metrics::DiagnosticsAccumulator acc;
  search::SeenPartition part;
  part.p_se.push_back(seq_of_length(5, -1.0, 0));
  const lang::Program gold = part.p_se[0].program;
  acc.add_example(3, part, &gold);

  search::SeenPartition miss;
  miss.p_se.push_back(seq_of_length(5, -1.0, 7));
  acc.add_example(4, miss, &gold);

  CHECK(metrics::coverage(acc) == doctest::Approx(0.5));
  // The literal-formula variant divides by the utterance-length sum.
  CHECK(metrics::coverage_length_normalized(acc) ==
        doctest::Approx(1.0 / 7.0));

  metrics::DiagnosticsAccumulator fresh;
  CHECK_THROWS_AS((void)metrics::coverage(fresh), Error);
}

TEST_CASE("a full-width beam covers every executable hidden gold") {
  check::Instance inst = check::random_instance(23, 2, 300, 0.3);
  const auto programs = lang::enumerate_programs(inst.scorer->grammar());
  metrics::DiagnosticsAccumulator full, narrow;
  int used = 0;
  for (const auto& p : programs) {
    if (!exec::reward(p, inst.kb)) continue;
    if (++used > 5) break;
    const auto beam_full =
        search::beam_search(*inst.scorer, inst.x, inst.params,
                            static_cast<int>(inst.space_size));
    const auto beam_narrow =
        search::beam_search(*inst.scorer, inst.x, inst.params, 2);
    full.add_example(inst.x.length(),
                     search::partition(beam_full, inst.kb), &p);
    narrow.add_example(inst.x.length(),
                       search::partition(beam_narrow, inst.kb), &p);
  }
  CHECK(metrics::coverage(full) == doctest::Approx(1.0));
  CHECK(metrics::coverage(narrow) <= metrics::coverage(full));
}

TEST_CASE("accumulator merge is order-independent") {
  metrics::DiagnosticsAccumulator a, b, ab, ba;
  search::SeenPartition part;
  part.p_se.push_back(seq_of_length(6, -0.5, 0));
  a.add_example(4, part, nullptr);
  a.add_example(2, part, nullptr);
  b.add_example(7, part, nullptr);

  ab = a;
  ab.merge(b);
  ba = b;
  ba.merge(a);
  CHECK(ab.sum_program_len == ba.sum_program_len);
  CHECK(ab.sum_len_x_weighted == ba.sum_len_x_weighted);
  CHECK(ab.examples == ba.examples);
  CHECK(metrics::avg_ratio(ab) == metrics::avg_ratio(ba));
}

TEST_CASE("denotation accuracy is 1 when the decode matches by denotation") {
  check::Instance inst = check::random_instance(29, 2, 300, 0.3);
  // Gold defined as whatever the model decodes: accuracy must be 1.
  const auto beam = search::beam_search(*inst.scorer, inst.x, inst.params, 1);
  std::vector<metrics::EvalExample> eval = {{inst.x, beam[0].program}};
  CHECK(metrics::denotation_accuracy(*inst.scorer, eval, inst.kb,
                                     inst.params) == 1.0);
}

TEST_CASE("accuracy is invariant to consistent entity relabeling") {
  check::Instance inst = check::random_instance(37, 2, 300, 0.3);
  const auto programs = lang::enumerate_programs(inst.scorer->grammar());
  std::vector<metrics::EvalExample> eval;
  for (const auto& p : programs) {
    if (exec::reward(p, inst.kb)) {
      eval.push_back({inst.x, p});
      if (eval.size() == 4) break;
    }
  }
  const double before =
      metrics::denotation_accuracy(*inst.scorer, eval, inst.kb, inst.params);

  exec::KnowledgeBase relabeled = inst.kb;
  for (auto& e : relabeled.entities) e.id = "z_" + e.id;
  const double after = metrics::denotation_accuracy(*inst.scorer, eval,
                                                    relabeled, inst.params);
  CHECK(before == after);
}
