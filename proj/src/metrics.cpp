#include "xpr/metrics.hpp"

#include "xpr/error.hpp"

namespace xpr::metrics {

void DiagnosticsAccumulator::add_example(int utterance_len,
                                         const search::SeenPartition& part,
                                         const lang::Program* hidden_gold) {
  for (const auto& s : part.p_se) {
    sum_program_len += static_cast<double>(s.actions.size());
  }
  sum_len_x_weighted +=
      static_cast<double>(utterance_len) * static_cast<double>(part.p_se.size());
  sum_len_x += static_cast<double>(utterance_len);
  if (hidden_gold) {
    for (const auto& s : part.p_se) {
      if (s.program == *hidden_gold) {
        ++coverage_hits;
        break;
      }
    }
  }
  ++examples;
}

void DiagnosticsAccumulator::merge(const DiagnosticsAccumulator& other) {
  sum_program_len += other.sum_program_len;
  sum_len_x_weighted += other.sum_len_x_weighted;
  sum_len_x += other.sum_len_x;
  coverage_hits += other.coverage_hits;
  examples += other.examples;
}

double avg_ratio(const DiagnosticsAccumulator& acc) {
  if (acc.sum_len_x_weighted <= 0.0) {
    throw Error(ErrorCode::Undefined,
                "avg_ratio needs at least one non-empty seen-executable set");
  }
  return acc.sum_program_len / acc.sum_len_x_weighted;
}

double coverage(const DiagnosticsAccumulator& acc) {
  if (acc.examples == 0) {
    throw Error(ErrorCode::Undefined, "coverage needs processed examples");
  }
  return static_cast<double>(acc.coverage_hits) /
         static_cast<double>(acc.examples);
}

double coverage_length_normalized(const DiagnosticsAccumulator& acc) {
  if (acc.sum_len_x <= 0.0) {
    throw Error(ErrorCode::Undefined, "coverage needs processed examples");
  }
  return static_cast<double>(acc.coverage_hits) / acc.sum_len_x;
}

double denotation_accuracy(const model::Scorer& scorer,
                           const std::vector<EvalExample>& eval_set,
                           const exec::KnowledgeBase& kb,
                           const model::Params& params) {
  if (eval_set.empty()) {
    throw Error(ErrorCode::Undefined, "empty evaluation set");
  }
  std::size_t hits = 0;
  for (const EvalExample& e : eval_set) {
    const auto beam = search::beam_search(scorer, e.x, params, 1);
    if (!beam.empty() &&
        exec::denotation_match(beam[0].program, e.gold, kb)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(eval_set.size());
}

}  // namespace xpr::metrics
