#pragma once

#include <cstddef>
#include <optional>

#include "xpr/executor.hpp"
#include "xpr/model.hpp"
#include "xpr/search.hpp"

// Evaluation accuracy and the two online training diagnostics: the
// average program-length to utterance-length ratio over seen executable
// programs, and the coverage of hidden gold programs by the seen
// executable set. Accumulators are plain mergeable values, one per
// worker, merged in a fixed order.

namespace xpr::metrics {

struct DiagnosticsAccumulator {
  double sum_program_len = 0.0;      // sum over examples of sum_{y in P_SE} |y|
  double sum_len_x_weighted = 0.0;   // sum of |x| * |P_SE(x)|
  double sum_len_x = 0.0;            // sum of |x| (literal-formula variant)
  std::size_t coverage_hits = 0;     // hidden gold found in P_SE
  std::size_t examples = 0;          // processed unlabeled examples

  void add_example(int utterance_len, const search::SeenPartition& part,
                   const lang::Program* hidden_gold);
  void merge(const DiagnosticsAccumulator& other);
};

// Throws Error{Undefined} while no example has had a non-empty P_SE.
double avg_ratio(const DiagnosticsAccumulator& acc);

// Fraction of processed examples whose hidden gold appeared in P_SE.
// Throws Error{Undefined} when no example has been processed.
double coverage(const DiagnosticsAccumulator& acc);

// The paper prints an utterance-length-sum denominator for coverage;
// reported alongside for transparency (same hit count, different
// normalizer).
double coverage_length_normalized(const DiagnosticsAccumulator& acc);

// Fraction of examples whose greedy decode matches the gold denotation.
struct EvalExample {
  model::Utterance x;
  lang::Program gold;
};
double denotation_accuracy(const model::Scorer& scorer,
                           const std::vector<EvalExample>& eval_set,
                           const exec::KnowledgeBase& kb,
                           const model::Params& params);

}  // namespace xpr::metrics
