#pragma once

#include <vector>

#include "xpr/executor.hpp"
#include "xpr/minilang.hpp"
#include "xpr/model.hpp"

// Beam search over grammar actions and the seen-set partition. Scores
// are raw (length-unnormalized) sums of per-step log-probabilities; all
// ties break lexicographically on action ids, so results are
// deterministic. Completed hypotheses compete for beam slots, so K = 1
// is exactly the greedy decode and K >= |program space| enumerates it.

namespace xpr::search {

struct ScoredSequence {
  std::vector<lang::ActionId> actions;
  lang::Program program;
  double logprob = 0.0;
  std::vector<double> step_logprobs;
};

// Up to K complete sequences, best first.
std::vector<ScoredSequence> beam_search(const model::Scorer& scorer,
                                        const model::Utterance& x,
                                        const model::Params& params, int k);

// Beam output split by the binary executability reward. mass_* are sums
// of exp(logprob); the residual 1 - mass_se - mass_sn is the unseen
// program mass.
struct SeenPartition {
  std::vector<ScoredSequence> p_se;  // seen executable
  std::vector<ScoredSequence> p_sn;  // seen non-executable
  double mass_se = 0.0;
  double mass_sn = 0.0;

  double residual() const { return 1.0 - mass_se - mass_sn; }
  std::size_t seen_count() const { return p_se.size() + p_sn.size(); }
};

SeenPartition partition(std::vector<ScoredSequence> beam,
                        const exec::KnowledgeBase& kb);

// Exact sum of R(y) * p(y|x) over the whole program space; enumeration
// oracle for tests. Throws Error{CapacityExceeded} past cap.
double exact_executable_mass(const model::Scorer& scorer,
                             const model::Utterance& x,
                             const model::Params& params,
                             const exec::KnowledgeBase& kb,
                             std::size_t cap = 1000000);

}  // namespace xpr::search
