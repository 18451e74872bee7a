#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xpr/executor.hpp"
#include "xpr/model.hpp"

// Oracle suites behind `xpr selfcheck` and the acceptance tests: each
// one pits an implementation path against an independent route
// (central finite differences, bisection projection onto the simplex,
// exact enumeration) on randomized desk-scale instances.

namespace xpr::check {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Independent Euclidean projection onto the probability simplex via
// bisection on the water-level; no sorting, no threshold rule.
std::vector<double> project_simplex_bisection(std::span<const double> z);

// Central finite differences of f at params, step h.
std::vector<double> finite_difference(
    const std::function<double(const model::Params&)>& f,
    const model::Params& params, double h = 1e-5);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
double max_relative_error(std::span<const double> a, std::span<const double> b);

// A random miniature domain: KB, grammar-bound scorer, parameters, and
// one utterance. Enumeration stays under max_space programs.
struct Instance {
  exec::KnowledgeBase kb;
  std::unique_ptr<model::Scorer> scorer;
  model::Params params;
  model::Utterance x;
  std::size_t space_size = 0;
};
Instance random_instance(std::uint64_t seed, int max_conditions,
                         std::size_t max_space, double theta_scale);

SuiteResult check_sparsemax(int n_vectors, std::uint64_t seed);
SuiteResult check_gradients(int n_configs, std::uint64_t seed);
SuiteResult check_em_mml(int n_draws, std::uint64_t seed);
SuiteResult check_kkt(int n_instances, int n_perturbations,
                      std::uint64_t seed);
SuiteResult check_rl_mml(int n_instances, std::uint64_t seed);
SuiteResult check_partition_invariants(int n_runs, std::uint64_t seed);

// The suites `xpr selfcheck` runs, at CLI-friendly sizes.
std::vector<SuiteResult> run_selfcheck(std::uint64_t seed);

}  // namespace xpr::check
