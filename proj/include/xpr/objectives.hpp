#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xpr/search.hpp"

// The unsupervised objectives over a beam's seen-set partition:
// self-training, top-k marginal likelihood, repulsion, gentle, sparse,
// and an expected-reward baseline. Each objective yields a loss value
// plus per-sequence weights w such that d(loss)/d(theta) equals
// grad_weighted over (sequence, w); the E-step "soft label" q is
// reported alongside for diagnostics and oracle checks. Every log(.)
// of a residual mass is clamped at kMassEpsilon, so losses stay finite
// for any partition.

namespace xpr::obj {

enum class Objective { SelfTraining, TopK, Repulsion, Gentle, Sparse,
                       Reinforce };

const char* objective_token(Objective o);  // st topk repulsion gentle ...
std::optional<Objective> parse_objective(std::string_view token);
std::span<const Objective> all_objectives();

inline constexpr double kMassEpsilon = 1e-7;

// Euclidean projection of z onto the probability simplex, by the
// sort-and-threshold rule. Entries >= 0 and sum to 1; shift-invariant;
// order-preserving.
std::vector<double> sparsemax(std::span<const double> z);

// A finitely-supported distribution over programs; the weight assigned
// in aggregate to unseen programs lives in implicit_residual. Explicit
// weights are >= 0 and sum (with the residual) to 1.
struct PosteriorQ {
  std::vector<std::pair<lang::Program, double>> support;
  double implicit_residual = 0.0;

  double explicit_mass() const;
  double total_mass() const { return explicit_mass() + implicit_residual; }
  // -sum w log w over the explicit support (0 log 0 := 0).
  double entropy() const;
};

// E-step solutions. The self-training / top-k / sparse families are
// undefined on an empty seen-executable set and return nullopt.
std::optional<PosteriorQ> q_self_training(const search::SeenPartition& part);
std::optional<PosteriorQ> q_top_k(const search::SeenPartition& part);
std::optional<PosteriorQ> q_sparse(const search::SeenPartition& part);
PosteriorQ q_repulsion(const search::SeenPartition& part);
PosteriorQ q_gentle(const search::SeenPartition& part);

struct GradWeight {
  std::vector<lang::ActionId> actions;
  double weight = 0.0;
};

struct UnsupLossResult {
  bool skipped = false;
  double loss = 0.0;
  PosteriorQ q;
  // d(loss)/d(theta) = sum_i weight_i * grad log p(actions_i | x)
  std::vector<GradWeight> grad_weights;
  double mass_se = 0.0, mass_sn = 0.0;
  std::size_t n_se = 0, n_sn = 0;
};

UnsupLossResult unsup_loss(Objective objective,
                           const search::SeenPartition& part);

// The loss with its theta-independent parts (program sets, E-step q,
// gentle's leading coefficient, the self-training argmax) frozen at the
// partition's parameters. Re-evaluating at nearby parameters gives the
// function whose gradient the analytic weights express; the
// finite-difference oracle differentiates exactly this.
struct FrozenLoss {
  Objective kind = Objective::TopK;
  bool skipped = false;
  bool fallback_repulsion = false;  // gentle with empty seen-executable set
  std::vector<std::vector<lang::ActionId>> se, sn;
  std::vector<double> q_const;  // sparse
  std::size_t ystar = 0;        // self-training: index into se
  double c_const = 0.0;         // gentle: frozen seen mass

  double value(const model::Scorer& scorer, const model::Utterance& x,
               const model::Params& params) const;
};

FrozenLoss freeze(Objective objective, const search::SeenPartition& part);

// Checks that the closed-form E-step (p renormalized over executable
// programs) minimizes KL(q || p) against random feasible perturbations.
struct KktReport {
  std::size_t executable_count = 0;
  double q_star_objective = 0.0;
  double best_perturbed = 0.0;
  std::size_t violations = 0;

  bool pass() const { return executable_count > 0 && violations == 0; }
};

KktReport kkt_estep_check(const model::Scorer& scorer,
                          const model::Utterance& x,
                          const model::Params& params,
                          const exec::KnowledgeBase& kb,
                          std::size_t n_perturbations, std::uint64_t seed,
                          std::size_t cap = 1000000);

}  // namespace xpr::obj
