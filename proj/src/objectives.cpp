#include "xpr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xpr/error.hpp"

namespace xpr::obj {

namespace {

const Objective kAll[] = {Objective::SelfTraining, Objective::TopK,
                          Objective::Repulsion,    Objective::Gentle,
                          Objective::Sparse,       Objective::Reinforce};

double logsumexp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

std::vector<double> logprobs_of(const std::vector<search::ScoredSequence>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(s.logprob);
  return out;
}

// Index of the most probable sequence, ties broken lexicographically on
// action ids.
std::size_t argmax_index(const std::vector<search::ScoredSequence>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].logprob > v[best].logprob ||
        (v[i].logprob == v[best].logprob &&
         std::lexicographical_compare(v[i].actions.begin(),
                                      v[i].actions.end(),
                                      v[best].actions.begin(),
                                      v[best].actions.end()))) {
      best = i;
    }
  }
  return best;
}

}  // namespace

const char* objective_token(Objective o) {
  switch (o) {
    case Objective::SelfTraining:
      return "st";
    case Objective::TopK:
      return "topk";
    case Objective::Repulsion:
      return "repulsion";
    case Objective::Gentle:
      return "gentle";
    case Objective::Sparse:
      return "sparse";
    case Objective::Reinforce:
      return "reinforce";
  }
  return "?";
}

std::optional<Objective> parse_objective(std::string_view token) {
  for (Objective o : kAll) {
    if (token == objective_token(o)) return o;
  }
  return std::nullopt;
}

std::span<const Objective> all_objectives() { return kAll; }

std::vector<double> sparsemax(std::span<const double> z) {
  if (z.empty()) {
    throw Error(ErrorCode::ConfigError, "sparsemax of an empty vector");
  }
  const std::size_t n = z.size();
  // Shift by the max so equal inputs shifted by a representable constant
  // canonicalize to identical vectors.
  double zmax = z[0];
  for (double x : z) zmax = std::max(zmax, x);
  std::vector<double> shifted(n);
  for (std::size_t i = 0; i < n; ++i) shifted[i] = z[i] - zmax;

  std::vector<double> sorted = shifted;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  std::size_t support = 0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += sorted[k];
    const double cand = (cum - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] > cand) {
      tau = cand;
      support = k + 1;
    }
  }
  (void)support;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::max(shifted[i] - tau, 0.0);
  }
  return out;
}

double PosteriorQ::explicit_mass() const {
  double acc = 0.0;
  for (const auto& [p, w] : support) acc += w;
  return acc;
}

double PosteriorQ::entropy() const {
  double acc = 0.0;
  for (const auto& [p, w] : support) {
    if (w > 0.0) acc -= w * std::log(w);
  }
  return acc;
}

std::optional<PosteriorQ> q_self_training(const search::SeenPartition& part) {
  if (part.p_se.empty()) return std::nullopt;
  PosteriorQ q;
  q.support.emplace_back(part.p_se[argmax_index(part.p_se)].program, 1.0);
  return q;
}

std::optional<PosteriorQ> q_top_k(const search::SeenPartition& part) {
  if (part.p_se.empty()) return std::nullopt;
  const std::vector<double> lp = logprobs_of(part.p_se);
  const double lse = logsumexp(lp);
  PosteriorQ q;
  for (std::size_t i = 0; i < part.p_se.size(); ++i) {
    q.support.emplace_back(part.p_se[i].program, std::exp(lp[i] - lse));
  }
  return q;
}

std::optional<PosteriorQ> q_sparse(const search::SeenPartition& part) {
  if (part.p_se.empty()) return std::nullopt;
  const std::vector<double> w = sparsemax(logprobs_of(part.p_se));
  PosteriorQ q;
  for (std::size_t i = 0; i < part.p_se.size(); ++i) {
    q.support.emplace_back(part.p_se[i].program, w[i]);
  }
  return q;
}

PosteriorQ q_repulsion(const search::SeenPartition& part) {
  const double keep = std::max(1.0 - part.mass_sn, kMassEpsilon);
  PosteriorQ q;
  double explicit_mass = 0.0;
  for (const auto& s : part.p_se) {
    const double w = std::exp(s.logprob) / keep;
    q.support.emplace_back(s.program, w);
    explicit_mass += w;
  }
  q.implicit_residual = std::max(0.0, 1.0 - explicit_mass);
  return q;
}

PosteriorQ q_gentle(const search::SeenPartition& part) {
  if (part.p_se.empty()) return q_repulsion(part);
  const double c = part.mass_se + part.mass_sn;
  PosteriorQ q;
  for (const auto& s : part.p_se) {
    q.support.emplace_back(s.program,
                           c * std::exp(s.logprob) / part.mass_se);
  }
  q.implicit_residual = std::max(0.0, 1.0 - c);
  return q;
}

FrozenLoss freeze(Objective objective, const search::SeenPartition& part) {
  FrozenLoss f;
  f.kind = objective;
  const bool needs_se = objective == Objective::SelfTraining ||
                        objective == Objective::TopK ||
                        objective == Objective::Sparse;
  if (needs_se && part.p_se.empty()) {
    f.skipped = true;
    return f;
  }
  if (objective == Objective::Gentle && part.p_se.empty()) {
    f.fallback_repulsion = true;
  }
  for (const auto& s : part.p_se) f.se.push_back(s.actions);
  for (const auto& s : part.p_sn) f.sn.push_back(s.actions);
  switch (objective) {
    case Objective::SelfTraining:
      f.ystar = argmax_index(part.p_se);
      break;
    case Objective::Sparse:
      f.q_const = sparsemax(logprobs_of(part.p_se));
      break;
    case Objective::Gentle:
      f.c_const = part.mass_se + part.mass_sn;
      break;
    default:
      break;
  }
  return f;
}

namespace {

// Shared loss formulas over current log-probabilities; produces the loss
// and, when wanted, the per-sequence gradient weights.
double evaluate_frozen(const FrozenLoss& f, std::span<const double> lp_se,
                       std::span<const double> lp_sn,
                       std::vector<double>* w_se, std::vector<double>* w_sn) {
  if (w_se) w_se->assign(lp_se.size(), 0.0);
  if (w_sn) w_sn->assign(lp_sn.size(), 0.0);

  const double log_se = logsumexp(lp_se);
  const double se = std::exp(log_se);
  double sn = 0.0;
  for (double lp : lp_sn) sn += std::exp(lp);

  Objective kind = f.kind;
  if (kind == Objective::Gentle && f.fallback_repulsion) {
    kind = Objective::Repulsion;
  }

  double loss = 0.0;
  switch (kind) {
    case Objective::SelfTraining: {
      loss = -lp_se[f.ystar];
      if (w_se) (*w_se)[f.ystar] = -1.0;
      break;
    }
    case Objective::TopK: {
      loss = -log_se;
      if (w_se) {
        for (std::size_t i = 0; i < lp_se.size(); ++i) {
          (*w_se)[i] = -std::exp(lp_se[i] - log_se);
        }
      }
      break;
    }
    case Objective::Repulsion: {
      const double keep = std::max(1.0 - sn, kMassEpsilon);
      loss = -std::log(keep);
      if (w_sn) {
        for (std::size_t i = 0; i < lp_sn.size(); ++i) {
          (*w_sn)[i] = std::exp(lp_sn[i]) / keep;
        }
      }
      break;
    }
    case Objective::Gentle: {
      const double c = f.c_const;
      const double rest = std::max(1.0 - se - sn, kMassEpsilon);
      loss = -c * log_se;
      if (1.0 - c > 0.0) loss -= (1.0 - c) * std::log(rest);
      if (w_se) {
        for (std::size_t i = 0; i < lp_se.size(); ++i) {
          double w = -c * std::exp(lp_se[i] - log_se);
          if (1.0 - c > 0.0) w += (1.0 - c) * std::exp(lp_se[i]) / rest;
          (*w_se)[i] = w;
        }
      }
      if (w_sn && 1.0 - c > 0.0) {
        for (std::size_t i = 0; i < lp_sn.size(); ++i) {
          (*w_sn)[i] = (1.0 - c) * std::exp(lp_sn[i]) / rest;
        }
      }
      break;
    }
    case Objective::Sparse: {
      for (std::size_t i = 0; i < lp_se.size(); ++i) {
        loss -= f.q_const[i] * lp_se[i];
        if (w_se) (*w_se)[i] = -f.q_const[i];
      }
      break;
    }
    case Objective::Reinforce: {
      // Expected failure mass 1 - E_p[R], beam-approximated; same
      // gradient as maximizing the expected reward.
      loss = 1.0 - se;
      if (lp_se.empty()) loss = 1.0;
      if (w_se) {
        for (std::size_t i = 0; i < lp_se.size(); ++i) {
          (*w_se)[i] = -std::exp(lp_se[i]);
        }
      }
      break;
    }
  }
  return std::max(loss, 0.0);
}

}  // namespace

double FrozenLoss::value(const model::Scorer& scorer,
                         const model::Utterance& x,
                         const model::Params& params) const {
  if (skipped) return 0.0;
  std::vector<double> lp_se, lp_sn;
  lp_se.reserve(se.size());
  lp_sn.reserve(sn.size());
  for (const auto& acts : se) {
    lp_se.push_back(scorer.log_prob_actions(x, acts, params));
  }
  for (const auto& acts : sn) {
    lp_sn.push_back(scorer.log_prob_actions(x, acts, params));
  }
  return evaluate_frozen(*this, lp_se, lp_sn, nullptr, nullptr);
}

UnsupLossResult unsup_loss(Objective objective,
                           const search::SeenPartition& part) {
  UnsupLossResult out;
  out.mass_se = part.mass_se;
  out.mass_sn = part.mass_sn;
  out.n_se = part.p_se.size();
  out.n_sn = part.p_sn.size();

  const FrozenLoss f = freeze(objective, part);
  if (f.skipped) {
    out.skipped = true;
    return out;
  }

  const std::vector<double> lp_se = logprobs_of(part.p_se);
  const std::vector<double> lp_sn = logprobs_of(part.p_sn);
  std::vector<double> w_se, w_sn;
  out.loss = evaluate_frozen(f, lp_se, lp_sn, &w_se, &w_sn);
  for (std::size_t i = 0; i < part.p_se.size(); ++i) {
    if (w_se[i] != 0.0) out.grad_weights.push_back({part.p_se[i].actions, w_se[i]});
  }
  for (std::size_t i = 0; i < part.p_sn.size(); ++i) {
    if (w_sn[i] != 0.0) out.grad_weights.push_back({part.p_sn[i].actions, w_sn[i]});
  }

  switch (objective) {
    case Objective::SelfTraining:
      out.q = *q_self_training(part);
      break;
    case Objective::TopK:
      out.q = *q_top_k(part);
      break;
    case Objective::Repulsion:
      out.q = q_repulsion(part);
      break;
    case Objective::Gentle:
      out.q = q_gentle(part);
      break;
    case Objective::Sparse:
      out.q = *q_sparse(part);
      break;
    case Objective::Reinforce: {
      // q_RL: p(y)R(y) on the seen set, remainder aggregated.
      double mass = 0.0;
      for (const auto& s : part.p_se) {
        const double w = std::exp(s.logprob);
        out.q.support.emplace_back(s.program, w);
        mass += w;
      }
      out.q.implicit_residual = std::max(0.0, 1.0 - mass);
      break;
    }
  }
  return out;
}

KktReport kkt_estep_check(const model::Scorer& scorer,
                          const model::Utterance& x,
                          const model::Params& params,
                          const exec::KnowledgeBase& kb,
                          std::size_t n_perturbations, std::uint64_t seed,
                          std::size_t cap) {
  KktReport report;
  std::vector<double> lp;
  for (const lang::Program& p : lang::enumerate_programs(scorer.grammar(), cap)) {
    if (exec::reward(p, kb)) {
      lp.push_back(scorer.log_prob(x, p, params));
    }
  }
  report.executable_count = lp.size();
  if (lp.empty()) return report;

  const std::size_t n = lp.size();
  const double lse = logsumexp(lp);
  std::vector<double> q_star(n);
  for (std::size_t i = 0; i < n; ++i) q_star[i] = std::exp(lp[i] - lse);

  auto objective = [&](const std::vector<double>& q) {
    // KL(q || p) restricted to the executable support, up to the
    // constant sum over non-executable programs (q is 0 there).
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (q[i] > 0.0) acc += q[i] * (std::log(q[i]) - lp[i]);
    }
    return acc;
  };

  report.q_star_objective = objective(q_star);
  report.best_perturbed = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  const double mixes[] = {1.0, 0.5, 0.1, 0.01};
  std::vector<double> dir(n), q(n);
  for (std::size_t it = 0; it < n_perturbations; ++it) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] = gamma(rng);
      total += dir[i];
    }
    const double t = mixes[it % 4];
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = (1.0 - t) * q_star[i] + t * dir[i] / total;
    }
    const double val = objective(q);
    report.best_perturbed = std::min(report.best_perturbed, val);
    if (val < report.q_star_objective - 1e-12) ++report.violations;
  }
  return report;
}

}  // namespace xpr::obj
