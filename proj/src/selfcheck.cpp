#include "xpr/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "xpr/error.hpp"
#include "xpr/objectives.hpp"
#include "xpr/search.hpp"

namespace xpr::check {

namespace {

using lang::Value;

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

SuiteResult pass_result(std::string name, std::string detail) {
  return {std::move(name), true, std::move(detail)};
}

SuiteResult fail_result(std::string name, std::string detail) {
  return {std::move(name), false, std::move(detail)};
}

}  // namespace

std::vector<double> project_simplex_bisection(std::span<const double> z) {
  // sum_i max(z_i - tau, 0) is continuous and strictly decreasing in tau
  // where positive; bisect until it equals 1.
  double zmax = z[0];
  for (double x : z) zmax = std::max(zmax, x);
  double lo = zmax - 1.0;  // f(lo) >= 1
  double hi = zmax;        // f(hi) = 0
  auto mass = [&](double tau) {
    double acc = 0.0;
    for (double x : z) acc += std::max(x - tau, 0.0);
    return acc;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double tau = 0.5 * (lo + hi);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::max(z[i] - tau, 0.0);
  }
  return out;
}

std::vector<double> finite_difference(
    const std::function<double(const model::Params&)>& f,
    const model::Params& params, double h) {
  model::Params probe = params;
  std::vector<double> grad(params.values.size());
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    const double fp = f(probe);
    probe.values[i] = orig - h;
    const double fm = f(probe);
    probe.values[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> a,
                          std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

Instance random_instance(std::uint64_t seed, int max_conditions,
                         std::size_t max_space, double theta_scale) {
  std::mt19937_64 rng(seed);
  const char* cat_tokens[] = {"red", "blue", "green", "amber", "plum"};
  const char* num_names[] = {"size", "weight"};
  const char* cat_names[] = {"color", "shape"};

  for (int attempt = 0; attempt < 64; ++attempt) {
    exec::KnowledgeBase kb;
    exec::KnowledgeBase::TypeSchema ts;
    ts.name = "item";
    const int n_props = 2;
    std::vector<std::pair<std::string, bool>> props;
    props.emplace_back(num_names[rng() % 2], true);
    props.emplace_back(cat_names[rng() % 2], false);
    (void)n_props;
    for (auto& [name, numeric] : props) ts.properties.push_back({name, numeric});
    std::sort(ts.properties.begin(), ts.properties.end(),
              [](const auto& a, const auto& b) { return a.name < b.name; });
    kb.types.push_back(ts);

    const int rows = 3 + static_cast<int>(rng() % 3);
    const int num_span = 2 + static_cast<int>(rng() % 2);  // values 1..span
    const int cat_span = 2 + static_cast<int>(rng() % 2);
    for (int r = 0; r < rows; ++r) {
      exec::KnowledgeBase::Entity e;
      e.id = "i" + std::to_string(r + 1);
      e.type = "item";
      for (auto& [name, numeric] : props) {
        e.values[name] =
            numeric ? Value::number(1.0 + static_cast<double>(rng() % num_span))
                    : Value::symbol(cat_tokens[rng() % cat_span]);
      }
      kb.entities.push_back(std::move(e));
    }
    std::sort(kb.entities.begin(), kb.entities.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });

    lang::Grammar grammar = exec::grammar_from_kb(kb, max_conditions);
    std::vector<lang::Program> space;
    try {
      space = lang::enumerate_programs(grammar, max_space);
    } catch (const Error&) {
      continue;  // too large, redraw
    }
    std::size_t executable = 0;
    for (const auto& p : space) executable += exec::reward(p, kb);
    if (executable == 0 || executable == space.size()) continue;

    Instance inst;
    inst.space_size = space.size();
    model::ModelConfig mc;
    mc.vocab_size = 4 + static_cast<int>(rng() % 4);
    mc.action_count = grammar.action_count();
    mc.embedding_dim = 2;
    mc.hidden_dim = 3;
    inst.kb = std::move(kb);
    inst.scorer = std::make_unique<model::Scorer>(std::move(grammar), mc);
    inst.params = model::init_params(mc, rng());
    for (double& v : inst.params.values) v *= theta_scale / 0.08;
    const int len = 2 + static_cast<int>(rng() % 3);
    for (int t = 0; t < len; ++t) {
      inst.x.token_ids.push_back(static_cast<int>(rng() % mc.vocab_size));
    }
    return inst;
  }
  throw Error(ErrorCode::SpecError, "could not draw a usable random instance");
}

SuiteResult check_sparsemax(int n_vectors, std::uint64_t seed) {
  const char* name = "sparsemax-vs-projection";
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  double worst_oracle = 0.0;

  for (int it = 0; it < n_vectors; ++it) {
    const int dim = 2 + static_cast<int>(rng() % 15);
    std::vector<double> z(dim);
    for (double& v : z) v = unif(rng);

    const std::vector<double> p = obj::sparsemax(z);
    double sum = 0.0;
    for (double v : p) {
      if (v < 0.0) return fail_result(name, "negative output entry");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      return fail_result(name, "output sum off by " + fmt(sum - 1.0));
    }
    // Order preservation.
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        if (z[i] >= z[j] && p[i] < p[j] - 0.0) {
          return fail_result(name, "order violation");
        }
      }
    }
    // Against the bisection oracle.
    const std::vector<double> q = project_simplex_bisection(z);
    for (int i = 0; i < dim; ++i) {
      worst_oracle = std::max(worst_oracle, std::fabs(p[i] - q[i]));
    }
    if (worst_oracle > 1e-6) {
      return fail_result(name, "oracle mismatch " + fmt(worst_oracle));
    }
    // Exact shift invariance on a dyadic grid (additions are exact, so
    // outputs must match bit for bit).
    const double grid = 1 << 26;
    std::vector<double> zd(dim), zs(dim);
    for (int i = 0; i < dim; ++i) {
      zd[i] = std::round(z[i] * 4.0 * grid) / grid;
    }
    const double c = std::round(unif(rng) * 4.0 * grid) / grid;
    for (int i = 0; i < dim; ++i) zs[i] = zd[i] + c;
    const std::vector<double> pd = obj::sparsemax(zd);
    const std::vector<double> ps = obj::sparsemax(zs);
    for (int i = 0; i < dim; ++i) {
      if (pd[i] != ps[i]) return fail_result(name, "shift variance");
    }
    // Real-valued shifts within floating-point noise.
    const double creal = unif(rng);
    for (int i = 0; i < dim; ++i) zs[i] = z[i] + creal;
    const std::vector<double> pr = obj::sparsemax(zs);
    for (int i = 0; i < dim; ++i) {
      if (std::fabs(pr[i] - p[i]) > 1e-12) {
        return fail_result(name, "real shift variance " + fmt(pr[i] - p[i]));
      }
    }
  }
  return pass_result(name, std::to_string(n_vectors) +
                               " vectors, worst oracle gap " +
                               fmt(worst_oracle));
}

SuiteResult check_gradients(int n_configs, std::uint64_t seed) {
  const char* name = "gradcheck";
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  int checked = 0;

  for (int it = 0; it < n_configs; ++it) {
    Instance inst = random_instance(rng(), 1 + static_cast<int>(rng() % 2),
                                    500, 0.5);
    const model::Scorer& scorer = *inst.scorer;

    // Supervised loss: -log p of one executable program.
    const auto space = lang::enumerate_programs(scorer.grammar());
    std::vector<const lang::Program*> executable;
    for (const auto& p : space) {
      if (exec::reward(p, inst.kb)) executable.push_back(&p);
    }
    const lang::Program& gold = *executable[rng() % executable.size()];
    const auto gold_acts = lang::actions(gold, scorer.grammar());
    {
      model::WeightedSequence pair{gold_acts, -1.0};
      const auto analytic =
          scorer.grad_weighted(inst.x, std::span(&pair, 1), inst.params);
      const auto fd = finite_difference(
          [&](const model::Params& p) {
            return -scorer.log_prob_actions(inst.x, gold_acts, p);
          },
          inst.params);
      worst = std::max(worst, max_relative_error(analytic, fd));
      ++checked;
    }

    // Unsupervised losses over a beam partition.
    const auto beam = search::beam_search(scorer, inst.x, inst.params,
                                          4 + static_cast<int>(rng() % 5));
    const auto part = search::partition(beam, inst.kb);
    for (obj::Objective o : obj::all_objectives()) {
      const obj::FrozenLoss frozen = obj::freeze(o, part);
      if (frozen.skipped) continue;
      const obj::UnsupLossResult lr = obj::unsup_loss(o, part);
      std::vector<model::WeightedSequence> pairs;
      for (const auto& gw : lr.grad_weights) {
        pairs.push_back({gw.actions, gw.weight});
      }
      const auto analytic = scorer.grad_weighted(inst.x, pairs, inst.params);
      const auto fd = finite_difference(
          [&](const model::Params& p) {
            return frozen.value(scorer, inst.x, p);
          },
          inst.params);
      const double err = max_relative_error(analytic, fd);
      worst = std::max(worst, err);
      ++checked;
      if (err > 1e-4) {
        return fail_result(name, std::string("objective ") +
                                     obj::objective_token(o) +
                                     " rel err " + fmt(err));
      }
    }
    if (worst > 1e-4) {
      return fail_result(name, "supervised rel err " + fmt(worst));
    }
  }
  return pass_result(name, std::to_string(checked) +
                               " gradients, worst rel err " + fmt(worst));
}

SuiteResult check_em_mml(int n_draws, std::uint64_t seed) {
  const char* name = "em-equals-mml";
  std::mt19937_64 rng(seed);
  double worst_loss = 0.0, worst_grad = 0.0;

  for (int it = 0; it < n_draws; ++it) {
    Instance inst = random_instance(rng(), 2, 500, 0.3);
    const model::Scorer& scorer = *inst.scorer;

    // Full-width beam: the seen set is the whole space.
    const auto beam = search::beam_search(
        scorer, inst.x, inst.params, static_cast<int>(inst.space_size));
    if (beam.size() != inst.space_size) {
      return fail_result(name, "full-width beam misses programs");
    }
    const auto part = search::partition(beam, inst.kb);
    const obj::UnsupLossResult lr = obj::unsup_loss(obj::Objective::TopK, part);

    const double mass = search::exact_executable_mass(scorer, inst.x,
                                                      inst.params, inst.kb);
    worst_loss = std::max(worst_loss, std::fabs(lr.loss + std::log(mass)));
    if (worst_loss > 1e-9) {
      return fail_result(name, "loss vs exact mass gap " + fmt(worst_loss));
    }

    // Gradient route A: the implementation's weights from the beam path.
    std::vector<model::WeightedSequence> pairs;
    for (const auto& gw : lr.grad_weights) {
      pairs.push_back({gw.actions, gw.weight});
    }
    const auto grad_beam = scorer.grad_weighted(inst.x, pairs, inst.params);

    // Gradient route B: Eq-style E-step from enumeration, q = p
    // renormalized over executable programs, then sum q * grad(-log p).
    std::vector<model::WeightedSequence> exact_pairs;
    std::vector<double> lps;
    std::vector<std::vector<lang::ActionId>> acts;
    for (const auto& p : lang::enumerate_programs(scorer.grammar())) {
      if (!exec::reward(p, inst.kb)) continue;
      acts.push_back(lang::actions(p, scorer.grammar()));
      lps.push_back(scorer.log_prob_actions(inst.x, acts.back(), inst.params));
    }
    double m = lps[0];
    for (double v : lps) m = std::max(m, v);
    double norm = 0.0;
    for (double v : lps) norm += std::exp(v - m);
    const double lse = m + std::log(norm);
    for (std::size_t i = 0; i < lps.size(); ++i) {
      exact_pairs.push_back({std::move(acts[i]), -std::exp(lps[i] - lse)});
    }
    const auto grad_exact =
        scorer.grad_weighted(inst.x, exact_pairs, inst.params);

    for (std::size_t i = 0; i < grad_beam.size(); ++i) {
      worst_grad = std::max(worst_grad,
                            std::fabs(grad_beam[i] - grad_exact[i]));
    }
    if (worst_grad > 1e-6) {
      return fail_result(name, "gradient route gap " + fmt(worst_grad));
    }
  }
  return pass_result(name, std::to_string(n_draws) + " draws, loss gap " +
                               fmt(worst_loss) + ", grad gap " +
                               fmt(worst_grad));
}

SuiteResult check_kkt(int n_instances, int n_perturbations,
                      std::uint64_t seed) {
  const char* name = "kkt-estep";
  std::mt19937_64 rng(seed);
  for (int it = 0; it < n_instances; ++it) {
    Instance inst = random_instance(rng(), 2, 500, 0.4);
    const obj::KktReport report = obj::kkt_estep_check(
        *inst.scorer, inst.x, inst.params, inst.kb, n_perturbations, rng());
    if (!report.pass()) {
      return fail_result(name, "instance " + std::to_string(it) + ": " +
                                   std::to_string(report.violations) +
                                   " perturbations beat q*");
    }
  }
  return pass_result(name, std::to_string(n_instances) + " instances x " +
                               std::to_string(n_perturbations) +
                               " perturbations, zero violations");
}

SuiteResult check_rl_mml(int n_instances, std::uint64_t seed) {
  const char* name = "rl-vs-mml";
  std::mt19937_64 rng(seed);
  double worst = 0.0;

  for (int it = 0; it < n_instances; ++it) {
    Instance inst = random_instance(rng(), 1, 60, 0.4);
    const model::Scorer& scorer = *inst.scorer;

    std::vector<std::vector<lang::ActionId>> acts;
    std::vector<double> lps;
    for (const auto& p : lang::enumerate_programs(scorer.grammar())) {
      if (!exec::reward(p, inst.kb)) continue;
      acts.push_back(lang::actions(p, scorer.grammar()));
      lps.push_back(scorer.log_prob_actions(inst.x, acts.back(), inst.params));
    }

    // Score-function form: grad J_RL = sum_y p(y) R(y) grad log p(y).
    std::vector<model::WeightedSequence> pairs;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      pairs.push_back({acts[i], std::exp(lps[i])});
    }
    const auto analytic = scorer.grad_weighted(inst.x, pairs, inst.params);

    // Independent route: finite differences of the exact expected
    // reward sum_y R(y) p(y).
    const auto fd = finite_difference(
        [&](const model::Params& p) {
          double acc = 0.0;
          for (const auto& a : acts) {
            acc += std::exp(scorer.log_prob_actions(inst.x, a, p));
          }
          return acc;
        },
        inst.params);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      worst = std::max(worst, std::fabs(analytic[i] - fd[i]));
    }
    if (worst > 1e-6) {
      return fail_result(name, "grad J_RL gap " + fmt(worst));
    }

    // q_MML is q_RL renormalized.
    double total = 0.0;
    for (double lp : lps) total += std::exp(lp);
    const auto beam = search::beam_search(scorer, inst.x, inst.params,
                                          static_cast<int>(inst.space_size));
    const auto part = search::partition(beam, inst.kb);
    const auto q_mml = obj::q_top_k(part);
    if (!q_mml || q_mml->support.size() != lps.size()) {
      return fail_result(name, "full-width q_MML support mismatch");
    }
    for (const auto& [prog, w] : q_mml->support) {
      double q_rl = 0.0;
      for (std::size_t i = 0; i < acts.size(); ++i) {
        if (lang::decode(acts[i], scorer.grammar()) == prog) {
          q_rl = std::exp(lps[i]);
        }
      }
      if (std::fabs(w - q_rl / total) > 1e-6) {
        return fail_result(name, "q_MML != q_RL renormalized");
      }
    }
  }
  return pass_result(name, std::to_string(n_instances) +
                               " instances, worst grad gap " + fmt(worst));
}

SuiteResult check_partition_invariants(int n_runs, std::uint64_t seed) {
  const char* name = "partition-invariants";
  std::mt19937_64 rng(seed);
  const int ks[] = {1, 4, 16};

  for (int it = 0; it < n_runs; ++it) {
    Instance inst = random_instance(rng(), 2, 2000, 0.08);
    std::vector<lang::ActionId> top1;
    for (int k : ks) {
      const auto beam =
          search::beam_search(*inst.scorer, inst.x, inst.params, k);
      if (beam.empty() || static_cast<int>(beam.size()) > k) {
        return fail_result(name, "beam size out of contract");
      }
      if (k == 1) {
        top1 = beam[0].actions;
      } else if (beam[0].actions != top1) {
        return fail_result(name, "top-1 not stable across beam widths");
      }
      for (const auto& s : beam) {
        double acc = 0.0;
        for (double lp : s.step_logprobs) acc += lp;
        if (std::fabs(acc - s.logprob) > 1e-9) {
          return fail_result(name, "logprob != sum of step logprobs");
        }
      }
      const auto part = search::partition(beam, inst.kb);
      if (part.p_se.size() + part.p_sn.size() != beam.size()) {
        return fail_result(name, "partition not exhaustive");
      }
      for (const auto& s : part.p_se) {
        if (!exec::reward(s.program, inst.kb)) {
          return fail_result(name, "non-executable program in P_SE");
        }
      }
      for (const auto& s : part.p_sn) {
        if (exec::reward(s.program, inst.kb)) {
          return fail_result(name, "executable program in P_SN");
        }
      }
      if (part.mass_se < 0.0 || part.mass_sn < 0.0 ||
          part.mass_se + part.mass_sn > 1.0 + 1e-9) {
        return fail_result(name, "masses out of range");
      }
    }
  }
  return pass_result(name, std::to_string(n_runs) +
                               " random beams, top-1 stable on K in {1,4,16}");
}

std::vector<SuiteResult> run_selfcheck(std::uint64_t seed) {
  std::vector<SuiteResult> out;
  out.push_back(check_gradients(15, seed + 1));
  out.push_back(check_sparsemax(2000, seed + 2));
  out.push_back(check_em_mml(10, seed + 3));
  out.push_back(check_kkt(5, 1000, seed + 4));
  out.push_back(check_rl_mml(5, seed + 5));
  return out;
}

}  // namespace xpr::check
