// Acceptance suite: one line per criterion, non-zero exit on any
// failure. Criteria 1-6 are property/oracle checks on randomized
// desk-scale instances; 7-8 run the end-to-end directional experiment
// on the synthetic fixture (1000 examples, 30% labeled, beam 16, three
// seeds).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xpr/datagen.hpp"
#include "xpr/kernels.hpp"
#include "xpr/metrics.hpp"
#include "xpr/objectives.hpp"
#include "xpr/selfcheck.hpp"
#include "xpr/training.hpp"

namespace {

using namespace xpr;
namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

bool report(int criterion, const char* what, bool pass,
            const std::string& detail, double elapsed) {
  std::printf("criterion %d [%s] %s: %s (%.1fs)\n", criterion,
              pass ? "PASS" : "FAIL", what, detail.c_str(), elapsed);
  std::fflush(stdout);
  return pass;
}

bool suite_criterion(int criterion, const char* what,
                     const check::SuiteResult& r, double elapsed,
                     double budget) {
  const bool in_time = elapsed < budget;
  std::string detail = r.detail;
  if (!in_time) detail += " [over time budget]";
  return report(criterion, what, r.pass && in_time, detail, elapsed);
}

struct ExperimentOutcome {
  // objective token ("baseline" for the supervised-only runs) ->
  // per-seed final metrics.
  std::map<std::string, std::vector<train::StepMetrics>> final_rows;
  bool csv_ok = true;
  std::string csv_detail;
};

ExperimentOutcome run_experiment() {
  ExperimentOutcome out;
  const std::uint64_t kCorpusSeed = 101;
  const datagen::Generated gen = datagen::generate(
      datagen::default_restaurant_domain(kCorpusSeed, 1000, 40));

  const std::uint64_t seeds[] = {1, 2, 3};
  const obj::Objective objectives[] = {
      obj::Objective::SelfTraining, obj::Objective::TopK,
      obj::Objective::Repulsion, obj::Objective::Gentle,
      obj::Objective::Sparse};

  fs::create_directories("acceptance_runs");
  for (std::uint64_t seed : seeds) {
    const datagen::Corpus corpus = datagen::split(gen.examples, 0.3, seed);
    train::TrainConfig cfg;
    cfg.lambda = 0.3;
    cfg.beam = 16;
    cfg.warmup_steps = 600;
    cfg.max_steps = 1100;
    cfg.batch_labeled = 4;
    cfg.batch_unlabeled = 4;
    cfg.learning_rate = 0.1;
    cfg.embedding_dim = 24;
    cfg.hidden_dim = 32;
    cfg.dev_count = 100;
    cfg.eval_every = 50;
    cfg.seed = seed;

    // Supervised-only lower bound.
    {
      train::TrainConfig base = cfg;
      base.lambda = 0.0;
      const auto result = train::run(corpus, gen.kb, base);
      out.final_rows["baseline"].push_back(result.rows.back());
    }
    for (obj::Objective o : objectives) {
      train::TrainConfig run_cfg = cfg;
      run_cfg.objective = o;
      const std::string dir = "acceptance_runs/" +
                              std::string(obj::objective_token(o)) + "_s" +
                              std::to_string(seed);
      const auto result = train::run_to_dir(corpus, gen.kb, run_cfg, dir);
      out.final_rows[obj::objective_token(o)].push_back(result.rows.back());

      // 7c: the emitted CSV holds well-defined diagnostic series after
      // warmup.
      const auto rows = train::read_metrics_csv(dir + "/metrics.csv");
      if (rows.size() != static_cast<std::size_t>(run_cfg.max_steps)) {
        out.csv_ok = false;
        out.csv_detail = "row count mismatch in " + dir;
      }
      for (const auto& r : rows) {
        if (r.step > run_cfg.warmup_steps + 1 &&
            (!std::isfinite(r.avg_ratio) || !std::isfinite(r.coverage))) {
          out.csv_ok = false;
          out.csv_detail = "undefined diagnostics at step " +
                           std::to_string(r.step) + " in " + dir;
          break;
        }
      }
    }
  }
  return out;
}

double mean_final(const ExperimentOutcome& out, const std::string& key,
                  double train::StepMetrics::*field) {
  const auto& rows = out.final_rows.at(key);
  double acc = 0.0;
  for (const auto& r : rows) acc += r.*field;
  return acc / static_cast<double>(rows.size());
}

}  // namespace

int main() {
  std::printf("kernels backend: %s\n",
              kernels::backend_name(kernels::active_backend()));
  bool all = true;
  const std::uint64_t seed = 20240801;

  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check::check_sparsemax(10000, seed + 1);
    all &= suite_criterion(1, "sparsemax suite", r, seconds_since(t0), 10.0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check::check_gradients(100, seed + 2);
    all &= suite_criterion(2, "gradient suite", r, seconds_since(t0), 120.0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check::check_em_mml(50, seed + 3);
    all &= suite_criterion(3, "EM = MML at the gradient level", r,
                           seconds_since(t0), 600.0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check::check_kkt(20, 1000, seed + 4);
    all &= suite_criterion(4, "KKT E-step optimality", r, seconds_since(t0),
                           600.0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check::check_rl_mml(20, seed + 5);
    all &= suite_criterion(5, "RL/MML gradient forms", r, seconds_since(t0),
                           600.0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = check::check_partition_invariants(1000, seed + 6);
    all &= suite_criterion(6, "partition/beam invariants", r,
                           seconds_since(t0), 600.0);
  }

  // Criteria 7 and 8 share the experiment runs.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentOutcome out = run_experiment();
    const double elapsed = seconds_since(t0);

    const double base =
        mean_final(out, "baseline", &train::StepMetrics::dev_denotation_acc);
    const double st =
        mean_final(out, "st", &train::StepMetrics::dev_denotation_acc);
    const double topk =
        mean_final(out, "topk", &train::StepMetrics::dev_denotation_acc);
    const double repulsion =
        mean_final(out, "repulsion", &train::StepMetrics::dev_denotation_acc);
    const double gentle =
        mean_final(out, "gentle", &train::StepMetrics::dev_denotation_acc);
    const double sparse =
        mean_final(out, "sparse", &train::StepMetrics::dev_denotation_acc);
    const double best_xpr = std::max({repulsion, gentle, sparse});

    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "dev acc means: baseline=%.3f st=%.3f topk=%.3f "
                  "repulsion=%.3f gentle=%.3f sparse=%.3f",
                  base, st, topk, repulsion, gentle, sparse);
    const bool a = repulsion >= base && gentle >= base && sparse >= base;
    const bool b = best_xpr >= topk + 0.01;
    const bool in_time = elapsed < 900.0;
    std::string detail = std::string(buf) + (out.csv_ok ? "" : "; CSV: " +
                                                               out.csv_detail);
    if (!in_time) detail += " [over 15 min]";
    all &= report(7, "directional experiment", a && b && out.csv_ok && in_time,
                  detail, elapsed);

    const double cov_rep =
        mean_final(out, "repulsion", &train::StepMetrics::coverage);
    const double cov_st =
        mean_final(out, "st", &train::StepMetrics::coverage);
    std::snprintf(buf, sizeof(buf),
                  "final coverage means: repulsion=%.3f st=%.3f", cov_rep,
                  cov_st);
    all &= report(8, "coverage diagnostic", cov_rep >= cov_st - 0.01, buf,
                  seconds_since(t0) - elapsed);
  }

  std::printf("%s\n", all ? "ALL CRITERIA PASS" : "CRITERIA FAILED");
  return all ? 0 : 1;
}
