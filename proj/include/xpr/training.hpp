#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "xpr/datagen.hpp"
#include "xpr/executor.hpp"
#include "xpr/metrics.hpp"
#include "xpr/model.hpp"
#include "xpr/objectives.hpp"

// The semi-supervised optimization loop: at every step one labeled and
// one unlabeled batch are sampled and the parameters take a plain SGD
// step on mean supervised NLL plus lambda times the mean unsupervised
// loss. lambda is forced to 0 for the first warmup_steps updates
// (supervised pre-training), and the unsupervised term is skipped
// entirely while it is 0, so a lambda=0 run is the supervised-only
// baseline regardless of the selected objective. A (corpus, config)
// pair determines every emitted byte.

namespace xpr::train {

struct TrainConfig {
  obj::Objective objective = obj::Objective::TopK;
  double lambda = 0.3;
  int warmup_steps = 1000;
  int max_steps = 2000;
  int batch_labeled = 8;
  int batch_unlabeled = 8;
  double learning_rate = 0.1;
  std::uint64_t seed = 1;
  int beam = 16;
  int threads = 1;
  // Labeled examples held out for the dev metric (clamped to keep at
  // least one training example); 0 disables dev evaluation.
  int dev_count = 100;
  int eval_every = 50;
  int embedding_dim = 32;
  int hidden_dim = 64;
};

struct StepMetrics {
  int step = 0;
  std::string objective;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;  // nan while the unsupervised term is inert
  double avg_ratio = 0.0;   // nan until a non-empty P_SE was seen
  double coverage = 0.0;    // nan until an unsupervised step ran
  double dev_denotation_acc = 0.0;  // nan before the first evaluation
  double skipped_frac = 0.0;        // nan when there is no unlabeled batch
};

// Gradient components of one batch; exposed for the linearity and
// warmup contracts in the tests.
struct BatchGradients {
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  std::vector<double> g_sup;
  std::vector<double> g_unsup;  // empty when the unsupervised term is inert
  int skipped = 0;
  int contributing = 0;
};

class Trainer {
 public:
  Trainer(const datagen::Corpus& corpus, const exec::KnowledgeBase& kb,
          const TrainConfig& cfg);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One SGD update at the given 1-based global step.
  StepMetrics train_step(int step);

  // Batch evaluation without the parameter update.
  BatchGradients compute_batch(const std::vector<int>& labeled_idx,
                               const std::vector<int>& unlabeled_idx,
                               bool with_unsup);

  const model::Scorer& scorer() const;
  const model::Params& params() const;
  model::Params& mutable_params();
  const metrics::DiagnosticsAccumulator& diagnostics() const;
  double dev_accuracy() const;
  int train_labeled_count() const;
  int unlabeled_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct RunResult {
  model::Params params;
  std::vector<StepMetrics> rows;
  metrics::DiagnosticsAccumulator diagnostics;
};

// warmup_steps supervised-only updates.
model::Params pretrain(const datagen::Corpus& corpus,
                       const exec::KnowledgeBase& kb, const TrainConfig& cfg);

// Full run: supervised warmup then semi-supervised steps; one metrics
// row per step, the last checkpoint as the result (no best-checkpoint
// selection).
RunResult run(const datagen::Corpus& corpus, const exec::KnowledgeBase& kb,
              const TrainConfig& cfg);

// run() plus metrics.csv and model.ckpt under out_dir.
RunResult run_to_dir(const datagen::Corpus& corpus,
                     const exec::KnowledgeBase& kb, const TrainConfig& cfg,
                     const std::string& out_dir);

std::string config_json(const TrainConfig& cfg);

void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& rows,
                       const std::string& header_comment);
std::vector<StepMetrics> read_metrics_csv(const std::string& path);

}  // namespace xpr::train
