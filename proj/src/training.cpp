#include "xpr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "xpr/error.hpp"
#include "xpr/kernels.hpp"
#include "xpr/log.hpp"
#include "xpr/search.hpp"

namespace xpr::train {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Distinct deterministic streams derived from the run seed.
constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kSplitStream = 0x2;
constexpr std::uint64_t kBatchStream = 0x3;

std::uint64_t substream(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step over seed ^ stream
  std::uint64_t z = (seed ^ (stream * 0x9e3779b97f4a7c15ull)) +
                    0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename F>
void parallel_for(int n, int threads, F&& f) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::string format_metric(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

struct Trainer::Impl {
  TrainConfig cfg;
  const exec::KnowledgeBase& kb;
  model::Vocab vocab;
  std::unique_ptr<model::Scorer> scorer;
  model::Params params;

  struct Labeled {
    model::Utterance x;
    std::vector<lang::ActionId> gold_actions;
  };
  struct Unlabeled {
    model::Utterance x;
    std::optional<lang::Program> hidden_gold;
  };
  std::vector<Labeled> train_labeled;
  std::vector<metrics::EvalExample> dev;
  std::vector<Unlabeled> unlabeled;

  std::mt19937_64 batch_rng;
  metrics::DiagnosticsAccumulator diagnostics;
  double last_dev_acc = kNan;

  Impl(const datagen::Corpus& corpus, const exec::KnowledgeBase& kb_in,
       const TrainConfig& cfg_in)
      : cfg(cfg_in), kb(kb_in), batch_rng(substream(cfg_in.seed, kBatchStream)) {
    if (corpus.labeled.empty()) {
      throw Error(ErrorCode::ConfigError, "corpus has no labeled examples");
    }
    std::vector<std::vector<std::string>> all_tokens;
    for (const auto& ex : corpus.labeled) all_tokens.push_back(ex.tokens);
    for (const auto& ex : corpus.unlabeled) all_tokens.push_back(ex.tokens);
    vocab = model::Vocab::build(all_tokens);

    lang::Grammar grammar = exec::grammar_from_kb(kb);
    model::ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.action_count = grammar.action_count();
    mc.embedding_dim = cfg.embedding_dim;
    mc.hidden_dim = cfg.hidden_dim;
    scorer = std::make_unique<model::Scorer>(std::move(grammar), mc);
    params = model::init_params(mc, substream(cfg.seed, kInitStream));

    auto to_utterance = [&](const std::vector<std::string>& tokens) {
      model::Utterance x;
      for (const auto& t : tokens) x.token_ids.push_back(vocab.id(t));
      return x;
    };

    // Dev carve-out from the labeled pool, seed-determined.
    std::vector<std::size_t> order(corpus.labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 split_rng(substream(cfg.seed, kSplitStream));
    std::shuffle(order.begin(), order.end(), split_rng);
    std::size_t n_dev = std::min<std::size_t>(
        std::max(cfg.dev_count, 0), corpus.labeled.size() - 1);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& ex = corpus.labeled[order[i]];
      if (!exec::reward(ex.gold, kb)) {
        throw Error(ErrorCode::ConfigError,
                    "gold program of '" + ex.id + "' is not executable");
      }
      if (i < n_dev) {
        dev.push_back({to_utterance(ex.tokens), ex.gold});
      } else {
        train_labeled.push_back(
            {to_utterance(ex.tokens), lang::actions(ex.gold, scorer->grammar())});
      }
    }
    for (const auto& ex : corpus.unlabeled) {
      unlabeled.push_back({to_utterance(ex.tokens), ex.hidden_gold});
    }
  }

  BatchGradients compute_batch(const std::vector<int>& labeled_idx,
                               const std::vector<int>& unlabeled_idx,
                               bool with_unsup) {
    BatchGradients out;
    const std::size_t dim = params.values.size();
    out.g_sup.assign(dim, 0.0);

    // Supervised NLL over the labeled batch.
    const int bl = static_cast<int>(labeled_idx.size());
    std::vector<std::vector<double>> grads(bl);
    std::vector<double> losses(bl, 0.0);
    parallel_for(bl, cfg.threads, [&](int i) {
      const Labeled& ex = train_labeled[labeled_idx[i]];
      const double w = -1.0 / static_cast<double>(bl);
      model::WeightedSequence pair{ex.gold_actions, w};
      grads[i] = scorer->grad_weighted(ex.x, std::span(&pair, 1), params);
      losses[i] =
          -scorer->log_prob_actions(ex.x, ex.gold_actions, params) / bl;
    });
    for (int i = 0; i < bl; ++i) {
      kernels::axpy(dim, 1.0, grads[i].data(), out.g_sup.data());
      out.loss_sup += losses[i];
    }

    if (!with_unsup || unlabeled_idx.empty()) {
      out.loss_unsup = kNan;
      out.skipped = static_cast<int>(unlabeled_idx.size());
      return out;
    }

    out.g_unsup.assign(dim, 0.0);
    const int bu = static_cast<int>(unlabeled_idx.size());
    struct ItemResult {
      std::vector<double> grad;
      double loss = 0.0;
      bool skipped = false;
      int utterance_len = 0;
      search::SeenPartition part;
    };
    std::vector<ItemResult> items(bu);
    parallel_for(bu, cfg.threads, [&](int j) {
      const Unlabeled& ex = unlabeled[unlabeled_idx[j]];
      ItemResult& r = items[j];
      r.utterance_len = ex.x.length();
      r.part = search::partition(
          search::beam_search(*scorer, ex.x, params, cfg.beam), kb);
      obj::UnsupLossResult lr = obj::unsup_loss(cfg.objective, r.part);
      r.skipped = lr.skipped;
      if (lr.skipped) return;
      r.loss = lr.loss / bu;
      std::vector<model::WeightedSequence> pairs;
      pairs.reserve(lr.grad_weights.size());
      for (auto& gw : lr.grad_weights) {
        pairs.push_back({std::move(gw.actions), gw.weight / bu});
      }
      r.grad = scorer->grad_weighted(ex.x, pairs, params);
    });
    for (int j = 0; j < bu; ++j) {
      ItemResult& r = items[j];
      const Unlabeled& ex = unlabeled[unlabeled_idx[j]];
      diagnostics.add_example(r.utterance_len, r.part,
                              ex.hidden_gold ? &*ex.hidden_gold : nullptr);
      if (r.skipped) {
        ++out.skipped;
        continue;
      }
      ++out.contributing;
      out.loss_unsup += r.loss;
      kernels::axpy(dim, 1.0, r.grad.data(), out.g_unsup.data());
    }
    return out;
  }

  StepMetrics step(int step_no) {
    const bool warm = step_no <= cfg.warmup_steps;
    const double lambda_eff = (warm || cfg.lambda <= 0.0) ? 0.0 : cfg.lambda;

    std::vector<int> bl(cfg.batch_labeled), bu;
    for (int& i : bl) {
      i = static_cast<int>(batch_rng() % train_labeled.size());
    }
    if (!unlabeled.empty()) {
      bu.resize(cfg.batch_unlabeled);
      for (int& i : bu) i = static_cast<int>(batch_rng() % unlabeled.size());
    }

    BatchGradients g = compute_batch(bl, bu, lambda_eff > 0.0);
    if (!std::isfinite(g.loss_sup) ||
        (lambda_eff > 0.0 && !std::isfinite(g.loss_unsup))) {
      throw Error(ErrorCode::DivergenceError,
                  "non-finite loss at step " + std::to_string(step_no) +
                      " (sup=" + format_metric(g.loss_sup) +
                      ", unsup=" + format_metric(g.loss_unsup) + ")");
    }

    const std::size_t dim = params.values.size();
    kernels::axpy(dim, -cfg.learning_rate, g.g_sup.data(),
                  params.values.data());
    if (lambda_eff > 0.0) {
      kernels::axpy(dim, -cfg.learning_rate * lambda_eff, g.g_unsup.data(),
                    params.values.data());
    }

    StepMetrics m;
    m.step = step_no;
    m.objective = obj::objective_token(cfg.objective);
    m.loss_sup = g.loss_sup;
    m.loss_unsup = lambda_eff > 0.0 ? g.loss_unsup : kNan;
    try {
      m.avg_ratio = metrics::avg_ratio(diagnostics);
    } catch (const Error&) {
      m.avg_ratio = kNan;
    }
    try {
      m.coverage = metrics::coverage(diagnostics);
    } catch (const Error&) {
      m.coverage = kNan;
    }
    if (!dev.empty() &&
        (step_no % cfg.eval_every == 0 || step_no == cfg.max_steps)) {
      last_dev_acc = metrics::denotation_accuracy(*scorer, dev, kb, params);
      if (log_level() >= 2) {
        // Both coverage readings: per-example and length-normalized.
        std::fprintf(stderr,
                     "[xpr] step %d dev=%.4f coverage=%.4f "
                     "coverage_len_norm=%.6f\n",
                     step_no, last_dev_acc,
                     diagnostics.examples ? metrics::coverage(diagnostics)
                                          : std::nan(""),
                     diagnostics.sum_len_x > 0
                         ? metrics::coverage_length_normalized(diagnostics)
                         : std::nan(""));
      }
    }
    m.dev_denotation_acc = last_dev_acc;
    if (bu.empty()) {
      m.skipped_frac = kNan;
    } else if (lambda_eff > 0.0) {
      m.skipped_frac =
          static_cast<double>(g.skipped) / static_cast<double>(bu.size());
    } else {
      m.skipped_frac = 1.0;
    }
    return m;
  }
};

Trainer::Trainer(const datagen::Corpus& corpus, const exec::KnowledgeBase& kb,
                 const TrainConfig& cfg)
    : impl_(std::make_unique<Impl>(corpus, kb, cfg)) {}

Trainer::~Trainer() = default;

StepMetrics Trainer::train_step(int step) { return impl_->step(step); }

BatchGradients Trainer::compute_batch(const std::vector<int>& labeled_idx,
                                      const std::vector<int>& unlabeled_idx,
                                      bool with_unsup) {
  return impl_->compute_batch(labeled_idx, unlabeled_idx, with_unsup);
}

const model::Scorer& Trainer::scorer() const { return *impl_->scorer; }
const model::Params& Trainer::params() const { return impl_->params; }
model::Params& Trainer::mutable_params() { return impl_->params; }

const metrics::DiagnosticsAccumulator& Trainer::diagnostics() const {
  return impl_->diagnostics;
}

double Trainer::dev_accuracy() const {
  if (impl_->dev.empty()) return kNan;
  return metrics::denotation_accuracy(*impl_->scorer, impl_->dev, impl_->kb,
                                      impl_->params);
}

int Trainer::train_labeled_count() const {
  return static_cast<int>(impl_->train_labeled.size());
}
int Trainer::unlabeled_count() const {
  return static_cast<int>(impl_->unlabeled.size());
}

model::Params pretrain(const datagen::Corpus& corpus,
                       const exec::KnowledgeBase& kb, const TrainConfig& cfg) {
  Trainer t(corpus, kb, cfg);
  for (int step = 1; step <= cfg.warmup_steps; ++step) t.train_step(step);
  return t.params();
}

RunResult run(const datagen::Corpus& corpus, const exec::KnowledgeBase& kb,
              const TrainConfig& cfg) {
  Trainer t(corpus, kb, cfg);
  RunResult out;
  out.rows.reserve(cfg.max_steps);
  for (int step = 1; step <= cfg.max_steps; ++step) {
    out.rows.push_back(t.train_step(step));
  }
  out.params = t.params();
  out.diagnostics = t.diagnostics();
  return out;
}

RunResult run_to_dir(const datagen::Corpus& corpus,
                     const exec::KnowledgeBase& kb, const TrainConfig& cfg,
                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunResult result = run(corpus, kb, cfg);
  write_metrics_csv((std::filesystem::path(out_dir) / "metrics.csv").string(),
                    result.rows, "config: " + config_json(cfg));
  model::save_checkpoint(
      result.params,
      (std::filesystem::path(out_dir) / "model.ckpt").string());
  return result;
}

std::string config_json(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "{\"objective\":\"" << obj::objective_token(cfg.objective) << "\""
      << ",\"lambda\":" << format_metric(cfg.lambda)
      << ",\"warmup_steps\":" << cfg.warmup_steps
      << ",\"max_steps\":" << cfg.max_steps
      << ",\"batch_labeled\":" << cfg.batch_labeled
      << ",\"batch_unlabeled\":" << cfg.batch_unlabeled
      << ",\"learning_rate\":" << format_metric(cfg.learning_rate)
      << ",\"seed\":" << cfg.seed << ",\"beam\":" << cfg.beam
      << ",\"threads\":" << cfg.threads << ",\"dev_count\":" << cfg.dev_count
      << ",\"eval_every\":" << cfg.eval_every
      << ",\"embedding_dim\":" << cfg.embedding_dim
      << ",\"hidden_dim\":" << cfg.hidden_dim << "}";
  return out.str();
}

void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& rows,
                       const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "step,objective,loss_sup,loss_unsup,avg_ratio,coverage,"
         "dev_denotation_acc,skipped_frac\n";
  for (const StepMetrics& m : rows) {
    out << m.step << ',' << m.objective << ',' << format_metric(m.loss_sup)
        << ',' << format_metric(m.loss_unsup) << ','
        << format_metric(m.avg_ratio) << ',' << format_metric(m.coverage)
        << ',' << format_metric(m.dev_denotation_acc) << ','
        << format_metric(m.skipped_frac) << '\n';
  }
}

std::vector<StepMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<StepMetrics> rows;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      saw_header = true;  // column header row
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 8) {
      throw Error(ErrorCode::IoError, "malformed metrics row in " + path);
    }
    StepMetrics m;
    m.step = std::stoi(f[0]);
    m.objective = f[1];
    m.loss_sup = std::stod(f[2]);
    m.loss_unsup = std::stod(f[3]);
    m.avg_ratio = std::stod(f[4]);
    m.coverage = std::stod(f[5]);
    m.dev_denotation_acc = std::stod(f[6]);
    m.skipped_frac = std::stod(f[7]);
    rows.push_back(std::move(m));
  }
  return rows;
}

}  // namespace xpr::train
