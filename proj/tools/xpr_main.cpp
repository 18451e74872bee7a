#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xpr/datagen.hpp"
#include "xpr/error.hpp"
#include "xpr/executor.hpp"
#include "xpr/kernels.hpp"
#include "xpr/log.hpp"
#include "xpr/metrics.hpp"
#include "xpr/model.hpp"
#include "xpr/objectives.hpp"
#include "xpr/selfcheck.hpp"
#include "xpr/svg.hpp"
#include "xpr/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace xpr;

std::string objective_list() {
  std::string out;
  for (obj::Objective o : obj::all_objectives()) {
    if (!out.empty()) out += " | ";
    out += obj::objective_token(o);
  }
  return out;
}

int cmd_gen(const std::string& out_dir, std::uint64_t seed, int size,
            int rows) {
  fs::create_directories(out_dir);
  datagen::DomainSpec spec =
      datagen::default_restaurant_domain(seed, size, rows);
  datagen::Generated gen = datagen::generate(spec);
  const std::string config = "config: {\"command\":\"gen\",\"seed\":" +
                             std::to_string(seed) +
                             ",\"size\":" + std::to_string(size) +
                             ",\"rows\":" + std::to_string(rows) + "}";
  gen.kb.save_file((fs::path(out_dir) / "kb.txt").string(), config);
  datagen::write_corpus((fs::path(out_dir) / "corpus.tsv").string(),
                        datagen::all_labeled(gen.examples), config);
  if (log_level() >= 1) {
    std::fprintf(stderr, "[xpr] gen: %zu examples, %zu entities -> %s\n",
                 gen.examples.size(), gen.kb.entities.size(),
                 out_dir.c_str());
  }
  return 0;
}

int cmd_train(const train::TrainConfig& cfg, const std::string& kb_path,
              const std::string& corpus_path, double labeled_frac,
              const std::string& out_dir) {
  const exec::KnowledgeBase kb = exec::KnowledgeBase::load_file(kb_path);
  datagen::Corpus corpus =
      datagen::read_corpus(corpus_path, corpus_path + ".gold");
  if (corpus.unlabeled.empty()) {
    // Unsplit corpus: apply the labeled fraction here, seed-determined.
    std::vector<datagen::Example> examples;
    for (const auto& ex : corpus.labeled) {
      examples.push_back({ex.id, ex.tokens, ex.gold});
    }
    corpus = datagen::split(examples, labeled_frac, cfg.seed);
  }

  fs::create_directories(out_dir);
  const std::string config = "config: " + train::config_json(cfg) +
                             " labeled_frac: " + std::to_string(labeled_frac);
  datagen::write_corpus((fs::path(out_dir) / "split.tsv").string(), corpus,
                        config);
  datagen::write_sidecar((fs::path(out_dir) / "split.tsv.gold").string(),
                         corpus, config);

  const train::RunResult result = train::run_to_dir(corpus, kb, cfg, out_dir);
  const train::StepMetrics& last = result.rows.back();
  std::printf("objective=%s steps=%d dev_denotation_acc=%.4f\n",
              last.objective.c_str(), last.step, last.dev_denotation_acc);
  if (result.diagnostics.examples > 0) {
    std::printf("coverage=%.4f coverage_len_norm=%.6f avg_ratio=%.4f\n",
                metrics::coverage(result.diagnostics),
                metrics::coverage_length_normalized(result.diagnostics),
                metrics::avg_ratio(result.diagnostics));
  }
  if (log_level() >= 1) {
    std::fprintf(stderr, "[xpr] train: wrote %s/metrics.csv and model.ckpt\n",
                 out_dir.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& kb_path,
             const std::string& corpus_path, int emb, int hidden) {
  const exec::KnowledgeBase kb = exec::KnowledgeBase::load_file(kb_path);
  const datagen::Corpus corpus =
      datagen::read_corpus(corpus_path, corpus_path + ".gold");

  std::vector<std::vector<std::string>> all_tokens;
  for (const auto& ex : corpus.labeled) all_tokens.push_back(ex.tokens);
  for (const auto& ex : corpus.unlabeled) all_tokens.push_back(ex.tokens);
  const model::Vocab vocab = model::Vocab::build(all_tokens);

  lang::Grammar grammar = exec::grammar_from_kb(kb);
  model::ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.action_count = grammar.action_count();
  mc.embedding_dim = emb;
  mc.hidden_dim = hidden;
  const model::Params params = model::load_checkpoint(ckpt, mc);
  const model::Scorer scorer(std::move(grammar), mc);

  std::vector<metrics::EvalExample> eval_set;
  for (const auto& ex : corpus.labeled) {
    model::Utterance x;
    for (const auto& t : ex.tokens) x.token_ids.push_back(vocab.id(t));
    eval_set.push_back({std::move(x), ex.gold});
  }
  if (eval_set.empty()) {
    throw Error(ErrorCode::ConfigError, "corpus has no labeled examples");
  }
  const double acc = metrics::denotation_accuracy(scorer, eval_set, kb, params);
  std::printf("examples=%zu denotation_acc=%.4f\n", eval_set.size(), acc);
  return 0;
}

int cmd_analyze(const std::vector<std::string>& csv_paths,
                const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::string config = "config: {\"command\":\"analyze\",\"inputs\":[";
  for (std::size_t i = 0; i < csv_paths.size(); ++i) {
    if (i) config += ",";
    config += "\"" + csv_paths[i] + "\"";
  }
  config += "]}";

  std::vector<svg::Series> ratio_series, coverage_series;
  std::ofstream summary((fs::path(out_dir) / "summary.csv").string());
  if (!summary) throw Error(ErrorCode::IoError, "cannot write summary.csv");
  summary << "# " << config << "\n";
  summary << "file,objective,steps,final_loss_sup,final_dev_denotation_acc,"
             "final_avg_ratio,final_coverage\n";

  std::map<std::string, int> name_count;
  for (const std::string& path : csv_paths) {
    const std::vector<train::StepMetrics> rows = train::read_metrics_csv(path);
    if (rows.empty()) {
      throw Error(ErrorCode::IoError, "no metrics rows in '" + path + "'");
    }
    std::string name = rows.back().objective;
    const int n = ++name_count[name];
    if (n > 1) name += "#" + std::to_string(n);

    svg::Series ratio{name, {}}, cover{name, {}};
    for (const auto& r : rows) {
      ratio.points.emplace_back(r.step, r.avg_ratio);
      cover.points.emplace_back(r.step, r.coverage);
    }
    ratio_series.push_back(std::move(ratio));
    coverage_series.push_back(std::move(cover));

    const auto& last = rows.back();
    summary << path << ',' << last.objective << ',' << last.step << ','
            << last.loss_sup << ',' << last.dev_denotation_acc << ','
            << last.avg_ratio << ',' << last.coverage << "\n";
  }
  svg::write_line_chart((fs::path(out_dir) / "avg_ratio.svg").string(),
                        "Average ratio", "step", "avg ratio", ratio_series,
                        config);
  svg::write_line_chart((fs::path(out_dir) / "coverage.svg").string(),
                        "Coverage of gold programs", "step", "coverage",
                        coverage_series, config);
  std::printf("wrote %s/avg_ratio.svg, coverage.svg, summary.csv\n",
              out_dir.c_str());
  return 0;
}

int cmd_selfcheck(std::uint64_t seed) {
  const std::vector<check::SuiteResult> results = check::run_selfcheck(seed);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    ok &= r.pass;
  }
  std::printf("kernels backend: %s\n",
              kernels::backend_name(kernels::active_backend()));
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised semantic parser trained on executability"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus and KB");
  std::string gen_out = "data";
  std::uint64_t gen_seed = 1;
  int gen_size = 1000, gen_rows = 40;
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--size", gen_size, "Number of examples");
  gen->add_option("--rows", gen_rows, "Knowledge-base rows");

  // train
  auto* tr = app.add_subcommand("train", "Train a parser");
  train::TrainConfig cfg;
  std::string objective = "topk";
  std::string kb_path = "kb.txt", corpus_path = "corpus.tsv", train_out;
  double labeled_frac = 0.3;
  tr->add_option("--objective", objective,
                 "Unsupervised objective (" + objective_list() + ")")
      ->check([](const std::string& s) -> std::string {
        if (obj::parse_objective(s)) return "";
        return "invalid objective '" + s + "'; valid selectors: " +
               objective_list();
      });
  tr->add_option("--labeled-frac", labeled_frac,
                 "Labeled fraction when the corpus is unsplit");
  tr->add_option("--lambda", cfg.lambda, "Unsupervised loss weight");
  tr->add_option("--beam", cfg.beam, "Beam size");
  tr->add_option("--warmup", cfg.warmup_steps, "Supervised warmup steps");
  tr->add_option("--steps", cfg.max_steps, "Total training steps");
  tr->add_option("--seed", cfg.seed, "Run seed");
  tr->add_option("--threads", cfg.threads, "Worker threads");
  tr->add_option("--kb", kb_path, "Knowledge-base file");
  tr->add_option("--corpus", corpus_path, "Corpus file");
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_option("--lr", cfg.learning_rate, "Learning rate");
  tr->add_option("--batch-labeled", cfg.batch_labeled, "Labeled batch size");
  tr->add_option("--batch-unlabeled", cfg.batch_unlabeled,
                 "Unlabeled batch size");
  tr->add_option("--dev-count", cfg.dev_count, "Held-out dev examples");
  tr->add_option("--eval-every", cfg.eval_every, "Dev evaluation interval");
  tr->add_option("--emb", cfg.embedding_dim, "Embedding dimension");
  tr->add_option("--hidden", cfg.hidden_dim, "Hidden dimension");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_kb = "kb.txt", eval_corpus = "corpus.tsv";
  int eval_emb = 32, eval_hidden = 64;
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  ev->add_option("--kb", eval_kb, "Knowledge-base file");
  ev->add_option("--corpus", eval_corpus, "Corpus file (labeled rows)");
  ev->add_option("--emb", eval_emb, "Embedding dimension of the checkpoint");
  ev->add_option("--hidden", eval_hidden, "Hidden dimension of the checkpoint");

  // analyze
  auto* an = app.add_subcommand("analyze", "Plot metrics CSVs");
  std::vector<std::string> an_inputs;
  std::string an_out = "analysis";
  an->add_option("csv", an_inputs, "metrics.csv files")->required();
  an->add_option("--out", an_out, "Output directory");

  // selfcheck
  auto* sc = app.add_subcommand("selfcheck", "Run the oracle suites");
  std::uint64_t sc_seed = 7;
  sc->add_option("--seed", sc_seed, "Suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_seed, gen_size, gen_rows);
    if (tr->parsed()) {
      cfg.objective = *obj::parse_objective(objective);
      return cmd_train(cfg, kb_path, corpus_path, labeled_frac, train_out);
    }
    if (ev->parsed()) {
      return cmd_eval(eval_ckpt, eval_kb, eval_corpus, eval_emb, eval_hidden);
    }
    if (an->parsed()) return cmd_analyze(an_inputs, an_out);
    if (sc->parsed()) return cmd_selfcheck(sc_seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
