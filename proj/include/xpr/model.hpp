#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xpr/minilang.hpp"

// A locally-normalized autoregressive scorer p(y|x, theta) over grammar
// actions: token embeddings feed a single-layer tanh recurrent encoder;
// the decoder attends over encoder states with additive attention and
// emits a masked softmax over the legal actions of the current grammar
// state. Gradients are computed by hand-written backpropagation and
// gated by finite-difference checks in the test suite.

namespace xpr::model {

struct Vocab {
  // tokens[0] is "<unk>"; the rest are the corpus tokens, sorted.
  std::vector<std::string> tokens;
  std::map<std::string, int> index;

  static Vocab build(const std::vector<std::vector<std::string>>& utterances);
  int id(const std::string& token) const;
  int size() const { return static_cast<int>(tokens.size()); }
};

struct Utterance {
  std::vector<int> token_ids;  // non-empty, all within the vocabulary

  int length() const { return static_cast<int>(token_ids.size()); }
};

struct ModelConfig {
  int vocab_size = 0;
  int action_count = 0;
  int embedding_dim = 32;
  int hidden_dim = 64;

  std::size_t param_count() const;
  // FNV-1a over the four fields, little-endian; ties checkpoints to the
  // exact parameter layout.
  std::uint64_t hash() const;
  bool operator==(const ModelConfig&) const = default;
};

// Offsets of the named blocks inside the flat parameter vector. All
// matrices are row-major.
//
//   block     shape   role
//   tok_emb   V x E   utterance token embeddings
//   enc_wx    H x E   encoder input weights
//   enc_wh    H x H   encoder recurrent weights
//   enc_b     H       encoder bias
//   act_emb   A x E   action embeddings (decoder inputs)
//   bos_emb   E       decoder input before the first action
//   att_wq    H x H   attention query projection
//   att_wk    H x H   attention key projection
//   att_v     H       attention score vector
//   dec_wa    H x E   decoder input weights
//   dec_ws    H x H   decoder recurrent weights
//   dec_wc    H x H   decoder context weights
//   dec_b     H       decoder bias
//   out_w     A x H   action output weights
//   out_b     A       action output bias
struct ParamLayout {
  explicit ParamLayout(const ModelConfig& c);

  std::size_t tok_emb, enc_wx, enc_wh, enc_b;
  std::size_t act_emb, bos_emb;
  std::size_t att_wq, att_wk, att_v;
  std::size_t dec_wa, dec_ws, dec_wc, dec_b;
  std::size_t out_w, out_b;
  std::size_t total;
};

struct Params {
  ModelConfig config;
  std::vector<double> values;
};

// Uniform in [-0.08, 0.08] from a seeded generator.
Params init_params(const ModelConfig& config, std::uint64_t seed);

// Checkpoint file: magic "XPR1", config hash (8 bytes LE), parameter
// count (8 bytes LE), then the vector as IEEE-754 doubles, LE.
void save_checkpoint(const Params& params, const std::string& path);
Params load_checkpoint(const std::string& path, const ModelConfig& expected);

struct WeightedSequence {
  std::vector<lang::ActionId> actions;
  double weight = 0.0;
};

inline constexpr double kNegInf = -1e300;

class Scorer {
 public:
  Scorer(lang::Grammar grammar, ModelConfig config);

  const lang::Grammar& grammar() const { return grammar_; }
  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }

  // Encoder pass over one utterance; reusable across decodes.
  struct Encoding {
    int len = 0;
    std::vector<int> token_ids;
    std::vector<double> emb;  // len x E
    std::vector<double> h;    // len x H
    std::vector<double> kh;   // len x H, precomputed att_wk * h_i
  };
  Encoding encode(const Utterance& x, const Params& params) const;

  struct DecodeState {
    std::vector<double> s;  // decoder state after the last action
    lang::ActionId last_action = -1;  // -1 before the first action
    lang::Grammar::Cursor cursor;
  };
  DecodeState start_state(const Encoding& enc) const;

  struct StepResult {
    // log p over all actions; kNegInf on mask-illegal ones. exp sums
    // to 1 over the legal set.
    std::vector<double> log_probs;
    std::vector<double> state;  // decoder state fed by this step
    std::vector<lang::ActionId> legal;
  };
  StepResult step(const Encoding& enc, const DecodeState& st,
                  const Params& params) const;
  DecodeState apply(const DecodeState& st, const StepResult& r,
                    lang::ActionId action) const;

  // Sum of per-step masked log-softmax terms; <= 0. Throws
  // Error{IllegalAction} when y is not decodable under the grammar.
  double log_prob(const Utterance& x, const lang::Program& y,
                  const Params& params) const;
  double log_prob_actions(const Utterance& x,
                          std::span<const lang::ActionId> acts,
                          const Params& params,
                          std::vector<double>* step_log_probs = nullptr) const;

  // Gradient of sum_i w_i * log p(y_i | x) with the weights treated as
  // constants; same length as the parameter vector.
  std::vector<double> grad_weighted(
      const Utterance& x, std::span<const WeightedSequence> pairs,
      const Params& params) const;

 private:
  struct StepCache;
  void forward_step(const Encoding& enc, const double* s_prev,
                    lang::ActionId last_action,
                    const lang::Grammar::Cursor& cursor, const Params& params,
                    StepCache& cache) const;

  lang::Grammar grammar_;
  ModelConfig config_;
  ParamLayout layout_;
};

}  // namespace xpr::model
