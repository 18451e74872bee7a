#include "xpr/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "xpr/error.hpp"
#include "xpr/kernels.hpp"

namespace xpr::model {

namespace {

namespace k = xpr::kernels;

void write_u64_le(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

double logsumexp(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace

Vocab Vocab::build(const std::vector<std::vector<std::string>>& utterances) {
  std::set<std::string> uniq;
  for (const auto& u : utterances) {
    for (const auto& t : u) uniq.insert(t);
  }
  Vocab v;
  v.tokens.push_back("<unk>");
  for (const auto& t : uniq) {
    if (t != "<unk>") v.tokens.push_back(t);
  }
  for (int i = 0; i < static_cast<int>(v.tokens.size()); ++i) {
    v.index[v.tokens[i]] = i;
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? 0 : it->second;
}

std::size_t ModelConfig::param_count() const {
  return ParamLayout(*this).total;
}

std::uint64_t ModelConfig::hash() const {
  const std::uint32_t fields[4] = {
      static_cast<std::uint32_t>(vocab_size),
      static_cast<std::uint32_t>(action_count),
      static_cast<std::uint32_t>(embedding_dim),
      static_cast<std::uint32_t>(hidden_dim)};
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint32_t f : fields) {
    for (int i = 0; i < 4; ++i) {
      h ^= (f >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  if (c.vocab_size < 1 || c.action_count < 1 || c.embedding_dim < 1 ||
      c.hidden_dim < 1) {
    throw Error(ErrorCode::ConfigError, "model dimensions must be positive");
  }
  const std::size_t V = c.vocab_size, A = c.action_count, E = c.embedding_dim,
                    H = c.hidden_dim;
  std::size_t at = 0;
  auto block = [&](std::size_t n) {
    std::size_t off = at;
    at += n;
    return off;
  };
  tok_emb = block(V * E);
  enc_wx = block(H * E);
  enc_wh = block(H * H);
  enc_b = block(H);
  act_emb = block(A * E);
  bos_emb = block(E);
  att_wq = block(H * H);
  att_wk = block(H * H);
  att_v = block(H);
  dec_wa = block(H * E);
  dec_ws = block(H * H);
  dec_wc = block(H * H);
  dec_b = block(H);
  out_w = block(A * H);
  out_b = block(A);
  total = at;
}

Params init_params(const ModelConfig& config, std::uint64_t seed) {
  Params p;
  p.config = config;
  p.values.resize(config.param_count());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.08, 0.08);
  for (double& v : p.values) v = dist(rng);
  return p;
}

void save_checkpoint(const Params& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out.write("XPR1", 4);
  write_u64_le(out, params.config.hash());
  write_u64_le(out, params.values.size());
  for (double v : params.values) {
    write_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

Params load_checkpoint(const std::string& path, const ModelConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "XPR1", 4) != 0) {
    throw Error(ErrorCode::IoError, "'" + path + "' is not a checkpoint");
  }
  const std::uint64_t hash = read_u64_le(in);
  if (hash != expected.hash()) {
    throw Error(ErrorCode::ConfigError,
                "checkpoint config hash does not match the expected config");
  }
  const std::uint64_t count = read_u64_le(in);
  if (count != expected.param_count()) {
    throw Error(ErrorCode::ConfigError, "checkpoint parameter count mismatch");
  }
  Params p;
  p.config = expected;
  p.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    p.values[i] = std::bit_cast<double>(read_u64_le(in));
  }
  if (!in) throw Error(ErrorCode::IoError, "truncated checkpoint");
  for (double v : p.values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::ConfigError, "checkpoint has non-finite values");
    }
  }
  return p;
}

struct Scorer::StepCache {
  std::vector<double> g;      // len x H, tanh(att_wq s_prev + kh_i)
  std::vector<double> alpha;  // len
  std::vector<double> c;      // H
  std::vector<double> s;      // H
  std::vector<double> logp;   // aligned with legal
  std::vector<lang::ActionId> legal;
  lang::ActionId last_action = -1;
};

Scorer::Scorer(lang::Grammar grammar, ModelConfig config)
    : grammar_(std::move(grammar)), config_(config), layout_(config) {
  if (config_.action_count != grammar_.action_count()) {
    throw Error(ErrorCode::ConfigError,
                "config action count does not match the grammar");
  }
}

Scorer::Encoding Scorer::encode(const Utterance& x,
                                const Params& params) const {
  if (x.token_ids.empty()) {
    throw Error(ErrorCode::ConfigError, "empty utterance");
  }
  const int E = config_.embedding_dim, H = config_.hidden_dim;
  const double* P = params.values.data();

  Encoding enc;
  enc.len = x.length();
  enc.token_ids = x.token_ids;
  enc.emb.resize(static_cast<std::size_t>(enc.len) * E);
  enc.h.assign(static_cast<std::size_t>(enc.len) * H, 0.0);
  enc.kh.assign(static_cast<std::size_t>(enc.len) * H, 0.0);

  for (int t = 0; t < enc.len; ++t) {
    const int tok = x.token_ids[t];
    if (tok < 0 || tok >= config_.vocab_size) {
      throw Error(ErrorCode::ConfigError, "token id out of vocabulary");
    }
    double* e = enc.emb.data() + static_cast<std::size_t>(t) * E;
    std::memcpy(e, P + layout_.tok_emb + static_cast<std::size_t>(tok) * E,
                sizeof(double) * E);
    double* h = enc.h.data() + static_cast<std::size_t>(t) * H;
    std::memcpy(h, P + layout_.enc_b, sizeof(double) * H);
    k::matvec_acc(P + layout_.enc_wx, H, E, e, h);
    if (t > 0) {
      k::matvec_acc(P + layout_.enc_wh, H, H, h - H, h);
    }
    for (int i = 0; i < H; ++i) h[i] = std::tanh(h[i]);
    double* kh = enc.kh.data() + static_cast<std::size_t>(t) * H;
    k::matvec_acc(P + layout_.att_wk, H, H, h, kh);
  }
  return enc;
}

Scorer::DecodeState Scorer::start_state(const Encoding& enc) const {
  const int H = config_.hidden_dim;
  DecodeState st;
  st.s.assign(enc.h.end() - H, enc.h.end());
  st.last_action = -1;
  st.cursor = grammar_.start();
  return st;
}

void Scorer::forward_step(const Encoding& enc, const double* s_prev,
                          lang::ActionId last_action,
                          const lang::Grammar::Cursor& cursor,
                          const Params& params, StepCache& cache) const {
  const int E = config_.embedding_dim, H = config_.hidden_dim;
  const int len = enc.len;
  const double* P = params.values.data();

  cache.last_action = last_action;
  cache.g.assign(static_cast<std::size_t>(len) * H, 0.0);
  cache.alpha.resize(len);
  cache.c.assign(H, 0.0);
  cache.s.assign(H, 0.0);

  // Additive attention over encoder states.
  std::vector<double> u(H, 0.0);
  k::matvec_acc(P + layout_.att_wq, H, H, s_prev, u.data());
  std::vector<double> scores(len);
  const double* v = P + layout_.att_v;
  for (int i = 0; i < len; ++i) {
    double* g = cache.g.data() + static_cast<std::size_t>(i) * H;
    const double* kh = enc.kh.data() + static_cast<std::size_t>(i) * H;
    for (int j = 0; j < H; ++j) g[j] = std::tanh(u[j] + kh[j]);
    scores[i] = k::dot(H, v, g);
  }
  const double lse = logsumexp(scores);
  for (int i = 0; i < len; ++i) cache.alpha[i] = std::exp(scores[i] - lse);
  for (int i = 0; i < len; ++i) {
    k::axpy(H, cache.alpha[i], enc.h.data() + static_cast<std::size_t>(i) * H,
            cache.c.data());
  }

  // Decoder recurrence.
  const double* a_in =
      last_action < 0
          ? P + layout_.bos_emb
          : P + layout_.act_emb + static_cast<std::size_t>(last_action) * E;
  std::vector<double> z(P + layout_.dec_b, P + layout_.dec_b + H);
  k::matvec_acc(P + layout_.dec_wa, H, E, a_in, z.data());
  k::matvec_acc(P + layout_.dec_ws, H, H, s_prev, z.data());
  k::matvec_acc(P + layout_.dec_wc, H, H, cache.c.data(), z.data());
  for (int j = 0; j < H; ++j) cache.s[j] = std::tanh(z[j]);

  // Masked log-softmax over the grammar's legal actions.
  grammar_.legal_actions(cursor, cache.legal);
  cache.logp.resize(cache.legal.size());
  for (std::size_t i = 0; i < cache.legal.size(); ++i) {
    const lang::ActionId a = cache.legal[i];
    cache.logp[i] =
        k::dot(H, P + layout_.out_w + static_cast<std::size_t>(a) * H,
               cache.s.data()) +
        P[layout_.out_b + a];
  }
  const double olse = logsumexp(cache.logp);
  for (double& lp : cache.logp) lp -= olse;
}

Scorer::StepResult Scorer::step(const Encoding& enc, const DecodeState& st,
                                const Params& params) const {
  StepCache cache;
  forward_step(enc, st.s.data(), st.last_action, st.cursor, params, cache);
  StepResult r;
  r.log_probs.assign(config_.action_count, kNegInf);
  for (std::size_t i = 0; i < cache.legal.size(); ++i) {
    r.log_probs[cache.legal[i]] = cache.logp[i];
  }
  r.state = std::move(cache.s);
  r.legal = std::move(cache.legal);
  return r;
}

Scorer::DecodeState Scorer::apply(const DecodeState& st, const StepResult& r,
                                  lang::ActionId action) const {
  DecodeState next;
  next.s = r.state;
  next.last_action = action;
  next.cursor = grammar_.advance(st.cursor, action);
  return next;
}

double Scorer::log_prob(const Utterance& x, const lang::Program& y,
                        const Params& params) const {
  std::vector<lang::ActionId> acts;
  try {
    acts = lang::actions(y, grammar_);
  } catch (const Error& e) {
    throw Error(ErrorCode::IllegalAction, e.what());
  }
  return log_prob_actions(x, acts, params);
}

double Scorer::log_prob_actions(const Utterance& x,
                                std::span<const lang::ActionId> acts,
                                const Params& params,
                                std::vector<double>* step_log_probs) const {
  const Encoding enc = encode(x, params);
  lang::Grammar::Cursor cursor = grammar_.start();
  std::vector<double> s(enc.h.end() - config_.hidden_dim, enc.h.end());
  lang::ActionId last = -1;
  if (step_log_probs) step_log_probs->clear();

  double total = 0.0;
  StepCache cache;
  for (lang::ActionId a : acts) {
    forward_step(enc, s.data(), last, cursor, params, cache);
    auto it = std::find(cache.legal.begin(), cache.legal.end(), a);
    if (it == cache.legal.end()) {
      throw Error(ErrorCode::IllegalAction,
                  "action '" + grammar_.action_text(a) +
                      "' violates the grammar mask");
    }
    const double lp = cache.logp[it - cache.legal.begin()];
    total += lp;
    if (step_log_probs) step_log_probs->push_back(lp);
    cursor = grammar_.advance(cursor, a);
    s = cache.s;
    last = a;
  }
  if (!grammar_.is_complete(cursor)) {
    throw Error(ErrorCode::IllegalAction, "incomplete action sequence");
  }
  return total;
}

std::vector<double> Scorer::grad_weighted(
    const Utterance& x, std::span<const WeightedSequence> pairs,
    const Params& params) const {
  const int E = config_.embedding_dim, H = config_.hidden_dim;
  const double* P = params.values.data();

  std::vector<double> grad(layout_.total, 0.0);
  double* G = grad.data();

  const Encoding enc = encode(x, params);
  const int len = enc.len;
  std::vector<double> dh(static_cast<std::size_t>(len) * H, 0.0);
  bool touched = false;

  std::vector<StepCache> caches;
  std::vector<double> ds(H), ds_prev(H), dz(H), dc(H), du(H), dpre(H);
  std::vector<double> dalpha(len);

  for (const WeightedSequence& pair : pairs) {
    const double w = pair.weight;
    if (w == 0.0) continue;
    touched = true;

    // Forward, keeping per-step caches.
    const std::size_t L = pair.actions.size();
    caches.resize(L);
    lang::Grammar::Cursor cursor = grammar_.start();
    const double* s_prev = enc.h.data() + static_cast<std::size_t>(len - 1) * H;
    lang::ActionId last = -1;
    for (std::size_t t = 0; t < L; ++t) {
      const lang::ActionId a = pair.actions[t];
      forward_step(enc, s_prev, last, cursor, params, caches[t]);
      if (!std::count(caches[t].legal.begin(), caches[t].legal.end(), a)) {
        throw Error(ErrorCode::IllegalAction,
                    "action '" + grammar_.action_text(a) +
                        "' violates the grammar mask");
      }
      cursor = grammar_.advance(cursor, a);
      s_prev = caches[t].s.data();
      last = a;
    }
    if (!grammar_.is_complete(cursor)) {
      throw Error(ErrorCode::IllegalAction, "incomplete action sequence");
    }

    // Backward.
    std::fill(ds.begin(), ds.end(), 0.0);
    for (std::size_t ti = L; ti-- > 0;) {
      const StepCache& cache = caches[ti];
      const lang::ActionId chosen = pair.actions[ti];
      const double* sp =
          ti == 0 ? enc.h.data() + static_cast<std::size_t>(len - 1) * H
                  : caches[ti - 1].s.data();

      // Output softmax: d logits = w * (onehot - p) on the legal set.
      for (std::size_t i = 0; i < cache.legal.size(); ++i) {
        const lang::ActionId a = cache.legal[i];
        const double doa =
            w * ((a == chosen ? 1.0 : 0.0) - std::exp(cache.logp[i]));
        G[layout_.out_b + a] += doa;
        k::axpy(H, doa, cache.s.data(),
                G + layout_.out_w + static_cast<std::size_t>(a) * H);
        k::axpy(H, doa, P + layout_.out_w + static_cast<std::size_t>(a) * H,
                ds.data());
      }

      // Decoder tanh.
      for (int j = 0; j < H; ++j) {
        dz[j] = ds[j] * (1.0 - cache.s[j] * cache.s[j]);
      }
      k::axpy(H, 1.0, dz.data(), G + layout_.dec_b);
      const double* a_in =
          cache.last_action < 0
              ? P + layout_.bos_emb
              : P + layout_.act_emb +
                    static_cast<std::size_t>(cache.last_action) * E;
      double* da_in =
          cache.last_action < 0
              ? G + layout_.bos_emb
              : G + layout_.act_emb +
                    static_cast<std::size_t>(cache.last_action) * E;
      k::ger_acc(G + layout_.dec_wa, H, E, 1.0, dz.data(), a_in);
      k::matvec_t_acc(P + layout_.dec_wa, H, E, dz.data(), da_in);
      k::ger_acc(G + layout_.dec_ws, H, H, 1.0, dz.data(), sp);
      std::fill(ds_prev.begin(), ds_prev.end(), 0.0);
      k::matvec_t_acc(P + layout_.dec_ws, H, H, dz.data(), ds_prev.data());
      k::ger_acc(G + layout_.dec_wc, H, H, 1.0, dz.data(), cache.c.data());
      std::fill(dc.begin(), dc.end(), 0.0);
      k::matvec_t_acc(P + layout_.dec_wc, H, H, dz.data(), dc.data());

      // Attention: context, softmax, scores, keys, query.
      double asum = 0.0;
      for (int i = 0; i < len; ++i) {
        dalpha[i] =
            k::dot(H, dc.data(), enc.h.data() + static_cast<std::size_t>(i) * H);
        asum += cache.alpha[i] * dalpha[i];
        k::axpy(H, cache.alpha[i], dc.data(),
                dh.data() + static_cast<std::size_t>(i) * H);
      }
      std::fill(du.begin(), du.end(), 0.0);
      const double* v = P + layout_.att_v;
      for (int i = 0; i < len; ++i) {
        const double dscore = cache.alpha[i] * (dalpha[i] - asum);
        const double* g = cache.g.data() + static_cast<std::size_t>(i) * H;
        k::axpy(H, dscore, g, G + layout_.att_v);
        for (int j = 0; j < H; ++j) {
          dpre[j] = dscore * v[j] * (1.0 - g[j] * g[j]);
        }
        k::axpy(H, 1.0, dpre.data(), du.data());
        k::ger_acc(G + layout_.att_wk, H, H, 1.0, dpre.data(),
                   enc.h.data() + static_cast<std::size_t>(i) * H);
        k::matvec_t_acc(P + layout_.att_wk, H, H, dpre.data(),
                        dh.data() + static_cast<std::size_t>(i) * H);
      }
      k::ger_acc(G + layout_.att_wq, H, H, 1.0, du.data(), sp);
      k::matvec_t_acc(P + layout_.att_wq, H, H, du.data(), ds_prev.data());

      ds = ds_prev;
    }
    // Initial decoder state is the final encoder state.
    k::axpy(H, 1.0, ds.data(),
            dh.data() + static_cast<std::size_t>(len - 1) * H);
  }

  if (!touched) return grad;

  // Encoder backward over the accumulated state gradients.
  std::vector<double> carry(H, 0.0), dzt(H), de(E);
  for (int t = len - 1; t >= 0; --t) {
    const double* h = enc.h.data() + static_cast<std::size_t>(t) * H;
    for (int j = 0; j < H; ++j) {
      const double dht = dh[static_cast<std::size_t>(t) * H + j] + carry[j];
      dzt[j] = dht * (1.0 - h[j] * h[j]);
    }
    k::axpy(H, 1.0, dzt.data(), G + layout_.enc_b);
    const double* e = enc.emb.data() + static_cast<std::size_t>(t) * E;
    k::ger_acc(G + layout_.enc_wx, H, E, 1.0, dzt.data(), e);
    std::fill(de.begin(), de.end(), 0.0);
    k::matvec_t_acc(P + layout_.enc_wx, H, E, dzt.data(), de.data());
    k::axpy(E, 1.0, de.data(),
            G + layout_.tok_emb +
                static_cast<std::size_t>(enc.token_ids[t]) * E);
    std::fill(carry.begin(), carry.end(), 0.0);
    if (t > 0) {
      k::ger_acc(G + layout_.enc_wh, H, H, 1.0, dzt.data(), h - H);
      k::matvec_t_acc(P + layout_.enc_wh, H, H, dzt.data(), carry.data());
    }
  }
  return grad;
}

}  // namespace xpr::model
