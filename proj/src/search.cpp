#include "xpr/search.hpp"

#include <algorithm>
#include <cmath>

#include "xpr/error.hpp"

namespace xpr::search {

namespace {

bool lex_less(const std::vector<lang::ActionId>& a,
              const std::vector<lang::ActionId>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

struct Hyp {
  model::Scorer::DecodeState state;
  std::vector<lang::ActionId> actions;
  std::vector<double> step_logprobs;
  double score = 0.0;
  bool done = false;
};

}  // namespace

std::vector<ScoredSequence> beam_search(const model::Scorer& scorer,
                                        const model::Utterance& x,
                                        const model::Params& params, int k) {
  if (k < 1) throw Error(ErrorCode::ConfigError, "beam size must be >= 1");

  const model::Scorer::Encoding enc = scorer.encode(x, params);
  const lang::Grammar& g = scorer.grammar();

  std::vector<Hyp> beam;
  beam.push_back(Hyp{scorer.start_state(enc), {}, {}, 0.0, false});

  struct Candidate {
    double score;
    std::vector<lang::ActionId> actions;
    std::vector<double> step_logprobs;
    int parent;             // index into the step results, -1 for done hyps
    lang::ActionId action;  // -1 for done hyps
  };

  const int max_len = g.max_sequence_length();
  std::vector<model::Scorer::StepResult> results;
  for (int step = 0; step < max_len; ++step) {
    bool any_live = false;
    for (const Hyp& h : beam) any_live |= !h.done;
    if (!any_live) break;

    std::vector<Candidate> cands;
    results.clear();
    for (std::size_t hi = 0; hi < beam.size(); ++hi) {
      Hyp& h = beam[hi];
      if (h.done) {
        cands.push_back({h.score, h.actions, h.step_logprobs, -1, -1});
        continue;
      }
      results.push_back(scorer.step(enc, h.state, params));
      const model::Scorer::StepResult& r = results.back();
      const int ri = static_cast<int>(results.size()) - 1;
      for (lang::ActionId a : r.legal) {
        Candidate c;
        c.score = h.score + r.log_probs[a];
        c.actions = h.actions;
        c.actions.push_back(a);
        c.step_logprobs = h.step_logprobs;
        c.step_logprobs.push_back(r.log_probs[a]);
        c.parent = ri;
        c.action = a;
        cands.push_back(std::move(c));
      }
    }

    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) {
                if (a.score != b.score) return a.score > b.score;
                return lex_less(a.actions, b.actions);
              });
    if (static_cast<int>(cands.size()) > k) cands.resize(k);

    // Rebuild the beam; live candidates need their parent's step output
    // (all live candidates reference parents from this step).
    std::vector<Hyp> next;
    std::vector<Hyp> old = std::move(beam);
    next.reserve(cands.size());
    for (Candidate& c : cands) {
      Hyp h;
      h.score = c.score;
      if (c.parent < 0) {
        h.done = true;
        h.actions = std::move(c.actions);
        h.step_logprobs = std::move(c.step_logprobs);
      } else {
        // Find the live hyp this result belongs to: results were pushed
        // in beam order for non-done hyps.
        int live_index = -1, seen = -1;
        for (std::size_t hi = 0; hi < old.size(); ++hi) {
          if (!old[hi].done && ++seen == c.parent) {
            live_index = static_cast<int>(hi);
            break;
          }
        }
        const model::Scorer::StepResult& r = results[c.parent];
        h.state = scorer.apply(old[live_index].state, r, c.action);
        h.done = g.is_complete(h.state.cursor);
        h.actions = std::move(c.actions);
        h.step_logprobs = std::move(c.step_logprobs);
      }
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  std::vector<ScoredSequence> out;
  out.reserve(beam.size());
  for (Hyp& h : beam) {
    if (!h.done) continue;  // unreachable: max_len bounds every program
    ScoredSequence s;
    s.program = lang::decode(h.actions, g);
    s.actions = std::move(h.actions);
    s.logprob = h.score;
    s.step_logprobs = std::move(h.step_logprobs);
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(),
            [](const ScoredSequence& a, const ScoredSequence& b) {
              if (a.logprob != b.logprob) return a.logprob > b.logprob;
              return lex_less(a.actions, b.actions);
            });
  return out;
}

SeenPartition partition(std::vector<ScoredSequence> beam,
                        const exec::KnowledgeBase& kb) {
  SeenPartition out;
  for (ScoredSequence& s : beam) {
    const double p = std::exp(s.logprob);
    if (exec::reward(s.program, kb)) {
      out.mass_se += p;
      out.p_se.push_back(std::move(s));
    } else {
      out.mass_sn += p;
      out.p_sn.push_back(std::move(s));
    }
  }
  return out;
}

double exact_executable_mass(const model::Scorer& scorer,
                             const model::Utterance& x,
                             const model::Params& params,
                             const exec::KnowledgeBase& kb, std::size_t cap) {
  const std::vector<lang::Program> all =
      lang::enumerate_programs(scorer.grammar(), cap);
  // log-sum-exp over the executable programs' log-probabilities
  std::vector<double> lps;
  for (const lang::Program& p : all) {
    if (exec::reward(p, kb)) {
      lps.push_back(scorer.log_prob(x, p, params));
    }
  }
  if (lps.empty()) return 0.0;
  double m = lps[0];
  for (double v : lps) m = std::max(m, v);
  double acc = 0.0;
  for (double v : lps) acc += std::exp(v - m);
  return std::exp(m + std::log(acc));
}

}  // namespace xpr::search
