#include "xpr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "xpr/error.hpp"

namespace xpr::datagen {

namespace {

using lang::CompareOp;
using lang::Program;
using lang::Value;

Error spec_error(const std::string& msg) {
  return Error(ErrorCode::SpecError, msg);
}

struct SlotRef {
  enum class Kind { Word, Syn, Prop, Value } kind = Kind::Word;
  std::string text;  // word text or pool name
  int cond = -1;     // 1-based condition for Prop/Value
};

std::vector<SlotRef> parse_pattern(const TemplateSpec& tmpl,
                                   const DomainSpec& spec) {
  std::vector<SlotRef> out;
  for (const std::string& tok : tmpl.pattern) {
    SlotRef ref;
    if (tok.size() > 2 && tok.front() == '<' && tok.back() == '>') {
      const std::string body = tok.substr(1, tok.size() - 2);
      if (body.rfind("syn:", 0) == 0) {
        ref.kind = SlotRef::Kind::Syn;
        ref.text = body.substr(4);
        if (!spec.word_pools.count(ref.text)) {
          throw spec_error("unknown word pool '" + ref.text + "'");
        }
      } else if (body.rfind("prop", 0) == 0 || body.rfind("value", 0) == 0) {
        const bool is_prop = body.rfind("prop", 0) == 0;
        ref.kind = is_prop ? SlotRef::Kind::Prop : SlotRef::Kind::Value;
        const std::string num = body.substr(is_prop ? 4 : 5);
        try {
          ref.cond = std::stoi(num);
        } catch (...) {
          throw spec_error("bad slot '" + tok + "'");
        }
        if (ref.cond < 1 ||
            ref.cond > static_cast<int>(tmpl.conditions.size())) {
          throw spec_error("slot '" + tok + "' has no matching condition");
        }
        if (!tmpl.conditions[ref.cond - 1].mentioned) {
          throw spec_error("slot '" + tok + "' refers to an unmentioned "
                           "condition");
        }
      } else {
        throw spec_error("unknown slot '" + tok + "'");
      }
    } else {
      ref.kind = SlotRef::Kind::Word;
      ref.text = tok;
    }
    out.push_back(std::move(ref));
  }
  return out;
}

}  // namespace

Generated generate(const DomainSpec& spec) {
  if (spec.type_name.empty() || spec.properties.empty()) {
    throw spec_error("domain needs a type and at least one property");
  }
  if (spec.templates.empty()) throw spec_error("domain needs templates");

  std::map<std::string, const PropertySpec*> props;
  int max_pool = 0;
  for (const PropertySpec& p : spec.properties) {
    if (p.pool.empty()) throw spec_error("property '" + p.name + "' has an "
                                         "empty pool");
    if (!props.emplace(p.name, &p).second) {
      throw spec_error("duplicate property '" + p.name + "'");
    }
    max_pool = std::max(max_pool, static_cast<int>(p.pool.size()));
  }
  if (spec.row_count < max_pool) {
    throw spec_error("row_count must cover the largest value pool");
  }

  // Validate templates and property coverage.
  std::set<std::string> covered;
  for (const TemplateSpec& t : spec.templates) {
    if (t.conditions.empty() ||
        static_cast<int>(t.conditions.size()) > lang::kMaxConditions) {
      throw spec_error("template needs 1..3 conditions");
    }
    for (const ConditionSlot& c : t.conditions) {
      if (!c.property.empty()) {
        if (!props.count(c.property)) {
          throw spec_error("template references unknown property '" +
                           c.property + "'");
        }
        if (c.op != CompareOp::Eq && !props.at(c.property)->numeric) {
          throw spec_error("ordered comparison on categorical property '" +
                           c.property + "'");
        }
        covered.insert(c.property);
      } else {
        for (const PropertySpec& p : spec.properties) {
          if (c.op == CompareOp::Eq || p.numeric) covered.insert(p.name);
        }
      }
    }
    parse_pattern(t, spec);  // throws on malformed slots
  }
  for (const PropertySpec& p : spec.properties) {
    if (!covered.count(p.name)) {
      throw spec_error("property '" + p.name + "' is covered by no template");
    }
  }

  std::mt19937_64 rng(spec.seed);

  // Knowledge base rows. The first |pool| rows of each property cycle
  // through its pool so every (property, value) pair is realized; the
  // remainder is random.
  Generated out;
  exec::KnowledgeBase::TypeSchema ts;
  ts.name = spec.type_name;
  for (const auto& [name, p] : props) ts.properties.push_back({name, p->numeric});
  out.kb.types.push_back(ts);

  const int id_width =
      std::max(3, static_cast<int>(std::to_string(spec.row_count).size()));
  for (int r = 0; r < spec.row_count; ++r) {
    exec::KnowledgeBase::Entity e;
    std::string num = std::to_string(r + 1);
    e.id = "r" + std::string(id_width - num.size(), '0') + num;
    e.type = spec.type_name;
    for (const auto& [name, p] : props) {
      const auto& pool = p->pool;
      std::size_t pick = r < static_cast<int>(pool.size())
                             ? static_cast<std::size_t>(r)
                             : rng() % pool.size();
      e.values[name] = pool[pick];
    }
    out.kb.entities.push_back(std::move(e));
  }

  // Enumerate the slot product of every template.
  std::vector<Example> pool;
  for (const TemplateSpec& tmpl : spec.templates) {
    const std::vector<SlotRef> pattern = parse_pattern(tmpl, spec);
    const int n_conds = static_cast<int>(tmpl.conditions.size());

    // Choice lists: word pools first (pattern order), then per mentioned
    // condition a (property, value) list.
    struct CondChoice {
      std::string property;
      Value value;
    };
    std::vector<const std::vector<std::string>*> syn_slots;
    for (const SlotRef& ref : pattern) {
      if (ref.kind == SlotRef::Kind::Syn) {
        syn_slots.push_back(&spec.word_pools.at(ref.text));
      }
    }
    std::vector<std::vector<CondChoice>> cond_choices(n_conds);
    for (int ci = 0; ci < n_conds; ++ci) {
      const ConditionSlot& slot = tmpl.conditions[ci];
      if (!slot.mentioned) continue;
      std::vector<std::string> names;
      if (!slot.property.empty()) {
        names.push_back(slot.property);
      } else {
        for (const auto& [name, p] : props) {
          if (slot.op == CompareOp::Eq || p->numeric) names.push_back(name);
        }
        if (names.empty()) throw spec_error("no property fits a slot");
      }
      for (const std::string& name : names) {
        for (const Value& v : props.at(name)->pool) {
          cond_choices[ci].push_back({name, v});
        }
      }
    }

    // Iterate the product, rightmost index fastest.
    std::vector<std::size_t> radix;
    for (const auto* syn : syn_slots) radix.push_back(syn->size());
    for (int ci = 0; ci < n_conds; ++ci) {
      if (tmpl.conditions[ci].mentioned) {
        radix.push_back(cond_choices[ci].size());
      }
    }
    std::size_t product = 1;
    for (std::size_t r : radix) product *= r;

    for (std::size_t index = 0; index < product; ++index) {
      std::vector<std::size_t> digits(radix.size());
      std::size_t rem = index;
      for (std::size_t d = radix.size(); d-- > 0;) {
        digits[d] = rem % radix[d];
        rem /= radix[d];
      }

      Program gold;
      gold.target_type = spec.type_name;
      std::size_t digit_at = syn_slots.size();
      std::vector<int> mentioned_of(n_conds, -1);
      bool ok = true;
      for (int ci = 0; ci < n_conds; ++ci) {
        if (!tmpl.conditions[ci].mentioned) {
          gold.conditions.push_back({});  // filled from the witness below
          continue;
        }
        const CondChoice& choice = cond_choices[ci][digits[digit_at]];
        mentioned_of[ci] = static_cast<int>(digits[digit_at]);
        ++digit_at;
        gold.conditions.push_back(
            {choice.property, tmpl.conditions[ci].op, choice.value});
      }
      // Distinct properties across conditions keep programs sensible.
      {
        std::set<std::string> used;
        for (int ci = 0; ci < n_conds; ++ci) {
          if (mentioned_of[ci] >= 0 &&
              !used.insert(gold.conditions[ci].property).second) {
            ok = false;
          }
        }
      }
      if (!ok) continue;

      // Resolve unmentioned conditions from a random witness row that
      // satisfies the mentioned ones, so the full gold stays executable.
      Program mentioned_only;
      mentioned_only.target_type = spec.type_name;
      for (int ci = 0; ci < n_conds; ++ci) {
        if (mentioned_of[ci] >= 0) {
          mentioned_only.conditions.push_back(gold.conditions[ci]);
        }
      }
      std::vector<std::string> witness_ids;
      if (!mentioned_only.conditions.empty()) {
        try {
          witness_ids = exec::execute(mentioned_only, out.kb);
        } catch (const Error&) {
          continue;
        }
        if (witness_ids.empty()) continue;
      } else {
        for (const auto& e : out.kb.entities) witness_ids.push_back(e.id);
      }

      bool has_hidden = false;
      for (int ci = 0; ci < n_conds; ++ci) has_hidden |= mentioned_of[ci] < 0;
      if (has_hidden) {
        const std::string& wid = witness_ids[rng() % witness_ids.size()];
        const exec::KnowledgeBase::Entity* witness = nullptr;
        for (const auto& e : out.kb.entities) {
          if (e.id == wid) witness = &e;
        }
        std::set<std::string> used;
        for (int ci = 0; ci < n_conds; ++ci) {
          if (mentioned_of[ci] >= 0) used.insert(gold.conditions[ci].property);
        }
        for (int ci = 0; ci < n_conds && ok; ++ci) {
          if (mentioned_of[ci] >= 0) continue;
          std::vector<std::string> cands;
          const std::string& fixed = tmpl.conditions[ci].property;
          if (!fixed.empty()) {
            if (!used.count(fixed)) cands.push_back(fixed);
          } else {
            for (const auto& [name, p] : props) {
              if (!used.count(name)) cands.push_back(name);
            }
          }
          if (cands.empty()) {
            ok = false;
            break;
          }
          const std::string& pname = cands[rng() % cands.size()];
          used.insert(pname);
          gold.conditions[ci] = {pname, CompareOp::Eq,
                                 witness->values.at(pname)};
        }
        if (!ok || !exec::reward(gold, out.kb)) continue;
      }

      // Surface form.
      Example ex;
      std::size_t syn_at = 0;
      for (const SlotRef& ref : pattern) {
        switch (ref.kind) {
          case SlotRef::Kind::Word:
            ex.tokens.push_back(ref.text);
            break;
          case SlotRef::Kind::Syn: {
            const std::string& w = (*syn_slots[syn_at])[digits[syn_at]];
            ++syn_at;
            if (!w.empty()) {
              std::istringstream in(w);
              std::string piece;
              while (in >> piece) ex.tokens.push_back(piece);
            }
            break;
          }
          case SlotRef::Kind::Prop:
            ex.tokens.push_back(gold.conditions[ref.cond - 1].property);
            break;
          case SlotRef::Kind::Value:
            ex.tokens.push_back(gold.conditions[ref.cond - 1].value.token());
            break;
        }
      }
      if (ex.tokens.empty()) continue;
      ex.gold = std::move(gold);
      pool.push_back(std::move(ex));
    }
  }

  if (pool.empty()) throw spec_error("no executable examples generated");
  std::shuffle(pool.begin(), pool.end(), rng);
  if (spec.target_examples > 0) {
    if (spec.target_examples > static_cast<int>(pool.size())) {
      throw spec_error("target_examples " +
                       std::to_string(spec.target_examples) +
                       " exceeds the slot product (" +
                       std::to_string(pool.size()) + ")");
    }
    pool.resize(spec.target_examples);
  }
  const int ex_width =
      std::max(4, static_cast<int>(std::to_string(pool.size()).size()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::string num = std::to_string(i + 1);
    pool[i].id = "e" + std::string(ex_width - num.size(), '0') + num;
  }
  out.examples = std::move(pool);
  return out;
}

Corpus split(const std::vector<Example>& examples, double labeled_frac,
             std::uint64_t seed) {
  if (!(labeled_frac > 0.0 && labeled_frac < 1.0)) {
    throw Error(ErrorCode::ConfigError, "labeled_frac must be in (0, 1)");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_labeled = static_cast<std::size_t>(
      std::llround(labeled_frac * static_cast<double>(examples.size())));
  Corpus out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Example& ex = examples[order[i]];
    if (i < n_labeled) {
      out.labeled.push_back({ex.id, ex.tokens, ex.gold});
    } else {
      out.unlabeled.push_back({ex.id, ex.tokens, ex.gold});
    }
  }
  return out;
}

Corpus all_labeled(const std::vector<Example>& examples) {
  Corpus out;
  for (const Example& ex : examples) {
    out.labeled.push_back({ex.id, ex.tokens, ex.gold});
  }
  return out;
}

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

void write_corpus(const std::string& path, const Corpus& corpus,
                  const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (const auto& ex : corpus.labeled) {
    out << ex.id << "\tlabeled\t" << join_tokens(ex.tokens) << "\t"
        << lang::render(ex.gold) << "\n";
  }
  for (const auto& ex : corpus.unlabeled) {
    out << ex.id << "\tunlabeled\t" << join_tokens(ex.tokens) << "\t\n";
  }
}

void write_sidecar(const std::string& path, const Corpus& corpus,
                   const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (const auto& ex : corpus.unlabeled) {
    if (ex.hidden_gold) {
      out << ex.id << "\t" << lang::render(*ex.hidden_gold) << "\n";
    }
  }
}

Corpus read_corpus(const std::string& path, const std::string& sidecar_path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  Corpus out;
  std::string line;
  int lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 4) {
      throw Error(ErrorCode::IoError, "corpus line " + std::to_string(lineno) +
                                          ": expected 4 tab-separated fields");
    }
    if (!seen_ids.insert(fields[0]).second) {
      throw Error(ErrorCode::IoError,
                  "corpus: duplicate example id '" + fields[0] + "'");
    }
    std::vector<std::string> tokens;
    {
      std::istringstream ts(fields[2]);
      std::string tok;
      while (ts >> tok) tokens.push_back(tok);
    }
    if (tokens.empty()) {
      throw Error(ErrorCode::IoError, "corpus line " + std::to_string(lineno) +
                                          ": empty utterance");
    }
    if (fields[1] == "labeled") {
      out.labeled.push_back({fields[0], tokens, lang::parse(fields[3])});
    } else if (fields[1] == "unlabeled") {
      out.unlabeled.push_back({fields[0], tokens, std::nullopt});
    } else {
      throw Error(ErrorCode::IoError, "corpus line " + std::to_string(lineno) +
                                          ": bad split marker");
    }
  }

  if (!sidecar_path.empty()) {
    std::ifstream side(sidecar_path);
    if (side) {
      std::map<std::string, lang::Program> gold;
      while (std::getline(side, line)) {
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) continue;
        gold.emplace(line.substr(0, tab), lang::parse(line.substr(tab + 1)));
      }
      for (auto& ex : out.unlabeled) {
        auto it = gold.find(ex.id);
        if (it != gold.end()) ex.hidden_gold = it->second;
      }
    }
  }
  return out;
}

DomainSpec default_restaurant_domain(std::uint64_t seed, int target_examples,
                                     int row_count) {
  DomainSpec spec;
  spec.type_name = "restaurant";
  spec.seed = seed;
  spec.row_count = row_count;
  spec.target_examples = target_examples;

  auto nums = [](std::initializer_list<double> vs) {
    std::vector<lang::Value> out;
    for (double v : vs) out.push_back(lang::Value::number(v));
    return out;
  };
  auto syms = [](std::initializer_list<const char*> vs) {
    std::vector<lang::Value> out;
    for (const char* v : vs) out.push_back(lang::Value::symbol(v));
    return out;
  };

  spec.properties = {
      {"cuisine", false,
       syms({"thai", "italian", "mexican", "french", "japanese", "indian",
             "greek", "turkish"})},
      {"star_rating", true, nums({1, 2, 3, 4, 5})},
      {"price", true, nums({1, 2, 3, 4})},
      {"city", false,
       syms({"northside", "southside", "eastside", "westside", "midtown"})},
  };

  spec.word_pools = {
      {"list", {"list", "show", "find", "get"}},
      {"please", {"", "please"}},
      {"places", {"restaurants", "places", "spots"}},
      {"want", {"i want", "give me", "looking for"}},
  };

  using CO = lang::CompareOp;
  auto pat = [](std::initializer_list<const char*> toks) {
    return std::vector<std::string>(toks.begin(), toks.end());
  };

  spec.templates = {
      // Single-condition, fully mentioned.
      {pat({"<syn:list>", "all", "<value1>", "<syn:places>"}),
       {{"cuisine", CO::Eq, true}}},
      {pat({"<syn:want>", "<value1>", "food"}), {{"cuisine", CO::Eq, true}}},
      {pat({"<syn:list>", "<value1>", "star", "<syn:places>", "<syn:please>"}),
       {{"star_rating", CO::Eq, true}}},
      {pat({"<syn:list>", "<syn:places>", "rated", "above", "<value1>"}),
       {{"star_rating", CO::Gt, true}}},
      {pat({"<syn:list>", "<syn:places>", "rated", "under", "<value1>"}),
       {{"star_rating", CO::Lt, true}}},
      {pat({"<syn:list>", "<syn:places>", "cheaper", "than", "<value1>"}),
       {{"price", CO::Lt, true}}},
      {pat({"<syn:want>", "price", "<value1>", "<syn:places>"}),
       {{"price", CO::Eq, true}}},
      {pat({"<syn:list>", "<syn:places>", "in", "<value1>", "<syn:please>"}),
       {{"city", CO::Eq, true}}},
      // Two conditions, both mentioned.
      {pat({"<syn:list>", "<value1>", "<syn:places>", "in", "<value2>"}),
       {{"cuisine", CO::Eq, true}, {"city", CO::Eq, true}}},
      {pat({"<syn:want>", "<value1>", "star", "<value2>", "<syn:places>"}),
       {{"star_rating", CO::Eq, true}, {"cuisine", CO::Eq, true}}},
      {pat({"<syn:list>", "<value2>", "<syn:places>", "with", "price",
            "<value1>"}),
       {{"price", CO::Eq, true}, {"cuisine", CO::Eq, true}}},
      {pat({"<syn:list>", "<value1>", "spots", "rated", "over", "<value2>"}),
       {{"city", CO::Eq, true}, {"star_rating", CO::Gt, true}}},
      // Hidden second condition: the ambiguity knob.
      {pat({"<syn:list>", "good", "<value1>", "<syn:places>"}),
       {{"cuisine", CO::Eq, true}, {"", CO::Eq, false}}},
      {pat({"<syn:want>", "a", "nice", "<value1>", "spot"}),
       {{"cuisine", CO::Eq, true}, {"", CO::Eq, false}}},
      {pat({"<syn:list>", "popular", "<syn:places>", "in", "<value1>"}),
       {{"city", CO::Eq, true}, {"", CO::Eq, false}}},
  };
  return spec;
}

}  // namespace xpr::datagen
