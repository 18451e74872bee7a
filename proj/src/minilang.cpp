#include "xpr/minilang.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace xpr::lang {

namespace {

const std::set<std::string_view> kKeywords = {"select", "where", "and",
                                              "=",      ">",     "<"};

bool is_keyword(std::string_view t) { return kKeywords.count(t) > 0; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

const char* compare_op_token(CompareOp op) {
  switch (op) {
    case CompareOp::Eq:
      return "=";
    case CompareOp::Gt:
      return ">";
    default:
      return "<";
  }
}

Value Value::number(double v) {
  Value out;
  out.kind = Kind::Number;
  out.num = v;
  return out;
}

Value Value::symbol(std::string s) {
  Value out;
  out.kind = Kind::Symbol;
  out.sym = std::move(s);
  return out;
}

Value Value::from_token(std::string_view token) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc() && ptr == last && std::isfinite(v)) {
    return number(v);
  }
  return symbol(std::string(token));
}

std::string Value::token() const {
  if (kind == Kind::Symbol) return sym;
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), num);
  (void)ec;
  return std::string(buf, ptr);
}

bool Value::operator==(const Value& o) const {
  if (kind != o.kind) return false;
  return kind == Kind::Number ? num == o.num : sym == o.sym;
}

bool Value::operator<(const Value& o) const {
  if (kind != o.kind) return kind == Kind::Number;
  return kind == Kind::Number ? num < o.num : sym < o.sym;
}

std::string render(const Program& p) {
  std::string out = "select " + p.target_type + " where";
  bool first = true;
  for (const Condition& c : p.conditions) {
    if (!first) out += " and";
    first = false;
    out += " " + c.property + " " + compare_op_token(c.op) + " " +
           c.value.token();
  }
  return out;
}

Program parse(std::string_view text) {
  const std::vector<std::string> toks = tokenize(text);
  const int n = static_cast<int>(toks.size());
  auto fail = [&](int index, const std::string& what) -> Error {
    return Error(ErrorCode::SyntaxError,
                 what + " (token " + std::to_string(index) + ")", index);
  };
  auto ident_at = [&](int i, const char* what) -> const std::string& {
    if (i >= n) throw fail(n, std::string("missing ") + what);
    if (is_keyword(toks[i])) throw fail(i, std::string("expected ") + what);
    return toks[i];
  };

  if (n == 0 || toks[0] != "select") throw fail(0, "expected 'select'");
  Program p;
  p.target_type = ident_at(1, "entity type");
  if (2 >= n || toks[2] != "where") throw fail(std::min(2, n), "expected 'where'");

  int i = 3;
  while (true) {
    Condition c;
    c.property = ident_at(i, "property name");
    if (i + 1 >= n) throw fail(n, "missing operator");
    if (toks[i + 1] == "=") {
      c.op = CompareOp::Eq;
    } else if (toks[i + 1] == ">") {
      c.op = CompareOp::Gt;
    } else if (toks[i + 1] == "<") {
      c.op = CompareOp::Lt;
    } else {
      throw fail(i + 1, "expected one of = > <");
    }
    c.value = Value::from_token(ident_at(i + 2, "literal value"));
    p.conditions.push_back(std::move(c));
    i += 3;
    if (i == n) break;
    if (toks[i] != "and") throw fail(i, "expected 'and' or end of query");
    if (static_cast<int>(p.conditions.size()) >= kMaxConditions) {
      throw fail(i, "too many conjuncts");
    }
    ++i;
  }
  return p;
}

Grammar Grammar::build(const GrammarSpec& spec) {
  if (spec.max_conditions < 1 || spec.max_conditions > kMaxConditions) {
    throw Error(ErrorCode::SpecError, "max_conditions out of range");
  }
  Grammar g;
  g.max_conditions_ = spec.max_conditions;

  // Global literal table: dedup, numbers ascending then symbols.
  std::set<Value> lit_set;
  for (const auto& pr : spec.props) {
    for (const Value& v : pr.pool) lit_set.insert(v);
  }
  g.literals_.assign(lit_set.begin(), lit_set.end());
  auto literal_index = [&](const Value& v) {
    auto it = std::lower_bound(g.literals_.begin(), g.literals_.end(), v);
    return static_cast<int>(it - g.literals_.begin());
  };

  // Properties sorted by name; drop the ones with empty pools (they can
  // never complete a condition, and the value mask must stay non-empty).
  std::map<std::string, PropInfo> prop_map;
  for (const auto& pr : spec.props) {
    auto [it, inserted] = prop_map.emplace(pr.name, PropInfo{});
    PropInfo& info = it->second;
    if (inserted) {
      info.name = pr.name;
      info.numeric = pr.numeric;
    } else if (info.numeric != pr.numeric) {
      throw Error(ErrorCode::SpecError,
                  "property '" + pr.name + "' declared with two kinds");
    }
    for (const Value& v : pr.pool) info.pool.push_back(literal_index(v));
  }
  std::map<std::string, int> prop_idx;
  for (auto& [name, info] : prop_map) {
    std::sort(info.pool.begin(), info.pool.end());
    info.pool.erase(std::unique(info.pool.begin(), info.pool.end()),
                    info.pool.end());
    if (info.pool.empty()) continue;
    prop_idx[name] = static_cast<int>(g.props_.size());
    g.props_.push_back(info);
  }

  // Types sorted by name; keep only types with at least one usable prop.
  std::map<std::string, std::vector<int>> type_map;
  for (const auto& ty : spec.types) {
    std::vector<int> usable;
    for (const std::string& pn : ty.props) {
      auto it = prop_idx.find(pn);
      if (it != prop_idx.end()) usable.push_back(it->second);
    }
    std::sort(usable.begin(), usable.end());
    usable.erase(std::unique(usable.begin(), usable.end()), usable.end());
    if (!usable.empty()) type_map[ty.name] = std::move(usable);
  }
  for (auto& [name, usable] : type_map) {
    g.types_.push_back(name);
    g.type_props_.push_back(std::move(usable));
  }
  if (g.types_.empty()) {
    throw Error(ErrorCode::SpecError, "grammar has no decodable programs");
  }

  g.first_prop_ = static_cast<int>(g.types_.size());
  g.first_op_ = g.first_prop_ + static_cast<int>(g.props_.size());
  g.first_lit_ = g.first_op_ + 3;
  g.stop_id_ = g.first_lit_ + static_cast<int>(g.literals_.size());
  g.and_id_ = g.stop_id_ + 1;
  return g;
}

std::string Grammar::action_text(ActionId a) const {
  if (is_type(a)) return types_[a];
  if (is_prop(a)) return props_[a - first_prop_].name;
  if (is_op(a)) return compare_op_token(static_cast<CompareOp>(a - first_op_));
  if (is_literal(a)) return literals_[a - first_lit_].token();
  if (a == stop_id_) return "<stop>";
  if (a == and_id_) return "<and>";
  return "<invalid>";
}

void Grammar::legal_actions(const Cursor& c, std::vector<ActionId>& out) const {
  out.clear();
  switch (c.stage) {
    case Cursor::Stage::Type:
      for (int i = 0; i < first_prop_; ++i) out.push_back(i);
      break;
    case Cursor::Stage::Prop:
      for (int pi : type_props_[c.type_idx]) out.push_back(first_prop_ + pi);
      break;
    case Cursor::Stage::Op:
      for (int i = 0; i < 3; ++i) out.push_back(first_op_ + i);
      break;
    case Cursor::Stage::Val:
      for (int li : props_[c.prop_idx].pool) out.push_back(first_lit_ + li);
      break;
    case Cursor::Stage::Link:
      out.push_back(stop_id_);
      if (c.n_conditions < max_conditions_) out.push_back(and_id_);
      break;
    case Cursor::Stage::Done:
      break;
  }
}

Grammar::Cursor Grammar::advance(const Cursor& c, ActionId a) const {
  auto illegal = [&](const char* what) -> Error {
    return Error(ErrorCode::IllegalAction,
                 std::string(what) + " at action '" + action_text(a) + "'");
  };
  Cursor next = c;
  switch (c.stage) {
    case Cursor::Stage::Type:
      if (!is_type(a)) throw illegal("expected an entity type");
      next.type_idx = static_cast<std::int16_t>(a);
      next.stage = Cursor::Stage::Prop;
      return next;
    case Cursor::Stage::Prop: {
      if (!is_prop(a)) throw illegal("expected a property");
      const int pi = a - first_prop_;
      const auto& usable = type_props_[c.type_idx];
      if (!std::binary_search(usable.begin(), usable.end(), pi)) {
        throw illegal("property not available for this type");
      }
      next.prop_idx = static_cast<std::int16_t>(pi);
      next.stage = Cursor::Stage::Op;
      return next;
    }
    case Cursor::Stage::Op:
      if (!is_op(a)) throw illegal("expected an operator");
      next.stage = Cursor::Stage::Val;
      return next;
    case Cursor::Stage::Val: {
      if (!is_literal(a)) throw illegal("expected a literal");
      const int li = a - first_lit_;
      const auto& pool = props_[c.prop_idx].pool;
      if (!std::binary_search(pool.begin(), pool.end(), li)) {
        throw illegal("literal not in the property's pool");
      }
      next.n_conditions = static_cast<std::int16_t>(c.n_conditions + 1);
      next.stage = Cursor::Stage::Link;
      return next;
    }
    case Cursor::Stage::Link:
      if (a == stop_id_) {
        next.stage = Cursor::Stage::Done;
        return next;
      }
      if (a == and_id_ && c.n_conditions < max_conditions_) {
        next.stage = Cursor::Stage::Prop;
        return next;
      }
      throw illegal("expected stop or and");
    case Cursor::Stage::Done:
      throw illegal("sequence already complete");
  }
  throw illegal("invalid state");
}

std::vector<ActionId> actions(const Program& p, const Grammar& g) {
  auto unknown = [](const std::string& what) -> Error {
    return Error(ErrorCode::UnknownSymbol, what);
  };
  if (p.conditions.empty() ||
      static_cast<int>(p.conditions.size()) > g.max_conditions_) {
    throw unknown("program must have 1.." +
                  std::to_string(g.max_conditions_) + " conditions");
  }

  std::vector<ActionId> out;
  auto type_it = std::lower_bound(g.types_.begin(), g.types_.end(),
                                  p.target_type);
  if (type_it == g.types_.end() || *type_it != p.target_type) {
    throw unknown("unknown entity type '" + p.target_type + "'");
  }
  const int ti = static_cast<int>(type_it - g.types_.begin());
  out.push_back(ti);

  for (std::size_t k = 0; k < p.conditions.size(); ++k) {
    const Condition& c = p.conditions[k];
    if (k > 0) out.push_back(g.and_id_);
    int pi = -1;
    for (int cand : g.type_props_[ti]) {
      if (g.props_[cand].name == c.property) {
        pi = cand;
        break;
      }
    }
    if (pi < 0) {
      throw unknown("property '" + c.property + "' not available for type '" +
                    p.target_type + "'");
    }
    out.push_back(g.first_prop_ + pi);
    out.push_back(g.first_op_ + static_cast<int>(c.op));
    auto lit_it = std::lower_bound(g.literals_.begin(), g.literals_.end(),
                                   c.value);
    const int li = static_cast<int>(lit_it - g.literals_.begin());
    bool in_pool = lit_it != g.literals_.end() && *lit_it == c.value &&
                   std::binary_search(g.props_[pi].pool.begin(),
                                      g.props_[pi].pool.end(), li);
    if (!in_pool) {
      throw unknown("literal '" + c.value.token() + "' not in the pool of '" +
                    c.property + "'");
    }
    out.push_back(g.first_lit_ + li);
  }
  out.push_back(g.stop_id_);
  return out;
}

Program decode(std::span<const ActionId> acts, const Grammar& g) {
  Program p;
  Grammar::Cursor c = g.start();
  Condition cond;
  for (ActionId a : acts) {
    if (g.is_complete(c)) {
      throw Error(ErrorCode::IllegalAction, "actions after completion");
    }
    const auto stage = c.stage;
    c = g.advance(c, a);  // validates legality
    switch (stage) {
      case Grammar::Cursor::Stage::Type:
        p.target_type = g.types_[a];
        break;
      case Grammar::Cursor::Stage::Prop:
        cond.property = g.props_[a - g.first_prop_].name;
        break;
      case Grammar::Cursor::Stage::Op:
        cond.op = static_cast<CompareOp>(a - g.first_op_);
        break;
      case Grammar::Cursor::Stage::Val:
        cond.value = g.literals_[a - g.first_lit_];
        p.conditions.push_back(cond);
        break;
      default:
        break;
    }
  }
  if (!g.is_complete(c)) {
    throw Error(ErrorCode::IllegalAction, "incomplete action sequence");
  }
  return p;
}

std::vector<Program> enumerate_programs(const Grammar& g, std::size_t cap) {
  std::vector<Program> out;
  std::vector<ActionId> seq;
  std::vector<ActionId> legal;

  struct Frame {
    Grammar::Cursor cursor;
    std::vector<ActionId> legal;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({g.start(), {}, 0});
  g.legal_actions(stack.back().cursor, stack.back().legal);

  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next >= top.legal.size()) {
      stack.pop_back();
      if (!seq.empty()) seq.pop_back();
      continue;
    }
    const ActionId a = top.legal[top.next++];
    Grammar::Cursor next = g.advance(top.cursor, a);
    seq.push_back(a);
    if (g.is_complete(next)) {
      if (out.size() >= cap) {
        throw Error(ErrorCode::CapacityExceeded,
                    "program space exceeds " + std::to_string(cap));
      }
      out.push_back(decode(seq, g));
      seq.pop_back();
    } else {
      Frame f;
      f.cursor = next;
      g.legal_actions(next, f.legal);
      stack.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace xpr::lang
