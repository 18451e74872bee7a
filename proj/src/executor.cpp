#include "xpr/executor.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "xpr/error.hpp"

namespace xpr::exec {

namespace {

using lang::CompareOp;
using lang::Value;

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

const KnowledgeBase::PropertySchema* KnowledgeBase::TypeSchema::find(
    const std::string& prop) const {
  auto it = std::lower_bound(
      properties.begin(), properties.end(), prop,
      [](const PropertySchema& s, const std::string& n) { return s.name < n; });
  if (it == properties.end() || it->name != prop) return nullptr;
  return &*it;
}

const KnowledgeBase::TypeSchema* KnowledgeBase::find_type(
    const std::string& name) const {
  auto it = std::lower_bound(
      types.begin(), types.end(), name,
      [](const TypeSchema& t, const std::string& n) { return t.name < n; });
  if (it == types.end() || it->name != name) return nullptr;
  return &*it;
}

KnowledgeBase KnowledgeBase::load(std::istream& in) {
  std::map<std::string, std::map<std::string, bool>> schema;  // type -> prop
  struct RawEntity {
    std::map<std::string, Value> values;
    std::set<std::string> candidate_types;
    bool first = true;
  };
  std::map<std::string, RawEntity> raw;

  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> Error {
    return Error(ErrorCode::IoError,
                 "kb line " + std::to_string(lineno) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> f = split_ws(line);
    if (f.empty() || f[0][0] == '#') continue;
    if (f[0] == "!type") {
      if (f.size() != 2) throw fail("!type expects one name");
      schema[f[1]];
    } else if (f[0] == "!prop") {
      if (f.size() != 4 || (f[3] != "numeric" && f[3] != "categorical")) {
        throw fail("!prop expects: !prop <type> <prop> numeric|categorical");
      }
      auto ty = schema.find(f[1]);
      if (ty == schema.end()) throw fail("undeclared type '" + f[1] + "'");
      if (!ty->second.emplace(f[2], f[3] == "numeric").second) {
        throw fail("property '" + f[2] + "' declared twice");
      }
    } else {
      if (f.size() != 3) throw fail("data line expects: <id> <prop> <value>");
      const std::string& id = f[0];
      const std::string& prop = f[1];
      // Which types declare this property?
      std::set<std::string> owners;
      bool numeric = false;
      for (const auto& [tname, props] : schema) {
        auto it = props.find(prop);
        if (it != props.end()) {
          owners.insert(tname);
          numeric = it->second;
        }
      }
      if (owners.empty()) throw fail("undeclared property '" + prop + "'");
      Value v = Value::from_token(f[2]);
      if (numeric && !v.is_number()) {
        throw fail("numeric property '" + prop + "' with value '" + f[2] +
                   "'");
      }
      if (!numeric) v = Value::symbol(f[2]);
      RawEntity& e = raw[id];
      if (!e.values.emplace(prop, v).second) {
        throw fail("duplicate value for (" + id + ", " + prop + ")");
      }
      if (e.first) {
        e.candidate_types = owners;
        e.first = false;
      } else {
        std::set<std::string> inter;
        std::set_intersection(e.candidate_types.begin(),
                              e.candidate_types.end(), owners.begin(),
                              owners.end(),
                              std::inserter(inter, inter.begin()));
        e.candidate_types = std::move(inter);
      }
      if (e.candidate_types.empty()) {
        throw fail("entity '" + id + "' uses properties of no single type");
      }
    }
  }

  KnowledgeBase kb;
  for (const auto& [tname, props] : schema) {
    TypeSchema ts;
    ts.name = tname;
    for (const auto& [pname, numeric] : props) {
      ts.properties.push_back({pname, numeric});
    }
    kb.types.push_back(std::move(ts));
  }
  for (auto& [id, e] : raw) {
    if (e.candidate_types.size() != 1) {
      throw Error(ErrorCode::IoError,
                  "kb: entity '" + id + "' has an ambiguous type");
    }
    Entity out;
    out.id = id;
    out.type = *e.candidate_types.begin();
    out.values = std::move(e.values);
    kb.entities.push_back(std::move(out));
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return load(in);
}

void KnowledgeBase::save(std::ostream& out,
                         const std::string& header_comment) const {
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (const TypeSchema& t : types) out << "!type " << t.name << "\n";
  for (const TypeSchema& t : types) {
    for (const PropertySchema& p : t.properties) {
      out << "!prop " << t.name << " " << p.name << " "
          << (p.numeric ? "numeric" : "categorical") << "\n";
    }
  }
  for (const Entity& e : entities) {
    for (const auto& [prop, v] : e.values) {
      out << e.id << " " << prop << " " << v.token() << "\n";
    }
  }
}

void KnowledgeBase::save_file(const std::string& path,
                              const std::string& header_comment) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  save(out, header_comment);
}

Denotation execute(const lang::Program& p, const KnowledgeBase& kb) {
  const KnowledgeBase::TypeSchema* ty = kb.find_type(p.target_type);
  if (!ty) {
    throw Error(ErrorCode::UnknownName,
                "unknown entity type '" + p.target_type + "'");
  }

  // Validate every condition before touching any row.
  for (const lang::Condition& c : p.conditions) {
    const auto* ps = ty->find(c.property);
    if (!ps) {
      throw Error(ErrorCode::UnknownName,
                  "unknown property '" + c.property + "' of type '" +
                      p.target_type + "'");
    }
    if (c.op != CompareOp::Eq) {
      if (!ps->numeric || !c.value.is_number()) {
        throw Error(ErrorCode::TypeError,
                    "ordered comparison needs a numeric property and a "
                    "numeric literal: '" +
                        c.property + " " + compare_op_token(c.op) + " " +
                        c.value.token() + "'");
      }
    } else if (ps->numeric != c.value.is_number()) {
      throw Error(ErrorCode::TypeError,
                  "literal kind does not match property '" + c.property +
                      "': '" + c.value.token() + "'");
    }
    if (!c.value.is_number()) {
      // Symbol literals must name a value observed for this property.
      bool known = false;
      for (const auto& e : kb.entities) {
        if (e.type != p.target_type) continue;
        auto it = e.values.find(c.property);
        if (it != e.values.end() && it->second.sym == c.value.sym) {
          known = true;
          break;
        }
      }
      if (!known) {
        throw Error(ErrorCode::UnknownName,
                    "value token '" + c.value.sym + "' absent from '" +
                        c.property + "'");
      }
    }
  }

  Denotation out;
  for (const auto& e : kb.entities) {
    if (e.type != p.target_type) continue;
    bool ok = true;
    for (const lang::Condition& c : p.conditions) {
      auto it = e.values.find(c.property);
      if (it == e.values.end()) {
        ok = false;  // missing cell never satisfies a condition
        break;
      }
      const Value& cell = it->second;
      bool sat = false;
      switch (c.op) {
        case CompareOp::Eq:
          sat = cell == c.value;
          break;
        case CompareOp::Gt:
          sat = cell.num > c.value.num;
          break;
        case CompareOp::Lt:
          sat = cell.num < c.value.num;
          break;
      }
      if (!sat) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(e.id);
  }
  return out;
}

bool reward(const lang::Program& p, const KnowledgeBase& kb) {
  try {
    return !execute(p, kb).empty();
  } catch (const Error&) {
    return false;
  }
}

bool denotation_match(const lang::Program& p, const lang::Program& gold,
                      const KnowledgeBase& kb) {
  Denotation want = execute(gold, kb);
  try {
    return execute(p, kb) == want;
  } catch (const Error&) {
    return false;
  }
}

lang::Grammar grammar_from_kb(const KnowledgeBase& kb, int max_conditions) {
  lang::GrammarSpec spec;
  spec.max_conditions = max_conditions;
  std::map<std::string, lang::GrammarSpec::Prop> props;
  for (const auto& t : kb.types) {
    lang::GrammarSpec::Type ty;
    ty.name = t.name;
    for (const auto& p : t.properties) {
      ty.props.push_back(p.name);
      auto [it, inserted] = props.emplace(p.name, lang::GrammarSpec::Prop{});
      if (inserted) {
        it->second.name = p.name;
        it->second.numeric = p.numeric;
      }
    }
    spec.types.push_back(std::move(ty));
  }
  for (const auto& e : kb.entities) {
    for (const auto& [pname, v] : e.values) {
      auto it = props.find(pname);
      if (it != props.end()) it->second.pool.push_back(v);
    }
  }
  for (auto& [name, p] : props) spec.props.push_back(p);
  return lang::Grammar::build(spec);
}

}  // namespace xpr::exec
