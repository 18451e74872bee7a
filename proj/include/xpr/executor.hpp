#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "xpr/minilang.hpp"

// In-memory knowledge base and program execution. Executing a program
// filters the entities of its target type by the conjunction of all
// conditions. The binary reward is 1 iff execution succeeds and the
// result set is non-empty; every execution error maps to reward 0.
//
// KB file format (UTF-8, line oriented, fields separated by spaces):
//   # comment                      -- ignored, as are blank lines
//   !type <name>                   -- declares an entity type
//   !prop <type> <prop> numeric|categorical
//   <entity-id> <prop> <value>     -- one cell of an entity's row
// Header lines must precede the data lines that use them. An entity's
// type is inferred as the unique type declaring all of its properties.
// Values of numeric properties must parse as numbers; values of
// categorical properties are kept as tokens.

namespace xpr::exec {

struct KnowledgeBase {
  struct PropertySchema {
    std::string name;
    bool numeric = true;
  };
  struct TypeSchema {
    std::string name;
    std::vector<PropertySchema> properties;  // sorted by name

    const PropertySchema* find(const std::string& prop) const;
  };
  struct Entity {
    std::string id;
    std::string type;
    std::map<std::string, lang::Value> values;
  };

  std::vector<TypeSchema> types;  // sorted by name
  std::vector<Entity> entities;   // sorted by id

  const TypeSchema* find_type(const std::string& name) const;

  static KnowledgeBase load(std::istream& in);
  static KnowledgeBase load_file(const std::string& path);
  void save(std::ostream& out, const std::string& header_comment = "") const;
  void save_file(const std::string& path,
                 const std::string& header_comment = "") const;
};

// Entity ids, sorted; a subset of the target type's entities.
using Denotation = std::vector<std::string>;

// Throws Error{UnknownName} for unknown type/property/symbol tokens and
// Error{TypeError} for operator or literal kind mismatches.
Denotation execute(const lang::Program& p, const KnowledgeBase& kb);

// 1 iff execute() succeeds with a non-empty denotation; never throws.
bool reward(const lang::Program& p, const KnowledgeBase& kb);

// True iff p executes successfully and denotes the same set as gold.
bool denotation_match(const lang::Program& p, const lang::Program& gold,
                      const KnowledgeBase& kb);

// The decoding grammar induced by a KB: one property pool per declared
// property, holding the values observed in the data.
lang::Grammar grammar_from_kb(const KnowledgeBase& kb,
                              int max_conditions = lang::kMaxConditions);

}  // namespace xpr::exec
