#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xpr/error.hpp"

// A miniature select-where query language:
//
//   select <type> where <prop> <op> <value> [and <prop> <op> <value>]...
//
// with at most kMaxConditions conjuncts. Programs have two faces: a
// canonical one-line text form (render/parse) and a grammar action
// sequence (actions/decode) used by the autoregressive scorer. The text
// parser is purely syntactic and accepts any identifiers; name and type
// validity is the executor's concern. The action grammar is stricter:
// it masks properties per entity type and literals per property, so the
// decodable program space is finite and enumerable.

namespace xpr::lang {

enum class CompareOp : std::uint8_t { Eq, Gt, Lt };

const char* compare_op_token(CompareOp op);

// A literal: either a number or a bare categorical token. The kind is
// lexical: anything that fully parses as a finite double is a Number.
struct Value {
  enum class Kind : std::uint8_t { Number, Symbol };

  Kind kind = Kind::Symbol;
  double num = 0.0;
  std::string sym;

  static Value number(double v);
  static Value symbol(std::string s);
  static Value from_token(std::string_view token);

  bool is_number() const { return kind == Kind::Number; }
  // Canonical text: shortest round-tripping decimal for numbers.
  std::string token() const;

  bool operator==(const Value& o) const;
  // Numbers sort before symbols; numbers by value, symbols by text.
  bool operator<(const Value& o) const;
};

struct Condition {
  std::string property;
  CompareOp op = CompareOp::Eq;
  Value value;

  bool operator==(const Condition& o) const = default;
};

inline constexpr int kMaxConditions = 3;

struct Program {
  std::string target_type;
  std::vector<Condition> conditions;  // 1..kMaxConditions entries

  bool operator==(const Program& o) const = default;
};

std::string render(const Program& p);
// Throws Error{SyntaxError} carrying the 0-based index of the first
// offending token (== token count when the line ends too early).
Program parse(std::string_view text);

using ActionId = int;

// Declarative description used to construct a Grammar.
struct GrammarSpec {
  struct Prop {
    std::string name;
    bool numeric = true;
    std::vector<Value> pool;  // legal literals for this property
  };
  struct Type {
    std::string name;
    std::vector<std::string> props;  // property names
  };
  std::vector<Type> types;
  std::vector<Prop> props;
  int max_conditions = kMaxConditions;
};

class Grammar {
 public:
  static Grammar build(const GrammarSpec& spec);

  // Global action ids, in this fixed order: entity types, property
  // names, operators (=, >, <), literals (numbers ascending then
  // symbols), stop, and.
  int action_count() const { return and_id_ + 1; }
  ActionId stop_action() const { return stop_id_; }
  ActionId and_action() const { return and_id_; }
  std::string action_text(ActionId a) const;

  int max_conditions() const { return max_conditions_; }
  // Longest possible action sequence (type + 4 per extra conjunct + ...).
  int max_sequence_length() const { return 4 * max_conditions_ + 1; }

  // Decoder state machine. A cursor is cheap to copy; the partial
  // program is recovered from the action sequence via decode().
  struct Cursor {
    enum class Stage : std::uint8_t { Type, Prop, Op, Val, Link, Done };
    Stage stage = Stage::Type;
    std::int16_t type_idx = -1;
    std::int16_t prop_idx = -1;
    std::int16_t n_conditions = 0;
  };

  Cursor start() const { return Cursor{}; }
  bool is_complete(const Cursor& c) const {
    return c.stage == Cursor::Stage::Done;
  }
  // Ascending action ids; never empty for a non-complete cursor.
  void legal_actions(const Cursor& c, std::vector<ActionId>& out) const;
  // Throws Error{IllegalAction} if the action is not legal at c.
  Cursor advance(const Cursor& c, ActionId a) const;

  std::size_t type_count() const { return types_.size(); }
  const std::string& type_name(std::size_t i) const { return types_[i]; }

 private:
  friend std::vector<ActionId> actions(const Program&, const Grammar&);
  friend Program decode(std::span<const ActionId>, const Grammar&);

  struct PropInfo {
    std::string name;
    bool numeric = true;
    std::vector<int> pool;  // indices into literals_, ascending
  };

  bool is_type(ActionId a) const { return a >= 0 && a < first_prop_; }
  bool is_prop(ActionId a) const { return a >= first_prop_ && a < first_op_; }
  bool is_op(ActionId a) const { return a >= first_op_ && a < first_lit_; }
  bool is_literal(ActionId a) const {
    return a >= first_lit_ && a < stop_id_;
  }

  std::vector<std::string> types_;
  std::vector<std::vector<int>> type_props_;  // usable prop indices per type
  std::vector<PropInfo> props_;
  std::vector<Value> literals_;
  int max_conditions_ = kMaxConditions;
  int first_prop_ = 0;
  int first_op_ = 0;
  int first_lit_ = 0;
  int stop_id_ = 0;
  int and_id_ = 0;
};

// Unique action sequence of a program. Throws Error{UnknownSymbol} when
// the program references a type, property, or literal the grammar does
// not allow at the corresponding state.
std::vector<ActionId> actions(const Program& p, const Grammar& g);

// Inverse of actions(); throws Error{IllegalAction} on malformed input.
Program decode(std::span<const ActionId> acts, const Grammar& g);

// All complete programs, ordered lexicographically by action ids.
// Throws Error{CapacityExceeded} when the space is larger than cap.
std::vector<Program> enumerate_programs(const Grammar& g,
                                        std::size_t cap = 1000000);

}  // namespace xpr::lang
