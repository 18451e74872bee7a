#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xpr/executor.hpp"
#include "xpr/minilang.hpp"

// Synthetic corpus generation: a knowledge base plus (utterance, gold
// program) pairs produced by slot-filling templates. Every generated
// gold program executes to a non-empty denotation. Ambiguity is
// controlled per template: a condition slot marked unmentioned is part
// of the gold program but absent from the utterance surface, which
// manufactures spurious executable candidates.
//
// Corpus file format (UTF-8): '#' comment lines, then one example per
// line with tab-separated fields
//   id <TAB> labeled|unlabeled <TAB> utterance tokens (space-joined)
//      <TAB> program text (empty for unlabeled)
// The sidecar file keeps the hidden gold programs of unlabeled examples
// for coverage diagnostics: id <TAB> program text.

namespace xpr::datagen {

struct ConditionSlot {
  std::string property;  // empty: iterate all kind-compatible properties
  lang::CompareOp op = lang::CompareOp::Eq;
  bool mentioned = true;  // unmentioned conditions are the ambiguity knob
};

struct TemplateSpec {
  // Pattern tokens. "<valueN>" and "<propN>" (1-based) are filled from
  // condition slot N; "<syn:name>" draws from DomainSpec::word_pools
  // (empty pool words are dropped from the surface).
  std::vector<std::string> pattern;
  std::vector<ConditionSlot> conditions;  // 1..kMaxConditions
};

struct PropertySpec {
  std::string name;
  bool numeric = true;
  std::vector<lang::Value> pool;
};

struct DomainSpec {
  std::string type_name;
  std::vector<PropertySpec> properties;
  int row_count = 0;
  std::vector<TemplateSpec> templates;
  std::map<std::string, std::vector<std::string>> word_pools;
  std::uint64_t seed = 0;
  // 0 keeps the full slot product; otherwise a seeded subsample.
  int target_examples = 0;
};

struct Example {
  std::string id;
  std::vector<std::string> tokens;
  lang::Program gold;
};

struct Generated {
  exec::KnowledgeBase kb;
  std::vector<Example> examples;
};

// Throws Error{SpecError} on inconsistent specs (unknown property or
// word pool, uncovered property, target larger than the product...).
Generated generate(const DomainSpec& spec);

struct LabeledExample {
  std::string id;
  std::vector<std::string> tokens;
  lang::Program gold;
};

struct UnlabeledExample {
  std::string id;
  std::vector<std::string> tokens;
  // Kept for coverage diagnostics only; never used by training losses.
  std::optional<lang::Program> hidden_gold;
};

struct Corpus {
  std::vector<LabeledExample> labeled;
  std::vector<UnlabeledExample> unlabeled;
};

// Uniform split by seed: round(labeled_frac * n) labeled examples, the
// rest unlabeled with their gold moved to the hidden sidecar.
Corpus split(const std::vector<Example>& examples, double labeled_frac,
             std::uint64_t seed);

Corpus all_labeled(const std::vector<Example>& examples);

void write_corpus(const std::string& path, const Corpus& corpus,
                  const std::string& header_comment);
void write_sidecar(const std::string& path, const Corpus& corpus,
                   const std::string& header_comment);
Corpus read_corpus(const std::string& path,
                   const std::string& sidecar_path = "");

// The built-in restaurant domain (Figure-1-like): one entity type, four
// properties, a mix of unambiguous and hidden-condition templates.
DomainSpec default_restaurant_domain(std::uint64_t seed,
                                     int target_examples = 1000,
                                     int row_count = 40);

}  // namespace xpr::datagen
