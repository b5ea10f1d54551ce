#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cosy/concepts_io.hpp"
#include "cosy/scoring.hpp"

namespace cosy {

// Boolean formula over concept indices. Immutable; copies share structure.
class Formula {
 public:
  enum class Op { Leaf, Not, And, Or };

  static Formula leaf(std::size_t concept_index);
  static Formula negate(Formula operand);
  static Formula both(Formula lhs, Formula rhs);    // AND
  static Formula either(Formula lhs, Formula rhs);  // OR

  Op op() const { return node_->op; }
  std::size_t concept_index() const { return node_->concept_index; }
  const Formula& lhs() const { return node_->children[0]; }
  const Formula& rhs() const { return node_->children[1]; }

  // Number of concept leaves.
  std::size_t length() const { return node_->length; }
  std::vector<std::size_t> leaves() const;

  bool eval(std::span<const std::uint8_t> row) const;

  // Deterministic ordering used to break score ties: shorter formulas first,
  // then the leaves' concept indices left to right, then structure.
  std::vector<std::int64_t> order_key() const;

  friend bool operator==(const Formula& a, const Formula& b);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::size_t concept_index = 0;
    std::size_t length = 1;
    std::vector<Formula> children;
  };
  explicit Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  std::shared_ptr<const Node> node_;
};

// Value of `formula` on image `row` of `dataset`. UnknownConcept when a leaf
// indexes past the dataset's concepts.
std::uint8_t formula_eval(const Formula& formula, const ConceptDataset& dataset, std::size_t row);

// formula_eval over every image.
std::vector<std::uint8_t> formula_membership(const Formula& formula, const ConceptDataset& dataset);

// Text form:
//   expr   := term | expr " OR " term
//   term   := factor | term " AND " factor
//   factor := "NOT " factor | concept-name | "(" expr ")"
// Names containing spaces, quotes, parentheses or equal to a keyword are
// double-quoted (inner quotes doubled). Parentheses appear only where the
// tree shape needs them.
std::string render_formula(const Formula& formula, std::span<const std::string> concept_names);
Formula parse_formula(std::string_view text, std::span<const std::string> concept_names);

// AUC of the neuron separating images outside the concept (membership 0)
// from images inside it (membership 1). DegenerateMembership when either side
// is empty.
double delta_auc(std::span<const double> neuron_values, std::span<const std::uint8_t> membership,
                 TiePolicy policy = TiePolicy::Strict);

struct InvertResult {
  Formula formula;
  double delta_auc = 0.0;
};

// Beam search over AND/OR/NOT compositions up to `max_length` leaves. The
// beam starts from every concept and its negation; each round extends every
// member with {AND, OR} x {concept, NOT concept} over concepts not already in
// the formula and keeps the best `beam_width`. Returns the best formula seen
// at any length. Degenerate candidates are skipped; EmptyBeam if none remain.
InvertResult invert_explain(std::span<const double> neuron_values, const ConceptDataset& dataset,
                            std::size_t max_length, std::size_t beam_width,
                            TiePolicy policy = TiePolicy::Strict);

struct SimilarityMatrix {
  std::vector<std::string> image_refs;
  std::vector<std::string> concept_names;
  std::vector<double> values;  // images x concepts, row-major

  double at(std::size_t image, std::size_t concept_index) const {
    return values[image * concept_names.size() + concept_index];
  }
};

// CSV: header image_ref,<concept...>; real-valued cells.
SimilarityMatrix parse_similarity_matrix(std::string_view csv_text);

struct SoftWpmiConfig {
  double lambda = 1.0;
  std::size_t top_k = 10;
  double temperature = 0.1;
  // Weight the top_k images equally instead of by activation.
  bool binary_membership = false;
};

struct SoftWpmiResult {
  std::size_t concept_index = 0;
  double score = 0.0;
  std::vector<double> scores;  // per concept_index
};

// Concept with the highest log E[p(s | X_s)] - lambda * log p(s), where
//   p(s | x)      = softmax over concepts of sim(x, .) / temperature,
//   p(x in X_s)   = max(a(x), 0) normalised over the top_k most activating
//                   images (ties: lower index first), 0 elsewhere,
//   E[p(s | X_s)] = sum_x p(x in X_s) p(s | x),
//   p(s)          = mean_x p(s | x).
// Ties go to the lowest concept index.
SoftWpmiResult softwpmi_label(std::span<const double> neuron_values, const SimilarityMatrix& sim,
                              const SoftWpmiConfig& cfg);

// Explanations CSV for the given records (header only when empty).
std::string export_explanations(const std::vector<ExplanationRecord>& records);

}  // namespace cosy
