#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosy/activation.hpp"
#include "cosy/concepts_io.hpp"

namespace cosy {

// Fraction of (control, synthetic) pairs ranked control < synthetic. The
// midrank policy counts tied pairs as one half. O((n + m) log n).
double auc_score(std::span<const double> control, std::span<const double> synthetic,
                 TiePolicy policy = TiePolicy::Strict);

// Values sorted once so that AUCs for many binary splits of the same set
// cost O(n) each. auc(membership) equals auc_score(values where membership is
// 0, values where membership is 1) exactly.
class RankedValues {
 public:
  explicit RankedValues(std::span<const double> values);

  std::size_t size() const { return order_.size(); }
  double auc(std::span<const std::uint8_t> membership, TiePolicy policy) const;

 private:
  std::vector<std::size_t> order_;       // indices sorted by value
  std::vector<std::size_t> group_end_;   // per sorted position: end of its tie group
};

// mean(synthetic) - mean(control), in raw activation units.
double mad_score(std::span<const double> control, std::span<const double> synthetic);

struct ScoreResult {
  std::string method_id;
  std::string layer_id;
  std::size_t neuron_index = 0;
  std::string concept_text;
  double auc = 0.0;
  double mad = 0.0;
  std::size_t n = 0;  // control set size
  std::size_t m = 0;  // synthetic set size
  TiePolicy tie_policy = TiePolicy::Strict;
};

// Scores `record` from the neuron's column in both stores. Synthetic rows are
// those tagged synthetic with the record's text as concept. When
// `exclude_control_concept` is set, control rows of that class are left out
// of the control set.
ScoreResult evaluate_explanation(const ExplanationRecord& record, const ActivationStore& control,
                                 const ActivationStore& synthetic,
                                 TiePolicy policy = TiePolicy::Strict,
                                 const std::optional<std::string>& exclude_control_concept =
                                     std::nullopt);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
};

// Two-pass mean and population standard deviation. EmptyInput when empty.
Summary summarize(std::span<const double> values);

struct BenchmarkRow {
  std::string dataset;
  std::string model;
  std::string layer;
  std::string method;
  Summary auc;
  Summary mad;
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;  // sorted by (layer, method)
};

struct CellKey {
  std::string layer;
  std::string method;
};

// Groups results by (layer, method). Every cell in `required_cells` must
// receive at least one result (EmptyCell otherwise).
BenchmarkTable benchmark(const std::string& dataset, const std::string& model,
                         std::span<const ScoreResult> results,
                         std::span<const CellKey> required_cells = {});

}  // namespace cosy
