#include "cosy/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>

#include "cosy/error.hpp"

namespace cosy {
namespace {

void check_inputs(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::EmptyInput, std::string(what) + " needs non-empty control and synthetic sets");
  }
  for (auto s : {a, b}) {
    for (double v : s) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteValue, std::string(what) + " got a non-finite value");
      }
    }
  }
}

}  // namespace

double auc_score(std::span<const double> control, std::span<const double> synthetic,
                 TiePolicy policy) {
  check_inputs(control, synthetic, "auc_score");
  std::vector<double> sorted(control.begin(), control.end());
  std::sort(sorted.begin(), sorted.end());

  std::uint64_t below = 0;
  std::uint64_t ties = 0;
  for (double b : synthetic) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), b);
    below += static_cast<std::uint64_t>(lo - sorted.begin());
    if (policy == TiePolicy::Midrank) {
      const auto hi = std::upper_bound(lo, sorted.end(), b);
      ties += static_cast<std::uint64_t>(hi - lo);
    }
  }
  const double pairs = static_cast<double>(control.size()) * static_cast<double>(synthetic.size());
  if (policy == TiePolicy::Strict) return static_cast<double>(below) / pairs;
  return (2.0 * static_cast<double>(below) + static_cast<double>(ties)) / (2.0 * pairs);
}

RankedValues::RankedValues(std::span<const double> values) : order_(values.size()) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "ranked values must be finite");
  }
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  group_end_.resize(order_.size());
  std::size_t start = 0;
  while (start < order_.size()) {
    std::size_t end = start + 1;
    while (end < order_.size() && values[order_[end]] == values[order_[start]]) ++end;
    for (std::size_t i = start; i < end; ++i) group_end_[i] = end;
    start = end;
  }
}

double RankedValues::auc(std::span<const std::uint8_t> membership, TiePolicy policy) const {
  if (membership.size() != order_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "membership length " +
                                                  std::to_string(membership.size()) + " vs " +
                                                  std::to_string(order_.size()) + " values");
  }
  std::uint64_t negatives_before = 0;
  std::uint64_t below = 0;
  std::uint64_t ties = 0;
  std::uint64_t positives = 0;
  std::size_t start = 0;
  while (start < order_.size()) {
    const std::size_t end = group_end_[start];
    std::uint64_t pos = 0;
    for (std::size_t i = start; i < end; ++i) pos += membership[order_[i]] != 0;
    const std::uint64_t neg = (end - start) - pos;
    below += pos * negatives_before;
    ties += pos * neg;
    negatives_before += neg;
    positives += pos;
    start = end;
  }
  if (positives == 0 || negatives_before == 0) {
    throw Error(ErrorCode::DegenerateMembership, "membership has only one class");
  }
  const double pairs = static_cast<double>(negatives_before) * static_cast<double>(positives);
  if (policy == TiePolicy::Strict) return static_cast<double>(below) / pairs;
  return (2.0 * static_cast<double>(below) + static_cast<double>(ties)) / (2.0 * pairs);
}

double mad_score(std::span<const double> control, std::span<const double> synthetic) {
  check_inputs(control, synthetic, "mad_score");
  double sum0 = 0.0;
  for (double v : control) sum0 += v;
  double sum1 = 0.0;
  for (double v : synthetic) sum1 += v;
  return sum1 / static_cast<double>(synthetic.size()) - sum0 / static_cast<double>(control.size());
}

ScoreResult evaluate_explanation(const ExplanationRecord& record, const ActivationStore& control,
                                 const ActivationStore& synthetic, TiePolicy policy,
                                 const std::optional<std::string>& exclude_control_concept) {
  if (control.model_id != synthetic.model_id || control.layer_id != synthetic.layer_id ||
      control.neuron_count != synthetic.neuron_count) {
    throw Error(ErrorCode::StoreMismatch,
                "control " + control.model_id + "/" + control.layer_id + " (k=" +
                    std::to_string(control.neuron_count) + ") vs synthetic " +
                    synthetic.model_id + "/" + synthetic.layer_id + " (k=" +
                    std::to_string(synthetic.neuron_count) + ")");
  }
  if (record.layer_id != control.layer_id) {
    throw Error(ErrorCode::StoreMismatch, "record for layer " + record.layer_id +
                                              " scored against stores of layer " +
                                              control.layer_id);
  }
  if (record.neuron_index >= control.neuron_count) {
    throw Error(ErrorCode::NeuronOutOfRange, "neuron " + std::to_string(record.neuron_index) +
                                                 " of " + std::to_string(control.neuron_count));
  }
  const auto a0 = control.extract(record.neuron_index, SourceTag::Control, std::nullopt,
                                  exclude_control_concept);
  const auto a1 = synthetic.extract(record.neuron_index, SourceTag::Synthetic, record.text);
  if (a0.values.size() < 2 || a1.values.size() < 2) {
    throw Error(ErrorCode::EmptyInput,
                "need at least 2 control and 2 synthetic rows for \"" + record.text + "\", got " +
                    std::to_string(a0.values.size()) + " and " + std::to_string(a1.values.size()));
  }

  ScoreResult result;
  result.method_id = record.method_id;
  result.layer_id = record.layer_id;
  result.neuron_index = record.neuron_index;
  result.concept_text = record.text;
  result.auc = auc_score(a0.values, a1.values, policy);
  result.mad = mad_score(a0.values, a1.values);
  result.n = a0.values.size();
  result.m = a1.values.size();
  result.tie_policy = policy;
  return result;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "summary of an empty set");
  Summary s;
  s.count = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

BenchmarkTable benchmark(const std::string& dataset, const std::string& model,
                         std::span<const ScoreResult> results,
                         std::span<const CellKey> required_cells) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>>
      cells;
  for (const auto& key : required_cells) cells[{key.layer, key.method}];
  for (const auto& r : results) {
    auto& cell = cells[{r.layer_id, r.method_id}];
    cell.first.push_back(r.auc);
    cell.second.push_back(r.mad);
  }
  if (cells.empty()) throw Error(ErrorCode::EmptyCell, "no results to aggregate");

  BenchmarkTable table;
  for (const auto& [key, cell] : cells) {
    if (cell.first.empty()) {
      throw Error(ErrorCode::EmptyCell, "no scored neurons for layer " + key.first +
                                            ", method " + key.second);
    }
    table.rows.push_back(
        BenchmarkRow{dataset, model, key.first, key.second, summarize(cell.first), summarize(cell.second)});
  }
  return table;
}

}  // namespace cosy
