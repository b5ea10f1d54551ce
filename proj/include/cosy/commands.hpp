#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cosy/activation.hpp"
#include "cosy/concepts_io.hpp"
#include "cosy/imagegen.hpp"
#include "cosy/report.hpp"

namespace cosy {

inline constexpr std::string_view kMetaevalSuites[] = {"similarity", "response", "sanity",
                                                       "stability", "broadness"};

// InvalidConfig for models other than the built-in toy model.
std::unique_ptr<ModelAdapter> make_adapter(const std::string& model_id);

// Generator over config.cache_dir with the configured backend registered.
std::unique_ptr<ImageGenerator> make_generator(const RunConfig& config);

// Checks the config against the adapter and the explanations (layers must
// exist, neurons must be in range for scalar layers) before any side effect.
void validate_run(const RunConfig& config, const std::vector<ExplanationRecord>& records);

// <output_dir>/stores/<layer>/{control,synthetic}
std::filesystem::path store_dir(const RunConfig& config, const std::string& layer_id,
                                SourceTag source);

struct GenerateSummary {
  std::size_t concepts = 0;
  std::size_t images = 0;
  std::size_t backend_calls = 0;
};

// Fills the image cache for every distinct explanation text. With
// `export_dir`, also writes <export_dir>/<concept>/NNNNN.png.
GenerateSummary run_generate(const RunConfig& config, const std::vector<ExplanationRecord>& records,
                             const std::optional<std::filesystem::path>& export_dir = std::nullopt);

// Writes control and synthetic stores for every layer named by the records
// and for config.layer_id. Returns the store directories written.
std::vector<std::filesystem::path> run_collect(const RunConfig& config,
                                               const std::vector<ExplanationRecord>& records);

// Scores every record against the stores written by run_collect.
ReportDocument run_score(const RunConfig& config, const std::vector<ExplanationRecord>& records);

// generate + collect + score, grouped by (layer, method).
ReportDocument run_benchmark(const RunConfig& config, const std::vector<ExplanationRecord>& records);

// One of kMetaevalSuites; InvalidValue for anything else.
ReportDocument run_metaeval(const RunConfig& config, std::string_view suite);

// Runs the configured explainer over the probe store and writes
// <output_dir>/explanations_<method>.csv.
std::vector<ExplanationRecord> run_explain(const RunConfig& config);

// ConfigHashMismatch unless `doc` was produced from `config`.
void check_report_matches(const ReportDocument& doc, const RunConfig& config);

}  // namespace cosy
