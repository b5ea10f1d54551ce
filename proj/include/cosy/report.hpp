#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cosy/metaeval.hpp"
#include "cosy/scoring.hpp"

namespace cosy {

inline constexpr std::string_view kVersion = "0.1.0";

struct RunMetadata {
  std::string command;
  std::string config_hash;  // 16 hex digits
  std::string dataset;
  std::string model;
  std::string tie_policy;
  std::uint64_t global_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::string version = std::string(kVersion);
};

// Everything a command produced. Contains no timestamps, so identical runs
// serialise to identical bytes.
struct ReportDocument {
  RunMetadata metadata;
  BenchmarkTable table;
  std::vector<ScoreResult> scores;
  std::vector<ClassResponse> distributions;
  nlohmann::json suites = nlohmann::json::object();  // metaeval results by suite name

  nlohmann::json to_json() const;
  static ReportDocument from_json(const nlohmann::json& j);
};

enum class ReportFormat { Json, Csv, Markdown };

// "json" | "csv" | "md"; InvalidValue otherwise.
ReportFormat parse_report_format(std::string_view name);

std::string render_report(const ReportDocument& doc, ReportFormat format);

// Writes report.<json|csv|md> into `dir`, plus distributions/<class>.csv for
// every distribution export. Returns the report file path.
std::filesystem::path write_report(const ReportDocument& doc, ReportFormat format,
                                   const std::filesystem::path& dir);

ReportDocument read_report(const std::filesystem::path& path);

}  // namespace cosy
