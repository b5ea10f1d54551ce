// Command-line front end: generate, collect, score, benchmark, metaeval,
// explain, report. Exit status 0 on success, 1 on invalid input, 2 on
// runtime failure.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cosy/commands.hpp"
#include "cosy/concepts_io.hpp"
#include "cosy/error.hpp"
#include "cosy/report.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> explanations;
  std::string suite;
  std::string format = "json";
  std::string out;
  std::string document;
};

cosy::RunConfig load(const Options& opt) {
  auto config = cosy::load_config(opt.config);
  if (const char* cache = std::getenv("COSY_CACHE"); cache != nullptr && *cache != '\0') {
    config.cache_dir = cache;
  }
  return config;
}

std::vector<cosy::ExplanationRecord> load_explanations(const Options& opt) {
  if (opt.explanations.empty()) {
    throw cosy::Error(cosy::ErrorCode::MissingKey, "--explanations is required");
  }
  std::vector<cosy::ExplanationRecord> all;
  for (const auto& path : opt.explanations) {
    auto part = cosy::ingest_explanations(path);
    all.insert(all.end(), part.begin(), part.end());
  }
  // Rejects keys duplicated across files.
  return cosy::parse_explanations(cosy::serialize_explanations(all));
}

void emit(const cosy::ReportDocument& doc, const cosy::RunConfig& config, const Options& opt) {
  const fs::path dir = opt.out.empty() ? fs::path(config.output_dir) : fs::path(opt.out);
  const auto path = cosy::write_report(doc, cosy::parse_report_format(opt.format), dir);
  std::cerr << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate textual neuron explanations with synthetic images"};
  app.require_subcommand(1);
  Options opt;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "Run configuration (JSON)")->required();
  };
  auto add_explanations = [&](CLI::App* cmd) {
    cmd->add_option("--explanations", opt.explanations, "Explanations CSV (repeatable)");
  };
  auto add_format = [&](CLI::App* cmd) {
    cmd->add_option("--format", opt.format, "json | csv | md")
        ->check(CLI::IsMember({"json", "csv", "md"}));
    cmd->add_option("--out", opt.out, "Output directory (default: output_dir)");
  };

  auto* generate = app.add_subcommand("generate", "Fill the image cache for every explanation");
  add_config(generate);
  add_explanations(generate);
  generate->add_option("--out", opt.out, "Also export images as <out>/<concept>/NNNNN.png");

  auto* collect = app.add_subcommand("collect", "Write control and synthetic activation stores");
  add_config(collect);
  add_explanations(collect);

  auto* score = app.add_subcommand("score", "Score explanations against collected stores");
  add_config(score);
  add_explanations(score);
  add_format(score);

  auto* bench = app.add_subcommand("benchmark", "generate + collect + score, grouped by layer and method");
  add_config(bench);
  add_explanations(bench);
  add_format(bench);

  auto* meta = app.add_subcommand("metaeval", "Run a meta-evaluation suite");
  add_config(meta);
  meta->add_option("--suite", opt.suite, "similarity | response | sanity | stability | broadness")
      ->required();
  add_format(meta);

  auto* explain = app.add_subcommand("explain", "Produce explanations with INVERT or SoftWPMI");
  add_config(explain);

  auto* report = app.add_subcommand("report", "Render a report document");
  add_config(report);
  report->add_option("--document", opt.document, "Report JSON (default: <output_dir>/report.json)");
  add_format(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto config = load(opt);
    if (generate->parsed()) {
      const auto records = load_explanations(opt);
      std::optional<fs::path> export_dir;
      if (!opt.out.empty()) export_dir = opt.out;
      const auto s = cosy::run_generate(config, records, export_dir);
      std::cerr << "generated " << s.images << " images for " << s.concepts << " concepts ("
                << s.backend_calls << " backend calls)\n";
    } else if (collect->parsed()) {
      for (const auto& dir : cosy::run_collect(config, load_explanations(opt))) {
        std::cerr << "wrote " << dir.string() << "\n";
      }
    } else if (score->parsed()) {
      emit(cosy::run_score(config, load_explanations(opt)), config, opt);
    } else if (bench->parsed()) {
      emit(cosy::run_benchmark(config, load_explanations(opt)), config, opt);
    } else if (meta->parsed()) {
      const bool known = std::find(std::begin(cosy::kMetaevalSuites), std::end(cosy::kMetaevalSuites),
                                   opt.suite) != std::end(cosy::kMetaevalSuites);
      if (!known) {
        std::cerr << "unknown suite \"" << opt.suite << "\"\n\n" << meta->help();
        return 1;
      }
      emit(cosy::run_metaeval(config, opt.suite), config, opt);
    } else if (explain->parsed()) {
      const auto records = cosy::run_explain(config);
      std::cerr << "wrote " << records.size() << " explanations to " << config.output_dir << "\n";
    } else if (report->parsed()) {
      const fs::path doc_path =
          opt.document.empty() ? fs::path(config.output_dir) / "report.json" : fs::path(opt.document);
      const auto doc = cosy::read_report(doc_path);
      cosy::check_report_matches(doc, config);
      emit(doc, config, opt);
    }
  } catch (const cosy::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cosy::is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
