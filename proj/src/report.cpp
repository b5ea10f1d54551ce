#include "cosy/report.hpp"

#include <cstdio>

#include "cosy/error.hpp"
#include "cosy/io.hpp"

namespace cosy {
namespace {

using nlohmann::json;

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

Summary summary_from(const json& j) {
  return Summary{j.at("mean").get<double>(), j.at("std").get<double>(),
                 j.at("count").get<std::size_t>()};
}

TiePolicy tie_from(const std::string& s) {
  if (s == "strict") return TiePolicy::Strict;
  if (s == "midrank") return TiePolicy::Midrank;
  throw Error(ErrorCode::InvalidValue, "unknown tie policy \"" + s + "\"");
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string file_safe(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

std::string render_csv(const ReportDocument& doc) {
  std::string out = "dataset,model,layer,method,metric,mean,std,count\n";
  for (const auto& row : doc.table.rows) {
    for (const auto& [metric, s] : {std::pair{"auc", row.auc}, std::pair{"mad", row.mad}}) {
      out += io::csv_line({row.dataset, row.model, row.layer, row.method, metric, fixed(s.mean, 6),
                       fixed(s.std, 6), std::to_string(s.count)});
    }
  }
  return out;
}

std::string render_markdown(const ReportDocument& doc) {
  const auto& m = doc.metadata;
  std::string out = "# " + m.command + " report\n\n";
  out += "- dataset: " + m.dataset + "\n";
  out += "- model: " + m.model + "\n";
  out += "- config hash: " + m.config_hash + "\n";
  out += "- tie policy: " + m.tie_policy + "\n\n";
  if (!doc.table.rows.empty()) {
    out += "| Layer | Method | AUC | MAD | n |\n";
    out += "|---|---|---|---|---|\n";
    for (const auto& row : doc.table.rows) {
      out += "| " + row.layer + " | " + row.method + " | " + fixed(row.auc.mean, 3) + "±" +
             fixed(row.auc.std, 3) + " | " + fixed(row.mad.mean, 3) + "±" + fixed(row.mad.std, 3) +
             " | " + std::to_string(row.auc.count) + " |\n";
    }
    out += "\n";
  }
  if (!doc.scores.empty()) {
    out += "| Layer | Method | Neuron | Explanation | AUC | MAD |\n";
    out += "|---|---|---|---|---|---|\n";
    for (const auto& s : doc.scores) {
      out += "| " + s.layer_id + " | " + s.method_id + " | " + std::to_string(s.neuron_index) +
             " | " + s.concept_text + " | " + fixed(s.auc, 3) + " | " + fixed(s.mad, 3) + " |\n";
    }
    out += "\n";
  }
  for (const auto& [suite, body] : doc.suites.items()) {
    out += "## " + suite + "\n\n```json\n" + body.dump(2) + "\n```\n\n";
  }
  return out;
}

}  // namespace

json ReportDocument::to_json() const {
  json j;
  j["metadata"] = {{"command", metadata.command},   {"config_hash", metadata.config_hash},
                   {"dataset", metadata.dataset},   {"model", metadata.model},
                   {"tie_policy", metadata.tie_policy}, {"global_seed", metadata.global_seed},
                   {"seeds", metadata.seeds},       {"version", metadata.version}};
  j["benchmark"] = json::array();
  for (const auto& row : table.rows) {
    j["benchmark"].push_back({{"dataset", row.dataset},
                              {"model", row.model},
                              {"layer", row.layer},
                              {"method", row.method},
                              {"auc", summary_json(row.auc)},
                              {"mad", summary_json(row.mad)}});
  }
  j["scores"] = json::array();
  for (const auto& s : scores) {
    j["scores"].push_back({{"method", s.method_id},
                           {"layer", s.layer_id},
                           {"neuron", s.neuron_index},
                           {"explanation", s.concept_text},
                           {"auc", s.auc},
                           {"mad", s.mad},
                           {"n", s.n},
                           {"m", s.m},
                           {"tie_policy", std::string(to_string(s.tie_policy))}});
  }
  j["distributions"] = json::array();
  for (const auto& d : distributions) {
    j["distributions"].push_back({{"class", d.class_name},
                                  {"neuron", d.neuron_index},
                                  {"mad", d.mad},
                                  {"natural", d.natural_values},
                                  {"synthetic", d.synthetic_values}});
  }
  j["suites"] = suites;
  return j;
}

ReportDocument ReportDocument::from_json(const json& j) {
  try {
    ReportDocument doc;
    const auto& m = j.at("metadata");
    doc.metadata.command = m.at("command").get<std::string>();
    doc.metadata.config_hash = m.at("config_hash").get<std::string>();
    doc.metadata.dataset = m.at("dataset").get<std::string>();
    doc.metadata.model = m.at("model").get<std::string>();
    doc.metadata.tie_policy = m.at("tie_policy").get<std::string>();
    doc.metadata.global_seed = m.at("global_seed").get<std::uint64_t>();
    doc.metadata.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    doc.metadata.version = m.at("version").get<std::string>();
    for (const auto& r : j.at("benchmark")) {
      doc.table.rows.push_back(BenchmarkRow{r.at("dataset").get<std::string>(),
                                            r.at("model").get<std::string>(),
                                            r.at("layer").get<std::string>(),
                                            r.at("method").get<std::string>(),
                                            summary_from(r.at("auc")), summary_from(r.at("mad"))});
    }
    for (const auto& s : j.at("scores")) {
      ScoreResult r;
      r.method_id = s.at("method").get<std::string>();
      r.layer_id = s.at("layer").get<std::string>();
      r.neuron_index = s.at("neuron").get<std::size_t>();
      r.concept_text = s.at("explanation").get<std::string>();
      r.auc = s.at("auc").get<double>();
      r.mad = s.at("mad").get<double>();
      r.n = s.at("n").get<std::size_t>();
      r.m = s.at("m").get<std::size_t>();
      r.tie_policy = tie_from(s.at("tie_policy").get<std::string>());
      doc.scores.push_back(std::move(r));
    }
    for (const auto& d : j.at("distributions")) {
      ClassResponse c;
      c.class_name = d.at("class").get<std::string>();
      c.neuron_index = d.at("neuron").get<std::size_t>();
      c.mad = d.at("mad").get<double>();
      c.natural_values = d.at("natural").get<std::vector<double>>();
      c.synthetic_values = d.at("synthetic").get<std::vector<double>>();
      doc.distributions.push_back(std::move(c));
    }
    doc.suites = j.at("suites");
    return doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidValue, std::string("malformed report document: ") + e.what());
  }
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "md") return ReportFormat::Markdown;
  throw Error(ErrorCode::InvalidValue, "unknown report format \"" + std::string(name) + "\"");
}

std::string render_report(const ReportDocument& doc, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json:
      return doc.to_json().dump(2) + "\n";
    case ReportFormat::Csv:
      return render_csv(doc);
    case ReportFormat::Markdown:
      return render_markdown(doc);
  }
  return {};
}

std::filesystem::path write_report(const ReportDocument& doc, ReportFormat format,
                                   const std::filesystem::path& dir) {
  static constexpr const char* kExt[] = {"json", "csv", "md"};
  const auto path = dir / (std::string("report.") + kExt[static_cast<int>(format)]);
  io::write_file_atomic(path, render_report(doc, format));
  for (const auto& d : doc.distributions) {
    io::write_file_atomic(dir / "distributions" / (file_safe(d.class_name) + ".csv"),
                      distribution_csv(d));
  }
  return path;
}

ReportDocument read_report(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::InvalidValue, path.string() + " is not valid JSON");
  }
  return ReportDocument::from_json(j);
}

}  // namespace cosy
