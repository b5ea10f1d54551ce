#include "cosy/concepts_io.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <tuple>

#include "cosy/error.hpp"
#include "cosy/hash.hpp"
#include "cosy/io.hpp"

namespace cosy {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::optional<std::size_t> parse_index(std::string_view s) {
  if (s.empty() || s.size() > 19) return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace

std::string_view to_string(TiePolicy policy) {
  return policy == TiePolicy::Strict ? "strict" : "midrank";
}

// ---------------------------------------------------------------------------
// Explanations

std::vector<ExplanationRecord> parse_explanations(std::string_view csv_text) {
  const auto rows = io::parse_csv(csv_text);
  if (rows.empty()) {
    throw Error(ErrorCode::MalformedRow, "line 1: missing header");
  }
  const std::vector<std::string> expected = {"method", "layer", "neuron", "explanation"};
  if (rows.front().fields != expected) {
    throw Error(ErrorCode::MalformedRow,
                "line 1: header must be method,layer,neuron,explanation");
  }

  std::vector<ExplanationRecord> records;
  std::set<std::tuple<std::string, std::string, std::size_t>> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != 4) {
      throw Error(ErrorCode::MalformedRow, at_line(row.line) + "expected 4 fields, got " +
                                               std::to_string(row.fields.size()));
    }
    for (const auto& field : row.fields) {
      if (!io::is_valid_utf8(field)) {
        throw Error(ErrorCode::MalformedRow, at_line(row.line) + "invalid UTF-8");
      }
    }
    const auto neuron = parse_index(row.fields[2]);
    if (!neuron) {
      throw Error(ErrorCode::MalformedRow,
                  at_line(row.line) + "neuron must be a non-negative integer, got \"" +
                      row.fields[2] + "\"");
    }
    if (row.fields[0].empty() || row.fields[1].empty()) {
      throw Error(ErrorCode::MalformedRow, at_line(row.line) + "empty method or layer");
    }
    if (trim(row.fields[3]).empty()) {
      throw Error(ErrorCode::EmptyExplanation, at_line(row.line) + "explanation is empty");
    }
    ExplanationRecord rec{row.fields[0], row.fields[1], *neuron, row.fields[3]};
    if (!seen.emplace(rec.method_id, rec.layer_id, rec.neuron_index).second) {
      throw Error(ErrorCode::DuplicateKey,
                  at_line(row.line) + "duplicate (" + rec.method_id + ", " + rec.layer_id +
                      ", " + std::to_string(rec.neuron_index) + ")");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ExplanationRecord> ingest_explanations(const std::filesystem::path& path) {
  return parse_explanations(io::read_file(path));
}

std::string serialize_explanations(const std::vector<ExplanationRecord>& records) {
  std::string out = "method,layer,neuron,explanation\n";
  for (const auto& rec : records) {
    out += io::csv_line(
        {rec.method_id, rec.layer_id, std::to_string(rec.neuron_index), rec.text});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Concept datasets

ConceptDataset::ConceptDataset(std::vector<std::string> concept_names,
                               std::vector<std::string> image_refs,
                               std::vector<std::uint8_t> labels)
    : concept_names_(std::move(concept_names)),
      image_refs_(std::move(image_refs)),
      labels_(std::move(labels)) {
  if (concept_names_.empty() || image_refs_.empty()) {
    throw Error(ErrorCode::EmptyDataset, "dataset needs at least one image and one concept");
  }
  if (labels_.size() != concept_names_.size() * image_refs_.size()) {
    throw Error(ErrorCode::MalformedRow, "label matrix shape does not match names/refs");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] > 1) {
      throw Error(ErrorCode::NonBinaryCell,
                  "row " + std::to_string(i / concept_names_.size()) + ", column \"" +
                      concept_names_[i % concept_names_.size()] + "\"");
    }
  }
  for (std::size_t c = 0; c < concept_names_.size(); ++c) {
    std::size_t positives = 0;
    for (std::size_t r = 0; r < image_refs_.size(); ++r) positives += label(r, c);
    if (positives == 0 || positives == image_refs_.size()) {
      throw Error(ErrorCode::ConstantConceptColumn,
                  "column \"" + concept_names_[c] + "\" is constant " +
                      (positives == 0 ? "0" : "1"));
    }
  }
}

std::vector<std::uint8_t> ConceptDataset::column(std::size_t concept_index) const {
  std::vector<std::uint8_t> out(image_refs_.size());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = label(r, concept_index);
  return out;
}

ConceptDataset parse_concept_dataset(std::string_view csv_text) {
  const auto rows = io::parse_csv(csv_text);
  if (rows.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no header");
  }
  const auto& header = rows.front().fields;
  if (header.empty() || header.front() != "image_ref") {
    throw Error(ErrorCode::MalformedRow, "line 1: header must start with image_ref");
  }
  std::vector<std::string> concepts(header.begin() + 1, header.end());
  std::set<std::string> unique(concepts.begin(), concepts.end());
  if (unique.size() != concepts.size()) {
    throw Error(ErrorCode::MalformedRow, "line 1: duplicate concept name");
  }
  if (concepts.empty() || rows.size() < 2) {
    throw Error(ErrorCode::EmptyDataset, "dataset needs at least one image and one concept");
  }

  std::vector<std::string> refs;
  std::vector<std::uint8_t> labels;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, at_line(row.line) + "expected " +
                                               std::to_string(header.size()) + " fields");
    }
    refs.push_back(row.fields[0]);
    for (std::size_t c = 1; c < row.fields.size(); ++c) {
      const auto cell = trim(row.fields[c]);
      if (cell != "0" && cell != "1") {
        throw Error(ErrorCode::NonBinaryCell, at_line(row.line) + "column \"" + header[c] +
                                                  "\" has value \"" + row.fields[c] + "\"");
      }
      labels.push_back(cell == "1" ? 1 : 0);
    }
  }
  return ConceptDataset(std::move(concepts), std::move(refs), std::move(labels));
}

ConceptDataset ingest_concept_dataset(const std::filesystem::path& path) {
  return parse_concept_dataset(io::read_file(path));
}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string context) : obj_(obj), context_(std::move(context)) {
    if (!obj_.is_object()) {
      throw Error(ErrorCode::InvalidValue, context_ + " must be a JSON object");
    }
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return obj_.contains(key);
  }

  const json& require(const std::string& key) {
    if (!has(key)) throw Error(ErrorCode::MissingKey, where(key));
    return obj_.at(key);
  }

  std::string string(const std::string& key) {
    const auto& v = require(key);
    if (!v.is_string()) throw Error(ErrorCode::InvalidValue, where(key) + " must be a string");
    return v.get<std::string>();
  }

  std::string string_or(const std::string& key, std::string fallback) {
    return has(key) ? string(key) : std::move(fallback);
  }

  std::uint64_t unsigned_or(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number_unsigned()) {
      throw Error(ErrorCode::InvalidValue, where(key) + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  double number_or(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw Error(ErrorCode::InvalidValue, where(key) + " must be a number");
    return v.get<double>();
  }

  bool bool_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) throw Error(ErrorCode::InvalidValue, where(key) + " must be a boolean");
    return v.get<bool>();
  }

  void reject_unknown() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!used_.count(key)) throw Error(ErrorCode::UnknownKey, where(key));
    }
  }

  std::string where(const std::string& key) const {
    return context_.empty() ? key : context_ + "." + key;
  }

 private:
  const json& obj_;
  std::string context_;
  std::set<std::string> used_;
};

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || base.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).lexically_normal().string();
}

BackendSettings parse_backend(const json& v, const std::filesystem::path& base) {
  BackendSettings out;
  std::string type;
  if (v.is_string()) {
    type = v.get<std::string>();
    if (type != "mock") {
      throw Error(ErrorCode::InvalidValue,
                  "generator_backend \"" + type + "\" needs an object with its settings");
    }
    return out;
  }
  ObjectReader r(v, "generator_backend");
  type = r.string("type");
  out.max_in_flight = static_cast<int>(r.unsigned_or("max_in_flight", 4));
  if (out.max_in_flight < 1) {
    throw Error(ErrorCode::InvalidValue, "generator_backend.max_in_flight must be >= 1");
  }
  if (type == "mock") {
    out.kind = BackendKind::Mock;
  } else if (type == "directory") {
    out.kind = BackendKind::Directory;
    out.directory = resolve(base, r.string("root"));
  } else if (type == "http") {
    out.kind = BackendKind::Http;
    out.url = r.string("url");
    out.timeout_ms = static_cast<int>(r.unsigned_or("timeout_ms", 60000));
    out.retries = static_cast<int>(r.unsigned_or("retries", 2));
    if (out.url.rfind("http://", 0) != 0 && out.url.rfind("https://", 0) != 0) {
      throw Error(ErrorCode::InvalidValue, "generator_backend.url must start with http(s)://");
    }
  } else {
    throw Error(ErrorCode::InvalidValue,
                "generator_backend.type must be mock, directory or http, got \"" + type + "\"");
  }
  r.reject_unknown();
  return out;
}

std::vector<std::size_t> index_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw Error(ErrorCode::InvalidValue, where + " must be an array");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned()) {
      throw Error(ErrorCode::InvalidValue, where + " entries must be non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

ExplainSettings parse_explain(const json& v, const std::filesystem::path& base) {
  ObjectReader r(v, "explain");
  ExplainSettings s;
  s.method = r.string("method");
  if (s.method != "invert" && s.method != "softwpmi") {
    throw Error(ErrorCode::InvalidValue, "explain.method must be invert or softwpmi");
  }
  s.probe_store = resolve(base, r.string("probe_store"));
  if (s.method == "invert") {
    s.concept_dataset = resolve(base, r.string("concept_dataset"));
  } else {
    s.similarity_matrix = resolve(base, r.string("similarity_matrix"));
  }
  if (r.has("neurons")) s.neurons = index_list(v.at("neurons"), "explain.neurons");
  s.max_length = r.unsigned_or("max_length", s.max_length);
  s.beam_width = r.unsigned_or("beam_width", s.beam_width);
  s.lambda = r.number_or("lambda", s.lambda);
  s.top_k = r.unsigned_or("top_k", s.top_k);
  s.temperature = r.number_or("temperature", s.temperature);
  s.binary_membership = r.bool_or("binary_membership", s.binary_membership);
  if (s.max_length < 1 || s.beam_width < 1) {
    throw Error(ErrorCode::InvalidValue, "explain.max_length and beam_width must be >= 1");
  }
  if (!(s.lambda >= 0.0) || !(s.temperature > 0.0) || s.top_k < 1) {
    throw Error(ErrorCode::InvalidValue,
                "explain needs lambda >= 0, temperature > 0 and top_k >= 1");
  }
  r.reject_unknown();
  return s;
}

MetaevalSettings parse_metaeval(const json& v, const std::filesystem::path& base) {
  ObjectReader r(v, "metaeval");
  MetaevalSettings s;
  if (r.has("concepts")) {
    const auto& c = v.at("concepts");
    if (!c.is_array()) throw Error(ErrorCode::InvalidValue, "metaeval.concepts must be an array");
    for (const auto& e : c) {
      if (!e.is_string() || trim(e.get<std::string>()).empty()) {
        throw Error(ErrorCode::InvalidValue, "metaeval.concepts entries must be non-empty strings");
      }
      s.concepts.push_back(e.get<std::string>());
    }
  }
  if (r.has("class_neurons")) {
    const auto& m = v.at("class_neurons");
    if (!m.is_object()) {
      throw Error(ErrorCode::InvalidValue, "metaeval.class_neurons must be an object");
    }
    for (const auto& [k, n] : m.items()) {
      if (!n.is_number_unsigned()) {
        throw Error(ErrorCode::InvalidValue, "metaeval.class_neurons." + k +
                                                 " must be a non-negative integer");
      }
      s.class_neurons[k] = n.get<std::size_t>();
    }
  }
  if (r.has("seeds")) {
    const auto& a = v.at("seeds");
    if (!a.is_array()) throw Error(ErrorCode::InvalidValue, "metaeval.seeds must be an array");
    for (const auto& e : a) {
      if (!e.is_number_unsigned()) {
        throw Error(ErrorCode::InvalidValue, "metaeval.seeds entries must be unsigned integers");
      }
      s.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  s.natural_dir = resolve(base, r.string_or("natural_dir", ""));
  s.taxonomy_path = resolve(base, r.string_or("taxonomy_path", ""));
  r.reject_unknown();
  return s;
}

}  // namespace

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical.dump()); }

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidValue, std::string("config is not valid JSON: ") + e.what());
  }
  ObjectReader r(root, "");
  RunConfig cfg;
  cfg.control_dataset_path = resolve(base_dir, r.string("control_dataset_path"));
  cfg.generator_backend = parse_backend(r.require("generator_backend"), base_dir);

  if (r.has("prompt_template")) {
    const auto& t = root.at("prompt_template");
    if (t.is_number_integer()) {
      cfg.prompt_template = builtin_template(t.get<int>());
    } else if (t.is_string()) {
      cfg.prompt_template = custom_template(t.get<std::string>());
    } else {
      throw Error(ErrorCode::InvalidValue,
                  "prompt_template must be an integer 1..5 or a pattern string");
    }
  }
  cfg.images_per_concept = r.unsigned_or("images_per_concept", 50);
  if (cfg.images_per_concept < 2) {
    throw Error(ErrorCode::InvalidValue, "images_per_concept must be >= 2, got " +
                                             std::to_string(cfg.images_per_concept));
  }
  cfg.global_seed = r.unsigned_or("global_seed", 0);
  const auto tie = r.string_or("tie_policy", "strict");
  if (tie == "strict") {
    cfg.tie_policy = TiePolicy::Strict;
  } else if (tie == "midrank") {
    cfg.tie_policy = TiePolicy::Midrank;
  } else {
    throw Error(ErrorCode::InvalidValue, "tie_policy must be strict or midrank");
  }
  cfg.model_id = r.string("model_id");
  cfg.layer_id = r.string("layer_id");
  cfg.output_dir = resolve(base_dir, r.string("output_dir"));

  const auto raw_dataset_id = r.string_or("dataset_id", "");
  const auto raw_cache_dir = r.string_or("cache_dir", "");
  cfg.dataset_id = raw_dataset_id;
  if (cfg.dataset_id.empty()) {
    auto p = std::filesystem::path(root.at("control_dataset_path").get<std::string>())
                 .lexically_normal();
    if (!p.has_filename()) p = p.parent_path();
    cfg.dataset_id = p.filename().string();
  }
  cfg.cache_dir = raw_cache_dir.empty()
                      ? (std::filesystem::path(cfg.output_dir) / "cache").string()
                      : resolve(base_dir, raw_cache_dir);

  if (r.has("explain")) cfg.explain = parse_explain(root.at("explain"), base_dir);
  if (r.has("metaeval")) cfg.metaeval = parse_metaeval(root.at("metaeval"), base_dir);
  r.reject_unknown();

  // Canonical form: every key present, defaults filled in, paths as written.
  json canon = root;
  canon["prompt_template"] = cfg.prompt_template.pattern;
  canon["images_per_concept"] = cfg.images_per_concept;
  canon["global_seed"] = cfg.global_seed;
  canon["tie_policy"] = std::string(to_string(cfg.tie_policy));
  canon["dataset_id"] = cfg.dataset_id;
  canon["cache_dir"] = raw_cache_dir;
  if (root.at("generator_backend").is_string()) {
    canon["generator_backend"] = json{{"type", "mock"}, {"max_in_flight", 4}};
  }
  cfg.canonical = std::move(canon);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Taxonomy

std::map<std::string, TaxonomyChain> parse_taxonomy(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidValue, std::string("taxonomy is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) {
    throw Error(ErrorCode::InvalidValue, "taxonomy must map concept -> hypernym list");
  }
  std::map<std::string, TaxonomyChain> out;
  for (const auto& [concept_name, chain] : root.items()) {
    if (!chain.is_array()) {
      throw Error(ErrorCode::InvalidValue, "taxonomy." + concept_name + " must be an array");
    }
    TaxonomyChain tc{concept_name, {}};
    std::set<std::string> seen{concept_name};
    for (const auto& h : chain) {
      if (!h.is_string() || trim(h.get<std::string>()).empty()) {
        throw Error(ErrorCode::InvalidValue,
                    "taxonomy." + concept_name + " entries must be non-empty strings");
      }
      auto name = h.get<std::string>();
      if (!seen.insert(name).second) {
        throw Error(ErrorCode::InvalidValue,
                    "taxonomy." + concept_name + " repeats \"" + name + "\"");
      }
      tc.hypernyms.push_back(std::move(name));
    }
    out.emplace(concept_name, std::move(tc));
  }
  return out;
}

std::map<std::string, TaxonomyChain> load_taxonomy(const std::filesystem::path& path) {
  return parse_taxonomy(io::read_file(path));
}

}  // namespace cosy
