#include "cosy/commands.hpp"

#include <algorithm>
#include <set>

#include "cosy/error.hpp"
#include "cosy/explainers.hpp"
#include "cosy/hash.hpp"
#include "cosy/io.hpp"
#include "cosy/metaeval.hpp"

namespace cosy {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string backend_id(const RunConfig& config) {
  switch (config.generator_backend.kind) {
    case BackendKind::Mock:
      return "mock";
    case BackendKind::Directory:
      return "directory";
    case BackendKind::Http:
      return "http";
  }
  return "mock";
}

GenerationSpec spec_for(const RunConfig& config, const std::string& concept_text) {
  return GenerationSpec{concept_text, config.prompt_template, config.images_per_concept,
                        config.global_seed, backend_id(config)};
}

template <typename Key>
std::vector<std::string> distinct(const std::vector<ExplanationRecord>& records, Key key) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    const std::string& v = key(r);
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

std::vector<std::string> layers_of(const RunConfig& config,
                                   const std::vector<ExplanationRecord>& records) {
  auto layers = distinct(records, [](const auto& r) -> const std::string& { return r.layer_id; });
  if (std::find(layers.begin(), layers.end(), config.layer_id) == layers.end()) {
    layers.push_back(config.layer_id);
  }
  return layers;
}

RunMetadata metadata_for(const RunConfig& config, std::string command) {
  RunMetadata m;
  m.command = std::move(command);
  m.config_hash = hex64(config.hash());
  m.dataset = config.dataset_id;
  m.model = config.model_id;
  m.tie_policy = std::string(to_string(config.tie_policy));
  m.global_seed = config.global_seed;
  m.seeds = {config.global_seed};
  return m;
}

json stats_json(const SimilarityStats& s) {
  return {{"cs_mean", s.cs_mean}, {"cs_std", s.cs_std}, {"ed_mean", s.ed_mean},
          {"ed_std", s.ed_std},   {"pairs", s.pair_count}};
}

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

const MetaevalSettings& metaeval_settings(const RunConfig& config) {
  if (!config.metaeval) throw Error(ErrorCode::MissingKey, "config has no \"metaeval\" section");
  return *config.metaeval;
}

std::vector<std::string> required_concepts(const MetaevalSettings& m) {
  if (m.concepts.empty()) throw Error(ErrorCode::MissingKey, "metaeval.concepts is empty");
  return m.concepts;
}

std::vector<std::pair<std::size_t, std::string>> required_class_neurons(const MetaevalSettings& m) {
  if (m.class_neurons.empty()) throw Error(ErrorCode::MissingKey, "metaeval.class_neurons is empty");
  std::vector<std::pair<std::size_t, std::string>> out;
  for (const auto& [cls, neuron] : m.class_neurons) out.emplace_back(neuron, cls);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Image> images_of_class(const ImageFolder& folder, const std::string& cls) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < folder.images.size(); ++i) {
    if (folder.classes[i] == cls) out.push_back(folder.images[i]);
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "no natural images for class \"" + cls + "\"");
  return out;
}

}  // namespace

std::unique_ptr<ModelAdapter> make_adapter(const std::string& model_id) {
  if (model_id == ToyColorModel::kModelId) return std::make_unique<ToyColorModel>();
  throw Error(ErrorCode::InvalidConfig, "unknown model \"" + model_id + "\"");
}

std::unique_ptr<ImageGenerator> make_generator(const RunConfig& config) {
  auto gen = std::make_unique<ImageGenerator>(
      config.cache_dir, static_cast<std::size_t>(std::max(1, config.generator_backend.max_in_flight)));
  gen->register_backend(make_backend(config.generator_backend));
  return gen;
}

void validate_run(const RunConfig& config, const std::vector<ExplanationRecord>& records) {
  const auto adapter = make_adapter(config.model_id);
  const auto known = adapter->list_layers();
  for (const auto& layer : layers_of(config, records)) {
    if (std::find(known.begin(), known.end(), layer) == known.end()) {
      throw Error(ErrorCode::UnknownLayer, "model " + config.model_id + " has no layer \"" + layer + "\"");
    }
  }
}

fs::path store_dir(const RunConfig& config, const std::string& layer_id, SourceTag source) {
  return fs::path(config.output_dir) / "stores" / layer_id / std::string(to_string(source));
}

GenerateSummary run_generate(const RunConfig& config, const std::vector<ExplanationRecord>& records,
                             const std::optional<fs::path>& export_dir) {
  validate_run(config, records);
  auto gen = make_generator(config);
  GenerateSummary summary;
  for (const auto& text : distinct(records, [](const auto& r) -> const std::string& { return r.text; })) {
    const auto batch = gen->generate_images(spec_for(config, text));
    if (export_dir) export_batch(batch, *export_dir / text);
    ++summary.concepts;
    summary.images += batch.size();
  }
  summary.backend_calls = gen->backend_calls();
  return summary;
}

std::vector<fs::path> run_collect(const RunConfig& config, const std::vector<ExplanationRecord>& records) {
  validate_run(config, records);
  const auto adapter = make_adapter(config.model_id);
  auto gen = make_generator(config);
  const auto control = load_image_folder(config.control_dataset_path);

  std::vector<fs::path> written;
  for (const auto& layer : layers_of(config, records)) {
    const auto control_dir = store_dir(config, layer, SourceTag::Control);
    write_store(collect_folder(*adapter, layer, control), control_dir);
    written.push_back(control_dir);

    std::optional<ActivationStore> synthetic;
    std::set<std::string> done;
    for (const auto& r : records) {
      if (r.layer_id != layer || !done.insert(r.text).second) continue;
      auto part = collect_batch(*adapter, layer, gen->generate_images(spec_for(config, r.text)),
                                SourceTag::Synthetic);
      if (synthetic) {
        synthetic->append(part);
      } else {
        synthetic = std::move(part);
      }
    }
    if (synthetic) {
      const auto synthetic_dir = store_dir(config, layer, SourceTag::Synthetic);
      write_store(*synthetic, synthetic_dir);
      written.push_back(synthetic_dir);
    }
  }
  return written;
}

ReportDocument run_score(const RunConfig& config, const std::vector<ExplanationRecord>& records) {
  validate_run(config, records);
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no explanations to score");

  ReportDocument doc;
  doc.metadata = metadata_for(config, "score");
  std::vector<CellKey> cells;
  std::set<std::pair<std::string, std::string>> seen_cells;
  for (const auto& layer :
       distinct(records, [](const auto& r) -> const std::string& { return r.layer_id; })) {
    const auto control = read_store(store_dir(config, layer, SourceTag::Control));
    const auto synthetic = read_store(store_dir(config, layer, SourceTag::Synthetic));
    for (const auto& r : records) {
      if (r.layer_id != layer) continue;
      doc.scores.push_back(evaluate_explanation(r, control, synthetic, config.tie_policy));
      if (seen_cells.insert({r.layer_id, r.method_id}).second) {
        cells.push_back(CellKey{r.layer_id, r.method_id});
      }
    }
  }
  doc.table = benchmark(config.dataset_id, config.model_id, doc.scores, cells);
  return doc;
}

ReportDocument run_benchmark(const RunConfig& config, const std::vector<ExplanationRecord>& records) {
  run_generate(config, records);
  run_collect(config, records);
  auto doc = run_score(config, records);
  doc.metadata.command = "benchmark";
  return doc;
}

ReportDocument run_metaeval(const RunConfig& config, std::string_view suite) {
  if (std::find(std::begin(kMetaevalSuites), std::end(kMetaevalSuites), suite) ==
      std::end(kMetaevalSuites)) {
    throw Error(ErrorCode::InvalidValue, "unknown suite \"" + std::string(suite) + "\"");
  }
  validate_run(config, {});
  const auto& settings = metaeval_settings(config);
  const auto adapter = make_adapter(config.model_id);
  auto gen = make_generator(config);
  MockEmbedder embedder;

  Pipeline pipeline;
  pipeline.generator = gen.get();
  pipeline.adapter = adapter.get();
  pipeline.layer_id = config.layer_id;
  pipeline.backend_id = backend_id(config);
  pipeline.prompt_template = config.prompt_template;
  pipeline.images_per_concept = config.images_per_concept;
  pipeline.tie_policy = config.tie_policy;
  pipeline.seed = config.global_seed;

  auto natural = [&] {
    return load_image_folder(settings.natural_dir.empty() ? config.control_dataset_path
                                                          : settings.natural_dir);
  };
  auto control_store = [&] {
    return collect_folder(*adapter, config.layer_id, load_image_folder(config.control_dataset_path));
  };

  ReportDocument doc;
  doc.metadata = metadata_for(config, "metaeval " + std::string(suite));
  json body = json::array();

  if (suite == "similarity") {
    const auto concepts = required_concepts(settings);
    const auto folder = natural();
    for (const auto& c : concepts) {
      const auto synthetic = pipeline.images(c, pipeline.seed).images;
      body.push_back({{"concept", c},
                      {"cross", stats_json(cross_set_similarity(images_of_class(folder, c), synthetic,
                                                                embedder))},
                      {"intraclass", stats_json(intraclass_similarity(synthetic, embedder))}});
    }
  } else if (suite == "response") {
    const auto folder = natural();
    std::vector<ClassResponseInput> inputs;
    for (const auto& [neuron, cls] : required_class_neurons(settings)) {
      inputs.push_back({cls, neuron, images_of_class(folder, cls), pipeline.images(cls, pipeline.seed).images});
    }
    doc.distributions = natural_vs_synthetic_response(*adapter, config.layer_id, inputs);
    for (const auto& r : doc.distributions) {
      body.push_back({{"class", r.class_name}, {"neuron", r.neuron_index}, {"mad", r.mad}});
    }
  } else if (suite == "sanity") {
    const auto labels = required_class_neurons(settings);
    const auto concepts = required_concepts(settings);
    const auto report = sanity_check(labels, concepts, control_store(), pipeline);
    for (const auto& row : report.rows) {
      auto t = row.true_score;
      t.method_id = "true";
      auto r = row.random_score;
      r.method_id = "random";
      doc.scores.push_back(t);
      doc.scores.push_back(r);
      body.push_back({{"neuron", row.neuron_index},
                      {"true_concept", row.true_concept},
                      {"random_concept", row.random_concept}});
    }
    doc.table = benchmark(config.dataset_id, config.model_id, doc.scores);
  } else if (suite == "stability") {
    const auto control = control_store();
    if (!settings.seeds.empty()) doc.metadata.seeds = settings.seeds;
    for (const auto& [neuron, cls] : required_class_neurons(settings)) {
      const auto r = seed_stability(cls, neuron, doc.metadata.seeds, control, pipeline, embedder);
      body.push_back({{"concept", r.concept_text},
                      {"neuron", r.neuron_index},
                      {"aucs", r.aucs},
                      {"auc", summary_json(r.auc)},
                      {"cs", summary_json(r.cs)},
                      {"ed", summary_json(r.ed)}});
    }
  } else {
    if (settings.taxonomy_path.empty()) {
      throw Error(ErrorCode::MissingKey, "metaeval.taxonomy_path is required for broadness");
    }
    const auto taxonomy = load_taxonomy(settings.taxonomy_path);
    std::vector<std::string> concepts = settings.concepts;
    if (concepts.empty()) {
      for (const auto& [name, chain] : taxonomy) concepts.push_back(name);
    }
    for (const auto& c : concepts) {
      const auto it = taxonomy.find(c);
      if (it == taxonomy.end()) {
        throw Error(ErrorCode::MissingKey, "taxonomy has no chain for \"" + c + "\"");
      }
      const auto r = concept_broadness(it->second, pipeline, embedder);
      json levels = json::array();
      for (const auto& level : r.levels) {
        levels.push_back({{"concept", level.concept_text},
                          {"hypernym_count", level.hypernym_count},
                          {"intraclass", stats_json(level.stats)}});
      }
      body.push_back({{"concept", c},
                      {"levels", levels},
                      {"spearman", r.spearman ? json(*r.spearman) : json(nullptr)}});
    }
  }
  doc.suites[std::string(suite)] = std::move(body);
  return doc;
}

std::vector<ExplanationRecord> run_explain(const RunConfig& config) {
  if (!config.explain) throw Error(ErrorCode::MissingKey, "config has no \"explain\" section");
  const auto& s = *config.explain;
  const auto store = read_store(s.probe_store);

  std::vector<std::size_t> neurons = s.neurons;
  if (neurons.empty()) {
    for (std::size_t k = 0; k < store.neuron_count; ++k) neurons.push_back(k);
  }
  for (auto k : neurons) {
    if (k >= store.neuron_count) {
      throw Error(ErrorCode::NeuronOutOfRange,
                  "neuron " + std::to_string(k) + " of " + std::to_string(store.neuron_count));
    }
  }

  std::vector<ExplanationRecord> out;
  std::string method_id;
  if (s.method == "invert") {
    method_id = "INVERT";
    const auto dataset = ingest_concept_dataset(s.concept_dataset);
    if (dataset.num_images() != store.row_count()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "concept dataset has " + std::to_string(dataset.num_images()) +
                      " images, probe store " + std::to_string(store.row_count()) + " rows");
    }
    for (auto k : neurons) {
      const auto values = store.extract(k).values;
      const auto r = invert_explain(values, dataset, s.max_length, s.beam_width, config.tie_policy);
      out.push_back({method_id, store.layer_id, k, render_formula(r.formula, dataset.concept_names())});
    }
  } else if (s.method == "softwpmi") {
    method_id = "SoftWPMI";
    const auto sim = parse_similarity_matrix(io::read_file(s.similarity_matrix));
    if (sim.image_refs.size() != store.row_count()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "similarity matrix has " + std::to_string(sim.image_refs.size()) +
                      " images, probe store " + std::to_string(store.row_count()) + " rows");
    }
    const SoftWpmiConfig cfg{s.lambda, s.top_k, s.temperature, s.binary_membership};
    for (auto k : neurons) {
      const auto values = store.extract(k).values;
      const auto r = softwpmi_label(values, sim, cfg);
      out.push_back({method_id, store.layer_id, k, sim.concept_names[r.concept_index]});
    }
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown explain method \"" + s.method + "\"");
  }
  io::write_file_atomic(fs::path(config.output_dir) / ("explanations_" + s.method + ".csv"),
                        export_explanations(out));
  return out;
}

void check_report_matches(const ReportDocument& doc, const RunConfig& config) {
  const auto expected = hex64(config.hash());
  if (doc.metadata.config_hash != expected) {
    throw Error(ErrorCode::ConfigHashMismatch, "report was produced by config " +
                                                   doc.metadata.config_hash + ", not " + expected);
  }
}

}  // namespace cosy
