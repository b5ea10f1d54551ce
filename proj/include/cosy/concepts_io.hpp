#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cosy/prompt.hpp"

namespace cosy {

// One claim "neuron `neuron_index` of `layer_id` is described by `text`",
// produced by explanation method `method_id`.
struct ExplanationRecord {
  std::string method_id;
  std::string layer_id;
  std::size_t neuron_index = 0;
  std::string text;

  friend bool operator==(const ExplanationRecord&, const ExplanationRecord&) = default;
};

// Binary image x concept label matrix. Every concept column holds at least one
// positive and one negative image.
class ConceptDataset {
 public:
  ConceptDataset(std::vector<std::string> concept_names, std::vector<std::string> image_refs,
                 std::vector<std::uint8_t> labels);

  const std::vector<std::string>& concept_names() const { return concept_names_; }
  const std::vector<std::string>& image_refs() const { return image_refs_; }
  std::size_t num_images() const { return image_refs_.size(); }
  std::size_t num_concepts() const { return concept_names_.size(); }

  std::uint8_t label(std::size_t image, std::size_t concept_index) const {
    return labels_[image * concept_names_.size() + concept_index];
  }
  std::vector<std::uint8_t> column(std::size_t concept_index) const;

 private:
  std::vector<std::string> concept_names_;
  std::vector<std::string> image_refs_;
  std::vector<std::uint8_t> labels_;  // row-major, images x concepts
};

// A concept and its hypernyms, most specific parent first, root last.
struct TaxonomyChain {
  std::string concept_name;
  std::vector<std::string> hypernyms;

  std::size_t broadness() const { return hypernyms.size(); }
};

enum class TiePolicy { Strict, Midrank };

std::string_view to_string(TiePolicy policy);

enum class BackendKind { Mock, Directory, Http };

struct BackendSettings {
  BackendKind kind = BackendKind::Mock;
  std::string directory;  // directory backend: root of pre-rendered images
  std::string url;        // http backend: full endpoint URL
  int timeout_ms = 60000;
  int retries = 2;
  int max_in_flight = 4;
};

struct ExplainSettings {
  std::string method;  // "invert" | "softwpmi"
  std::string probe_store;
  std::string concept_dataset;    // invert
  std::string similarity_matrix;  // softwpmi
  std::vector<std::size_t> neurons;  // empty = every neuron in the store
  std::size_t max_length = 3;
  std::size_t beam_width = 5;
  double lambda = 1.0;
  std::size_t top_k = 10;
  double temperature = 0.1;
  bool binary_membership = false;
};

struct MetaevalSettings {
  std::vector<std::string> concepts;
  std::map<std::string, std::size_t> class_neurons;
  std::string natural_dir;
  std::vector<std::uint64_t> seeds;
  std::string taxonomy_path;
};

struct RunConfig {
  std::string control_dataset_path;
  BackendSettings generator_backend;
  PromptTemplate prompt_template = builtin_template(kDefaultObjectTemplate);
  std::size_t images_per_concept = 50;
  std::uint64_t global_seed = 0;
  TiePolicy tie_policy = TiePolicy::Strict;
  std::string model_id;
  std::string layer_id;
  std::string output_dir;
  std::string dataset_id;  // defaults to the control directory name
  std::string cache_dir;   // defaults to <output_dir>/cache
  std::optional<ExplainSettings> explain;
  std::optional<MetaevalSettings> metaeval;

  // Normalised form with defaults applied; the config hash is taken over
  // its serialisation.
  nlohmann::json canonical;

  std::uint64_t hash() const;
};

std::vector<ExplanationRecord> ingest_explanations(const std::filesystem::path& path);
std::vector<ExplanationRecord> parse_explanations(std::string_view csv_text);
std::string serialize_explanations(const std::vector<ExplanationRecord>& records);

ConceptDataset ingest_concept_dataset(const std::filesystem::path& path);
ConceptDataset parse_concept_dataset(std::string_view csv_text);

// Relative paths inside the config are resolved against the config file's
// directory.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::string_view json_text,
                       const std::filesystem::path& base_dir = {});

std::map<std::string, TaxonomyChain> load_taxonomy(const std::filesystem::path& path);
std::map<std::string, TaxonomyChain> parse_taxonomy(std::string_view json_text);

}  // namespace cosy
