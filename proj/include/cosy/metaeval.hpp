#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cosy/activation.hpp"
#include "cosy/concepts_io.hpp"
#include "cosy/image.hpp"
#include "cosy/imagegen.hpp"
#include "cosy/scoring.hpp"

namespace cosy {

using EmbeddingVector = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  // Deterministic; safe to call concurrently.
  virtual EmbeddingVector embed(const Image& image) const = 0;
};

// Channel statistics with values scaled to [0, 1]:
//   [mean R, mean G, mean B, 4 var R, 4 var G, 4 var B, mean Y, 4 var Y]
// where Y = (R + G + B) / 3 per pixel and variances are population
// variances (x4 keeps them in [0, 1]).
class MockEmbedder final : public EmbeddingProvider {
 public:
  std::size_t dimension() const override { return 8; }
  EmbeddingVector embed(const Image& image) const override;
};

double cosine_similarity(std::span<const double> u, std::span<const double> v);
double euclidean_distance(std::span<const double> u, std::span<const double> v);

struct SimilarityStats {
  double cs_mean = 0.0;
  double cs_std = 0.0;
  double ed_mean = 0.0;
  double ed_std = 0.0;
  std::size_t pair_count = 0;
};

// CS/ED over every natural x synthetic pair.
SimilarityStats cross_set_similarity(std::span<const Image> natural, std::span<const Image> synthetic,
                                     const EmbeddingProvider& provider);

// CS/ED over every unordered pair within one set (at least 2 images).
SimilarityStats intraclass_similarity(std::span<const Image> images,
                                      const EmbeddingProvider& provider);

// Everything needed to turn a concept into scored activations.
struct Pipeline {
  ImageGenerator* generator = nullptr;
  const ModelAdapter* adapter = nullptr;
  std::string layer_id;
  std::string backend_id = "mock";
  PromptTemplate prompt_template = builtin_template(kDefaultObjectTemplate);
  std::size_t images_per_concept = 50;
  TiePolicy tie_policy = TiePolicy::Strict;
  std::uint64_t seed = 0;

  ImageBatch images(const std::string& concept_text, std::uint64_t seed) const;
  ActivationStore synthetic_store(const std::string& concept_text, std::uint64_t seed) const;
};

struct ClassResponseInput {
  std::string class_name;
  std::size_t neuron_index = 0;
  std::vector<Image> natural;
  std::vector<Image> synthetic;
};

struct ClassResponse {
  std::string class_name;
  std::size_t neuron_index = 0;
  double mad = 0.0;  // mean(synthetic) - mean(natural)
  std::vector<double> natural_values;
  std::vector<double> synthetic_values;
};

std::vector<ClassResponse> natural_vs_synthetic_response(const ModelAdapter& adapter,
                                                         const std::string& layer_id,
                                                         std::span<const ClassResponseInput> classes);

// Distribution export: header source_tag,value then one row per activation.
std::string distribution_csv(const ClassResponse& response);

// Uniform pick among `candidates` other than `target`, from a SplitMix64
// stream seeded with `seed`. SingleConceptUniverse when no other candidate
// exists.
std::string pick_random_concept(std::span<const std::string> candidates, const std::string& target,
                                std::uint64_t seed);

struct SanityRow {
  std::size_t neuron_index = 0;
  std::string true_concept;
  std::string random_concept;
  ScoreResult true_score;
  ScoreResult random_score;
};

struct SanityReport {
  std::vector<SanityRow> rows;
  Summary true_auc;
  Summary random_auc;
  Summary true_mad;
  Summary random_mad;
};

// True labels versus one random other candidate per neuron. The random pick
// for neuron i is seeded with pipeline.seed + i. Control rows belonging to the
// class being scored are excluded from the control set.
SanityReport sanity_check(std::span<const std::pair<std::size_t, std::string>> true_labels,
                          std::span<const std::string> candidate_concepts,
                          const ActivationStore& control, const Pipeline& pipeline);

struct StabilityReport {
  std::string concept_text;
  std::size_t neuron_index = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> aucs;  // per seed
  Summary auc;
  Summary cs;  // of per-seed intraclass cs_mean
  Summary ed;  // of per-seed intraclass ed_mean
};

// Regenerates the concept's images under every seed and rescores the neuron.
StabilityReport seed_stability(const std::string& concept_text, std::size_t neuron_index,
                               std::span<const std::uint64_t> seeds, const ActivationStore& control,
                               const Pipeline& pipeline, const EmbeddingProvider& provider);

struct BroadnessLevel {
  std::string concept_text;
  // Depth of the node counted from the root, root = 1; the most specific
  // concept of a chain with h hypernyms gets h + 1.
  std::size_t hypernym_count = 0;
  SimilarityStats stats;
};

struct BroadnessReport {
  std::vector<BroadnessLevel> levels;  // concept first, root last
  std::optional<double> spearman;      // absent for < 2 levels or zero variance
};

BroadnessReport concept_broadness(const TaxonomyChain& chain, const Pipeline& pipeline,
                                  const EmbeddingProvider& provider);

// Spearman rank correlation with average ranks for ties.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

}  // namespace cosy
