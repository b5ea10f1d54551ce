#include "cosy/metaeval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cosy/error.hpp"
#include "cosy/hash.hpp"
#include "cosy/io.hpp"

namespace cosy {

EmbeddingVector MockEmbedder::embed(const Image& image) const {
  const std::size_t n = image.width * image.height;
  if (n == 0) throw Error(ErrorCode::InvalidValue, "cannot embed an empty image");
  std::array<double, 4> sum{};
  std::array<double, 4> sq{};
  for (std::size_t p = 0; p < n; ++p) {
    const double r = image.pixels[p * 3 + 0] / 255.0;
    const double g = image.pixels[p * 3 + 1] / 255.0;
    const double b = image.pixels[p * 3 + 2] / 255.0;
    const double y = (r + g + b) / 3.0;
    const std::array<double, 4> ch{r, g, b, y};
    for (std::size_t c = 0; c < 4; ++c) {
      sum[c] += ch[c];
      sq[c] += ch[c] * ch[c];
    }
  }
  std::array<double, 4> mean{};
  std::array<double, 4> var{};
  for (std::size_t c = 0; c < 4; ++c) {
    mean[c] = sum[c] / static_cast<double>(n);
    var[c] = std::max(0.0, sq[c] / static_cast<double>(n) - mean[c] * mean[c]);
  }
  return {mean[0], mean[1], mean[2], 4 * var[0], 4 * var[1], 4 * var[2], mean[3], 4 * var[3]};
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(u.size()) + " vs " +
                                                  std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    throw Error(ErrorCode::ZeroVector, "cosine similarity with a zero vector");
  }
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(u.size()) + " vs " +
                                                  std::to_string(v.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sum += (u[i] - v[i]) * (u[i] - v[i]);
  return std::sqrt(sum);
}

namespace {

std::vector<EmbeddingVector> embed_all(std::span<const Image> images,
                                       const EmbeddingProvider& provider, const char* which) {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      out.push_back(provider.embed(images[i]));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::AdapterFailure,
                  std::string(which) + " image " + std::to_string(i) + ": " + e.what());
    }
    if (out.back().size() != provider.dimension()) {
      throw Error(ErrorCode::DimensionMismatch, std::string(which) + " image " +
                                                    std::to_string(i) + " embedded to wrong size");
    }
  }
  return out;
}

SimilarityStats stats_of(std::span<const double> cs, std::span<const double> ed) {
  const auto c = summarize(cs);
  const auto d = summarize(ed);
  return SimilarityStats{c.mean, c.std, d.mean, d.std, c.count};
}

}  // namespace

SimilarityStats cross_set_similarity(std::span<const Image> natural, std::span<const Image> synthetic,
                                     const EmbeddingProvider& provider) {
  if (natural.empty() || synthetic.empty()) {
    throw Error(ErrorCode::EmptyInput, "cross-set similarity needs two non-empty sets");
  }
  const auto a = embed_all(natural, provider, "natural");
  const auto b = embed_all(synthetic, provider, "synthetic");
  std::vector<double> cs, ed;
  cs.reserve(a.size() * b.size());
  ed.reserve(a.size() * b.size());
  for (const auto& u : a) {
    for (const auto& v : b) {
      cs.push_back(cosine_similarity(u, v));
      ed.push_back(euclidean_distance(u, v));
    }
  }
  return stats_of(cs, ed);
}

SimilarityStats intraclass_similarity(std::span<const Image> images,
                                      const EmbeddingProvider& provider) {
  if (images.size() < 2) {
    throw Error(ErrorCode::EmptyInput, "intraclass similarity needs at least 2 images");
  }
  const auto e = embed_all(images, provider, "intraclass");
  std::vector<double> cs, ed;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      cs.push_back(cosine_similarity(e[i], e[j]));
      ed.push_back(euclidean_distance(e[i], e[j]));
    }
  }
  return stats_of(cs, ed);
}

ImageBatch Pipeline::images(const std::string& concept_text, std::uint64_t batch_seed) const {
  GenerationSpec spec{concept_text, prompt_template, images_per_concept, batch_seed, backend_id};
  return generator->generate_images(spec);
}

ActivationStore Pipeline::synthetic_store(const std::string& concept_text,
                                          std::uint64_t batch_seed) const {
  return collect_batch(*adapter, layer_id, images(concept_text, batch_seed), SourceTag::Synthetic);
}

std::vector<ClassResponse> natural_vs_synthetic_response(const ModelAdapter& adapter,
                                                         const std::string& layer_id,
                                                         std::span<const ClassResponseInput> classes) {
  std::vector<ClassResponse> out;
  for (const auto& cls : classes) {
    if (cls.natural.empty() || cls.synthetic.empty()) {
      throw Error(ErrorCode::EmptyInput, "class \"" + cls.class_name +
                                             "\" needs natural and synthetic images");
    }
    auto provenance = [&](std::size_t count, SourceTag tag) {
      std::vector<RowProvenance> rows;
      for (std::size_t i = 0; i < count; ++i) {
        rows.push_back({tag, cls.class_name,
                        std::string(to_string(tag)) + "/" + cls.class_name + "/" + std::to_string(i),
                        std::nullopt});
      }
      return rows;
    };
    const auto nat = collect_activations(adapter, layer_id, cls.natural,
                                         provenance(cls.natural.size(), SourceTag::Control));
    const auto syn = collect_activations(adapter, layer_id, cls.synthetic,
                                         provenance(cls.synthetic.size(), SourceTag::Synthetic));
    ClassResponse resp;
    resp.class_name = cls.class_name;
    resp.neuron_index = cls.neuron_index;
    resp.natural_values = nat.extract(cls.neuron_index).values;
    resp.synthetic_values = syn.extract(cls.neuron_index).values;
    resp.mad = mad_score(resp.natural_values, resp.synthetic_values);
    out.push_back(std::move(resp));
  }
  return out;
}

std::string distribution_csv(const ClassResponse& response) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  std::string out = "source_tag,value\n";
  for (double v : response.natural_values) out += "natural," + fmt(v) + "\n";
  for (double v : response.synthetic_values) out += "synthetic," + fmt(v) + "\n";
  return out;
}

std::string pick_random_concept(std::span<const std::string> candidates, const std::string& target,
                                std::uint64_t seed) {
  std::vector<std::string> others;
  for (const auto& c : candidates) {
    if (c != target) others.push_back(c);
  }
  if (others.empty()) {
    throw Error(ErrorCode::SingleConceptUniverse, "no candidate other than \"" + target + "\"");
  }
  SplitMix64 rng(seed);
  return others[rng.below(others.size())];
}

SanityReport sanity_check(std::span<const std::pair<std::size_t, std::string>> true_labels,
                          std::span<const std::string> candidate_concepts,
                          const ActivationStore& control, const Pipeline& pipeline) {
  if (candidate_concepts.size() < 2) {
    throw Error(ErrorCode::SingleConceptUniverse, "sanity check needs at least 2 candidate concepts");
  }
  if (true_labels.empty()) throw Error(ErrorCode::EmptyInput, "no true labels given");

  SanityReport report;
  std::vector<double> true_auc, random_auc, true_mad, random_mad;
  for (const auto& [neuron, concept_text] : true_labels) {
    SanityRow row;
    row.neuron_index = neuron;
    row.true_concept = concept_text;
    row.random_concept = pick_random_concept(candidate_concepts, concept_text,
                                             pipeline.seed + static_cast<std::uint64_t>(neuron));

    const auto true_store = pipeline.synthetic_store(row.true_concept, pipeline.seed);
    row.true_score = evaluate_explanation({"true", pipeline.layer_id, neuron, row.true_concept},
                                          control, true_store, pipeline.tie_policy,
                                          row.true_concept);
    const auto random_store = pipeline.synthetic_store(row.random_concept, pipeline.seed);
    row.random_score = evaluate_explanation(
        {"random", pipeline.layer_id, neuron, row.random_concept}, control, random_store,
        pipeline.tie_policy, row.random_concept);

    true_auc.push_back(row.true_score.auc);
    random_auc.push_back(row.random_score.auc);
    true_mad.push_back(row.true_score.mad);
    random_mad.push_back(row.random_score.mad);
    report.rows.push_back(std::move(row));
  }
  report.true_auc = summarize(true_auc);
  report.random_auc = summarize(random_auc);
  report.true_mad = summarize(true_mad);
  report.random_mad = summarize(random_mad);
  return report;
}

StabilityReport seed_stability(const std::string& concept_text, std::size_t neuron_index,
                               std::span<const std::uint64_t> seeds, const ActivationStore& control,
                               const Pipeline& pipeline, const EmbeddingProvider& provider) {
  if (seeds.size() < 2) {
    throw Error(ErrorCode::InvalidValue, "seed stability needs at least 2 seeds");
  }
  StabilityReport report;
  report.concept_text = concept_text;
  report.neuron_index = neuron_index;
  report.seeds.assign(seeds.begin(), seeds.end());
  std::vector<double> cs, ed;
  for (auto seed : seeds) {
    const auto batch = pipeline.images(concept_text, seed);
    const auto store = collect_batch(*pipeline.adapter, pipeline.layer_id, batch, SourceTag::Synthetic);
    const auto score = evaluate_explanation({"stability", pipeline.layer_id, neuron_index, concept_text},
                                            control, store, pipeline.tie_policy, concept_text);
    report.aucs.push_back(score.auc);
    const auto sim = intraclass_similarity(batch.images, provider);
    cs.push_back(sim.cs_mean);
    ed.push_back(sim.ed_mean);
  }
  report.auc = summarize(report.aucs);
  report.cs = summarize(cs);
  report.ed = summarize(ed);
  return report;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "spearman needs equal-length series");
  }
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  auto ranks = [n](std::span<const double> v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i + 1;
      while (j < n && v[order[j]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
      for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
      i = j;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

BroadnessReport concept_broadness(const TaxonomyChain& chain, const Pipeline& pipeline,
                                  const EmbeddingProvider& provider) {
  std::vector<std::string> nodes{chain.concept_name};
  nodes.insert(nodes.end(), chain.hypernyms.begin(), chain.hypernyms.end());

  BroadnessReport report;
  std::vector<double> counts, similarity;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    BroadnessLevel level;
    level.concept_text = nodes[i];
    level.hypernym_count = nodes.size() - i;
    level.stats = intraclass_similarity(pipeline.images(nodes[i], pipeline.seed).images, provider);
    counts.push_back(static_cast<double>(level.hypernym_count));
    similarity.push_back(level.stats.cs_mean);
    report.levels.push_back(std::move(level));
  }
  report.spearman = spearman(counts, similarity);
  return report;
}

}  // namespace cosy
