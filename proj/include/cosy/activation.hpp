#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cosy/image.hpp"
#include "cosy/imagegen.hpp"

namespace cosy {

// Activations of one layer for one input: k neurons, each an h x w plane.
// Scalar neurons are 1 x 1; token-based layers expose tokens as a 1 x T plane
// without the classification token.
struct FeatureMap {
  std::size_t neurons = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // neuron-major, then row-major plane

  FeatureMap() = default;
  FeatureMap(std::size_t k, std::size_t h, std::size_t w)
      : neurons(k), height(h), width(w), values(k * h * w, 0.0) {}

  std::span<const double> plane(std::size_t neuron) const {
    return {values.data() + neuron * height * width, height * width};
  }
  std::span<double> plane(std::size_t neuron) {
    return {values.data() + neuron * height * width, height * width};
  }
};

// Model-specific input tensor, channel-major.
struct ModelInput {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;
};

// The framework's only view of a network. Implementations own their
// preprocessing and must return identical (k, h, w) for every map of a call.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;
  virtual std::string model_id() const = 0;
  virtual std::vector<std::string> list_layers() const = 0;
  virtual ModelInput preprocess(const Image& image) const = 0;
  virtual std::vector<FeatureMap> activations(std::span<const ModelInput> batch,
                                              std::string_view layer_id) const = 0;
};

// Four colour neurons on any RGB image scaled to [0, 1]:
//   n0 = mean red, n1 = mean green, n2 = mean blue, n3 = mean red - mean blue.
// Layer "avgpool" returns them as 1x1 maps; layer "features" returns the
// per-pixel values as a 4 x H x W map, which average-pools to the same numbers.
class ToyColorModel final : public ModelAdapter {
 public:
  static constexpr std::string_view kModelId = "toy-color";
  static constexpr std::size_t kNeurons = 4;

  std::string model_id() const override { return std::string(kModelId); }
  std::vector<std::string> list_layers() const override { return {"avgpool", "features"}; }
  ModelInput preprocess(const Image& image) const override;
  std::vector<FeatureMap> activations(std::span<const ModelInput> batch,
                                      std::string_view layer_id) const override;
};

// Average pooling over the neuron's spatial plane.
double pool_spatial(const FeatureMap& map, std::size_t neuron_index);

enum class SourceTag { Control, Synthetic };

std::string_view to_string(SourceTag tag);
SourceTag source_tag_from_string(std::string_view text);

struct RowProvenance {
  SourceTag source = SourceTag::Control;
  std::optional<std::string> concept_text;
  std::string image_ref;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const RowProvenance&, const RowProvenance&) = default;
};

// Pooled activations of one neuron over a tagged image set.
struct ActivationSet {
  std::size_t neuron_index = 0;
  std::vector<double> values;
  SourceTag source = SourceTag::Control;
  std::optional<std::string> concept_text;
};

// Images x neurons matrix of pooled activations with per-row provenance.
// Persisted as <dir>/manifest.json + <dir>/activations.bin (row-major
// little-endian float32).
struct ActivationStore {
  static constexpr int kVersion = 1;
  static constexpr std::string_view kDtype = "f32le";

  std::string model_id;
  std::string layer_id;
  std::size_t neuron_count = 0;
  std::vector<RowProvenance> rows;
  std::vector<float> values;

  std::size_t row_count() const { return rows.size(); }
  float value(std::size_t row, std::size_t neuron) const {
    return values[row * neuron_count + neuron];
  }

  // Appends the rows of `other`; model, layer and k must match (StoreMismatch).
  void append(const ActivationStore& other);

  // Column of `neuron` over rows whose provenance satisfies the filters.
  ActivationSet extract(std::size_t neuron, std::optional<SourceTag> source = std::nullopt,
                        const std::optional<std::string>& concept_text = std::nullopt,
                        const std::optional<std::string>& exclude_concept = std::nullopt) const;
};

// One store row per image: pooled activation of every neuron of `layer_id`.
// Images are pushed through the adapter in chunks of `batch_size`.
ActivationStore collect_activations(const ModelAdapter& adapter, std::string_view layer_id,
                                    std::span<const Image> images,
                                    std::span<const RowProvenance> provenance,
                                    std::size_t batch_size = 32);

// Convenience wrappers building provenance from the image source.
ActivationStore collect_batch(const ModelAdapter& adapter, std::string_view layer_id,
                              const ImageBatch& batch, SourceTag source);
ActivationStore collect_folder(const ModelAdapter& adapter, std::string_view layer_id,
                               const ImageFolder& folder);

void write_store(const ActivationStore& store, const std::filesystem::path& dir);
ActivationStore read_store(const std::filesystem::path& dir);

}  // namespace cosy
