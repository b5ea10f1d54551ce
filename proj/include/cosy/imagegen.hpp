#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cosy/concepts_io.hpp"
#include "cosy/image.hpp"
#include "cosy/prompt.hpp"

namespace cosy {

struct GenerationSpec {
  std::string concept_text;
  PromptTemplate prompt_template;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::string backend_id = "mock";
};

// Identifies one cached image. Two keys with equal fields hash equally on
// every platform: the hash is FNV-1a-64 over a fixed byte serialisation.
struct CacheKey {
  std::string backend_id;
  std::string pattern;
  std::string concept_text;
  std::uint64_t seed = 0;
  std::size_t index = 0;

  // Everything except the index; names the cache directory.
  std::string prefix() const;
  std::string serialize() const;
  std::uint64_t prefix_hash() const;
  std::uint64_t hash() const;

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

struct ImageBatch {
  std::vector<Image> images;
  std::vector<CacheKey> provenance;

  std::size_t size() const { return images.size(); }
  // Throws InvalidValue unless |images| == |provenance| and all images share
  // dimensions.
  void validate() const;
};

inline constexpr std::size_t kMockImageSize = 64;
inline constexpr int kMockNoiseAmplitude = 16;

// Deterministic 64x64 stand-in for a text-to-image model. Base colour comes
// from the low three bytes of FNV-1a-64(concept_text) (R = byte 0); every
// channel of every pixel adds noise in [-16, 16] drawn from a SplitMix64
// stream seeded with seed ^ FNV-1a-64(concept_text) ^ index, then clamps to
// [0, 255]. Pixels are visited row-major, channels in R, G, B order, one draw
// each: noise = next() % 33 - 16.
Image mock_generate(std::string_view concept_text, std::uint64_t seed, std::size_t index);

// Base colour of a concept under the mock generator.
std::array<std::uint8_t, 3> mock_base_color(std::string_view concept_text);

struct GenerationRequest {
  std::string prompt;
  std::string concept_text;
  std::uint64_t batch_seed = 0;
  std::size_t index = 0;

  // Per-image seed; growing a batch appends images instead of reshuffling.
  std::uint64_t image_seed() const { return batch_seed ^ static_cast<std::uint64_t>(index); }
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual std::string id() const = 0;
  // Must be safe to call concurrently.
  virtual Image generate(const GenerationRequest& request) = 0;
};

class MockBackend final : public GenerationBackend {
 public:
  std::string id() const override { return "mock"; }
  Image generate(const GenerationRequest& request) override {
    return mock_generate(request.concept_text, request.batch_seed, request.index);
  }
};

// Serves pre-rendered PNGs. Images for a concept come from
// <root>/<concept_text>/ when that directory exists, otherwise from <root>
// itself; index i is the i-th *.png in filename order.
class DirectoryBackend final : public GenerationBackend {
 public:
  explicit DirectoryBackend(std::filesystem::path root) : root_(std::move(root)) {}
  std::string id() const override { return "directory"; }
  Image generate(const GenerationRequest& request) override;

 private:
  const std::vector<std::filesystem::path>& files_for(const std::string& concept_text);

  std::filesystem::path root_;
  std::mutex mutex_;
  std::map<std::string, std::vector<std::filesystem::path>> listing_;
};

// POSTs {"prompt", "seed", "count": 1} per image to an endpoint answering with
// a JSON array of base64 PNGs, an {"images": [...]} object, a raw image/png
// body, or a multipart body of PNG parts.
class HttpBackend final : public GenerationBackend {
 public:
  HttpBackend(std::string url, int timeout_ms, int retries);
  std::string id() const override { return "http"; }
  Image generate(const GenerationRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  int timeout_ms_;
  int retries_;
};

// Splits an HTTP generation response into raw PNG byte strings.
std::vector<std::string> parse_generation_response(std::string_view content_type,
                                                   std::string_view body);

std::string base64_decode(std::string_view text);

std::shared_ptr<GenerationBackend> make_backend(const BackendSettings& settings);

// Cache-first batch generation. Cache layout:
//   <cache_root>/<hex FNV-1a-64 of key prefix>/<index>.png
// plus a key.json describing the prefix. Misses are generated with at most
// `max_in_flight` concurrent backend calls and written by atomic rename.
class ImageGenerator {
 public:
  ImageGenerator(std::filesystem::path cache_root, std::size_t max_in_flight = 4);

  void register_backend(std::shared_ptr<GenerationBackend> backend);

  ImageBatch generate_images(const GenerationSpec& spec);

  std::filesystem::path cache_path(const CacheKey& key) const;
  const std::filesystem::path& cache_root() const { return cache_root_; }

  // Number of backend invocations since construction.
  std::size_t backend_calls() const { return backend_calls_.load(); }

 private:
  std::filesystem::path cache_root_;
  std::size_t max_in_flight_;
  std::map<std::string, std::shared_ptr<GenerationBackend>> backends_;
  std::atomic<std::size_t> backend_calls_{0};
};

// A folder of natural images, e.g. the control dataset. All *.png files below
// the root in relative-path order; the class label of an image is the name of
// its parent directory relative to the root (empty at top level).
struct ImageFolder {
  std::vector<Image> images;
  std::vector<std::string> refs;
  std::vector<std::string> classes;
};

ImageFolder load_image_folder(const std::filesystem::path& root);

// Writes images as <dir>/<index, zero-padded to 5 digits>.png so filename
// order equals index order.
void export_batch(const ImageBatch& batch, const std::filesystem::path& dir);

}  // namespace cosy
