#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cosy/image.hpp"

namespace cosy::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);

// Ten candidate concepts used by the desk-scale sanity and benchmark runs.
const std::vector<std::string>& candidate_concepts();

// 100 distinct fixture words.
const std::vector<std::string>& fixture_words();

// Writes `per_class` mock images of every concept as
// <root>/<concept>/NNNNN.png, using `seed` for the noise.
void write_mock_folder(const std::filesystem::path& root, const std::vector<std::string>& concepts,
                       std::uint64_t seed, std::size_t per_class);

// Colour-neuron values of one image computed straight from the pixels:
// mean R, mean G, mean B and mean R - mean B, channels scaled to [0, 1].
std::vector<double> color_neurons(const Image& image);

// Index of the candidate whose mock images have the highest mean value of
// `neuron` over `count` images generated with `seed`.
std::size_t argmax_concept(std::size_t neuron, const std::vector<std::string>& candidates,
                           std::uint64_t seed, std::size_t count);

// Minimal mock-backend config JSON.
std::string mock_config(const std::filesystem::path& control, const std::filesystem::path& output,
                        const std::string& layer, std::uint64_t seed,
                        const std::string& extra_members = "");

}  // namespace cosy::testing
