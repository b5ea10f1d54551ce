#include "support/fixtures.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "cosy/imagegen.hpp"

namespace cosy::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    char name[64];
    std::snprintf(name, sizeof(name), "cosy-test-%08x%08x", rd(), rd());
    auto candidate = fs::temp_directory_path() / name;
    if (fs::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("could not create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

const std::vector<std::string>& candidate_concepts() {
  static const std::vector<std::string> words{"fire engine", "lemon",  "ocean", "forest", "tomato",
                                              "violet",      "sand",   "coal",  "snow",   "pumpkin"};
  return words;
}

const std::vector<std::string>& fixture_words() {
  static const std::vector<std::string> words = [] {
    const char* stems[] = {"apple", "bridge", "cactus", "dolphin", "engine", "falcon", "guitar",
                           "harbor", "igloo",  "jaguar", "kettle", "lantern", "meadow", "nebula",
                           "orchid", "parrot", "quartz", "rocket", "saddle", "tulip"};
    const char* suffixes[] = {"", " field", " close up", " painting", " toy"};
    std::vector<std::string> out;
    for (const char* s : suffixes) {
      for (const char* stem : stems) out.push_back(std::string(stem) + s);
    }
    return out;
  }();
  return words;
}

void write_mock_folder(const fs::path& root, const std::vector<std::string>& concepts,
                       std::uint64_t seed, std::size_t per_class) {
  for (const auto& c : concepts) {
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%05zu.png", i);
      const auto path = root / c / name;
      fs::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::binary);
      out << encode_png(mock_generate(c, seed, i));
    }
  }
}

std::vector<double> color_neurons(const Image& image) {
  double sum[3] = {0, 0, 0};
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) sum[c] += image.at(x, y, c);
    }
  }
  const double n = static_cast<double>(image.width * image.height) * 255.0;
  const double r = sum[0] / n, g = sum[1] / n, b = sum[2] / n;
  return {r, g, b, r - b};
}

std::size_t argmax_concept(std::size_t neuron, const std::vector<std::string>& candidates,
                           std::uint64_t seed, std::size_t count) {
  std::size_t best = 0;
  double best_mean = -1e300;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      total += color_neurons(mock_generate(candidates[c], seed, i))[neuron];
    }
    const double mean = total / static_cast<double>(count);
    if (mean > best_mean) {
      best_mean = mean;
      best = c;
    }
  }
  return best;
}

std::string mock_config(const fs::path& control, const fs::path& output, const std::string& layer,
                        std::uint64_t seed, const std::string& extra_members) {
  std::string json = "{\n";
  json += "  \"control_dataset_path\": \"" + control.string() + "\",\n";
  json += "  \"generator_backend\": \"mock\",\n";
  json += "  \"model_id\": \"toy-color\",\n";
  json += "  \"layer_id\": \"" + layer + "\",\n";
  json += "  \"output_dir\": \"" + output.string() + "\",\n";
  if (!extra_members.empty()) json += "  " + extra_members + ",\n";
  json += "  \"global_seed\": " + std::to_string(seed) + "\n}\n";
  return json;
}

}  // namespace cosy::testing
