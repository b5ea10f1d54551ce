#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "cosy/activation.hpp"
#include "cosy/error.hpp"
#include "cosy/io.hpp"
#include "support/fixtures.hpp"

namespace cosy {
namespace {

namespace fs = std::filesystem;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

std::vector<RowProvenance> provenance(std::size_t n, SourceTag tag = SourceTag::Control) {
  std::vector<RowProvenance> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back({tag, "c", "img" + std::to_string(i), i});
  return rows;
}

TEST(PoolSpatial, Examples) {
  FeatureMap constant(1, 2, 2);
  std::fill(constant.values.begin(), constant.values.end(), 5.0);
  EXPECT_DOUBLE_EQ(pool_spatial(constant, 0), 5.0);

  FeatureMap grid(1, 2, 2);
  grid.values = {1, 2, 3, 4};
  EXPECT_NEAR(pool_spatial(grid, 0), 2.5, 1e-12);

  FeatureMap scalar(1, 1, 1);
  scalar.values = {7.0};
  EXPECT_DOUBLE_EQ(pool_spatial(scalar, 0), 7.0);

  EXPECT_EQ(code_of([&] { pool_spatial(grid, 1); }), ErrorCode::IndexOutOfRange);
}

TEST(PoolSpatial, Linearity) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 200; ++trial) {
    FeatureMap m(2, 1 + rng() % 5, 1 + rng() % 5);
    for (auto& v : m.values) v = u(rng);
    const double a = u(rng), b = u(rng);
    FeatureMap t = m;
    for (auto& v : t.values) v = a * v + b;
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_NEAR(pool_spatial(t, k), a * pool_spatial(m, k) + b, 1e-9);
    }
  }
}

TEST(ToyColorModel, PureRedImage) {
  ToyColorModel model;
  const std::vector<Image> images{solid_image(8, 8, 255, 0, 0)};
  for (const auto* layer : {"avgpool", "features"}) {
    const auto store = collect_activations(model, layer, images, provenance(1));
    ASSERT_EQ(store.neuron_count, 4u);
    EXPECT_NEAR(store.value(0, 0), 1.0, 1e-6);
    EXPECT_NEAR(store.value(0, 1), 0.0, 1e-6);
    EXPECT_NEAR(store.value(0, 2), 0.0, 1e-6);
    EXPECT_NEAR(store.value(0, 3), 1.0, 1e-6);
  }
}

TEST(ToyColorModel, LayersAgreeWithPixelOracle) {
  ToyColorModel model;
  std::vector<Image> images;
  for (std::size_t i = 0; i < 6; ++i) images.push_back(mock_generate("ocean", 2, i));
  const auto pooled = collect_activations(model, "avgpool", images, provenance(6));
  const auto spatial = collect_activations(model, "features", images, provenance(6), 4);
  for (std::size_t r = 0; r < images.size(); ++r) {
    const auto expected = testing::color_neurons(images[r]);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(pooled.value(r, k), expected[k], 1e-6);
      EXPECT_NEAR(spatial.value(r, k), expected[k], 1e-6);
    }
  }
}

TEST(ToyColorModel, MockMeanRedTracksBaseColour) {
  ToyColorModel model;
  for (const auto& c : testing::candidate_concepts()) {
    std::vector<Image> images;
    for (std::size_t i = 0; i < 50; ++i) images.push_back(mock_generate(c, 0, i));
    const auto store = collect_activations(model, "avgpool", images, provenance(50));
    const auto col = store.extract(0).values;
    double mean = 0;
    for (double v : col) mean += v;
    mean /= col.size();
    const double base = mock_base_color(c)[0] / 255.0;
    EXPECT_NEAR(mean, base, 0.01) << c;
  }
}

class NanModel : public ModelAdapter {
 public:
  std::string model_id() const override { return "nan"; }
  std::vector<std::string> list_layers() const override { return {"l"}; }
  ModelInput preprocess(const Image&) const override { return {1, 1, 1, {0.0f}}; }
  std::vector<FeatureMap> activations(std::span<const ModelInput> batch, std::string_view) const override {
    std::vector<FeatureMap> out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      FeatureMap m(1, 1, 1);
      m.values[0] = 0.0;
      out.push_back(m);
    }
    if (out.size() > 1) out[1].values[0] = std::nan("");
    return out;
  }
};

class ThrowingModel : public NanModel {
 public:
  std::vector<FeatureMap> activations(std::span<const ModelInput>, std::string_view) const override {
    throw std::runtime_error("device lost");
  }
};

TEST(CollectActivations, Errors) {
  ToyColorModel model;
  const std::vector<Image> images{solid_image(2, 2, 1, 2, 3), solid_image(2, 2, 1, 2, 3)};
  EXPECT_EQ(code_of([&] { collect_activations(model, "layer9", images, provenance(2)); }),
            ErrorCode::UnknownLayer);
  EXPECT_EQ(code_of([&] { collect_activations(model, "avgpool", std::span<const Image>{}, provenance(0)); }),
            ErrorCode::EmptyInput);
  EXPECT_EQ(code_of([&] { collect_activations(NanModel(), "l", images, provenance(2)); }),
            ErrorCode::NonFiniteActivation);
  try {
    collect_activations(NanModel(), "l", images, provenance(2));
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([&] { collect_activations(ThrowingModel(), "l", images, provenance(2)); }),
            ErrorCode::AdapterFailure);
}

TEST(CollectActivations, PermutationEquivariance) {
  ToyColorModel model;
  std::vector<Image> images;
  for (std::size_t i = 0; i < 12; ++i) images.push_back(mock_generate(i % 2 ? "sand" : "coal", 5, i));
  std::vector<std::size_t> perm(images.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  std::vector<Image> shuffled;
  for (auto p : perm) shuffled.push_back(images[p]);
  const auto a = collect_activations(model, "avgpool", images, provenance(12), 5);
  const auto b = collect_activations(model, "avgpool", shuffled, provenance(12), 3);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(std::bit_cast<std::uint32_t>(b.value(r, k)), std::bit_cast<std::uint32_t>(a.value(perm[r], k)));
    }
  }
}

ActivationStore random_store(std::size_t rows, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 3.0f);
  ActivationStore s;
  s.model_id = "toy-color";
  s.layer_id = "avgpool";
  s.neuron_count = k;
  for (std::size_t r = 0; r < rows; ++r) {
    RowProvenance p{r % 3 ? SourceTag::Synthetic : SourceTag::Control, std::nullopt,
                    "ref/" + std::to_string(r), std::nullopt};
    if (r % 2) p.concept_text = "concept \"" + std::to_string(r % 5) + "\"";
    if (r % 4) p.seed = 0xfffffffffffffff0ULL + r % 7;
    s.rows.push_back(p);
  }
  for (std::size_t i = 0; i < rows * k; ++i) s.values.push_back(dist(rng));
  s.values[0] = -0.0f;
  s.values[1] = std::numeric_limits<float>::denorm_min();
  return s;
}

TEST(Store, RoundTripIsBitExact) {
  testing::TempDir dir;
  const auto store = random_store(3, 4, 1);
  write_store(store, dir / "s");
  const auto back = read_store(dir / "s");
  EXPECT_EQ(back.model_id, store.model_id);
  EXPECT_EQ(back.layer_id, store.layer_id);
  EXPECT_EQ(back.neuron_count, 4u);
  EXPECT_EQ(back.rows, store.rows);
  ASSERT_EQ(back.values.size(), store.values.size());
  for (std::size_t i = 0; i < store.values.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.values[i]), std::bit_cast<std::uint32_t>(store.values[i]));
  }
  const auto bytes = io::read_file(dir / "s" / "activations.bin");
  ASSERT_EQ(bytes.size(), 3u * 4u * 4u);
  const auto bits = std::bit_cast<std::uint32_t>(store.values[5]);
  for (int b = 0; b < 4; ++b) {
    EXPECT_EQ(static_cast<std::uint8_t>(bytes[5 * 4 + b]), (bits >> (8 * b)) & 0xFF);
  }
}

TEST(Store, RejectsCorruption) {
  testing::TempDir dir;
  write_store(random_store(3, 4, 2), dir / "s");
  const auto matrix = io::read_file(dir / "s" / "activations.bin");
  const auto manifest_text = io::read_file(dir / "s" / "manifest.json");

  std::ofstream(dir / "s" / "activations.bin", std::ios::binary) << matrix.substr(0, matrix.size() - 1);
  EXPECT_EQ(code_of([&] { read_store(dir / "s"); }), ErrorCode::LengthMismatch);
  std::ofstream(dir / "s" / "activations.bin", std::ios::binary) << matrix;

  auto manifest = nlohmann::json::parse(manifest_text);
  manifest["row_count"] = manifest["row_count"].get<int>() + 1;
  std::ofstream(dir / "s" / "manifest.json") << manifest.dump();
  EXPECT_EQ(code_of([&] { read_store(dir / "s"); }), ErrorCode::LengthMismatch);

  manifest = nlohmann::json::parse(manifest_text);
  manifest["version"] = 2;
  std::ofstream(dir / "s" / "manifest.json") << manifest.dump();
  EXPECT_EQ(code_of([&] { read_store(dir / "s"); }), ErrorCode::VersionMismatch);

  std::ofstream(dir / "s" / "manifest.json") << "{ broken";
  EXPECT_EQ(code_of([&] { read_store(dir / "s"); }), ErrorCode::CorruptManifest);
}

TEST(Store, ExtractAndAppend) {
  auto a = random_store(6, 2, 3);
  const auto b = random_store(4, 2, 4);
  const auto synthetic = a.extract(1, SourceTag::Synthetic);
  std::size_t expected = 0;
  for (const auto& row : a.rows) expected += row.source == SourceTag::Synthetic;
  EXPECT_EQ(synthetic.values.size(), expected);
  a.append(b);
  EXPECT_EQ(a.row_count(), 10u);
  EXPECT_EQ(a.value(7, 1), b.value(1, 1));
  auto other = b;
  other.neuron_count = 3;
  other.values.resize(other.row_count() * 3);
  EXPECT_EQ(code_of([&] { a.append(other); }), ErrorCode::StoreMismatch);
  EXPECT_EQ(code_of([&] { a.extract(2); }), ErrorCode::NeuronOutOfRange);
}

}  // namespace
}  // namespace cosy
