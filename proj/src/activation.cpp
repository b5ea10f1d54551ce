#include "cosy/activation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <json.hpp>

#include "cosy/error.hpp"
#include "cosy/hash.hpp"
#include "cosy/io.hpp"

namespace cosy {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Toy model

ModelInput ToyColorModel::preprocess(const Image& image) const {
  ModelInput in{3, image.height, image.width, {}};
  in.values.resize(3 * image.height * image.width);
  const std::size_t plane = image.height * image.width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      in.values[c * plane + p] = static_cast<float>(image.pixels[p * 3 + c]) / 255.0f;
    }
  }
  return in;
}

std::vector<FeatureMap> ToyColorModel::activations(std::span<const ModelInput> batch,
                                                   std::string_view layer_id) const {
  const bool spatial = layer_id == "features";
  if (!spatial && layer_id != "avgpool") {
    throw Error(ErrorCode::UnknownLayer, "toy-color has no layer \"" + std::string(layer_id) + "\"");
  }
  std::vector<FeatureMap> out;
  out.reserve(batch.size());
  for (const auto& in : batch) {
    if (in.channels != 3) {
      throw Error(ErrorCode::AdapterFailure, "toy-color expects 3 channels");
    }
    const std::size_t plane = in.height * in.width;
    const auto red = std::span(in.values).subspan(0, plane);
    const auto green = std::span(in.values).subspan(plane, plane);
    const auto blue = std::span(in.values).subspan(2 * plane, plane);
    if (spatial) {
      FeatureMap map(kNeurons, in.height, in.width);
      for (std::size_t p = 0; p < plane; ++p) {
        map.plane(0)[p] = red[p];
        map.plane(1)[p] = green[p];
        map.plane(2)[p] = blue[p];
        map.plane(3)[p] = static_cast<double>(red[p]) - static_cast<double>(blue[p]);
      }
      out.push_back(std::move(map));
    } else {
      double r = 0.0, g = 0.0, b = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        r += red[p];
        g += green[p];
        b += blue[p];
      }
      const auto n = static_cast<double>(plane);
      FeatureMap map(kNeurons, 1, 1);
      map.values = {r / n, g / n, b / n, r / n - b / n};
      out.push_back(std::move(map));
    }
  }
  return out;
}

double pool_spatial(const FeatureMap& map, std::size_t neuron_index) {
  if (neuron_index >= map.neurons) {
    throw Error(ErrorCode::IndexOutOfRange, "neuron " + std::to_string(neuron_index) +
                                                " of a " + std::to_string(map.neurons) +
                                                "-neuron map");
  }
  const auto plane = map.plane(neuron_index);
  if (plane.size() == 1) return plane[0];
  double sum = 0.0;
  for (double v : plane) sum += v;
  return sum / static_cast<double>(plane.size());
}

// ---------------------------------------------------------------------------
// Store

std::string_view to_string(SourceTag tag) {
  return tag == SourceTag::Control ? "control" : "synthetic";
}

SourceTag source_tag_from_string(std::string_view text) {
  if (text == "control") return SourceTag::Control;
  if (text == "synthetic") return SourceTag::Synthetic;
  throw Error(ErrorCode::CorruptManifest, "unknown source tag \"" + std::string(text) + "\"");
}

void ActivationStore::append(const ActivationStore& other) {
  if (rows.empty() && model_id.empty()) {
    *this = other;
    return;
  }
  if (other.model_id != model_id || other.layer_id != layer_id ||
      other.neuron_count != neuron_count) {
    throw Error(ErrorCode::StoreMismatch, "cannot append " + other.model_id + "/" +
                                              other.layer_id + " rows to " + model_id + "/" +
                                              layer_id);
  }
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  values.insert(values.end(), other.values.begin(), other.values.end());
}

ActivationSet ActivationStore::extract(std::size_t neuron, std::optional<SourceTag> source,
                                       const std::optional<std::string>& concept_text,
                                       const std::optional<std::string>& exclude_concept) const {
  if (neuron >= neuron_count) {
    throw Error(ErrorCode::NeuronOutOfRange, "neuron " + std::to_string(neuron) + " of " +
                                                 std::to_string(neuron_count));
  }
  ActivationSet set;
  set.neuron_index = neuron;
  set.source = source.value_or(SourceTag::Control);
  set.concept_text = concept_text;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (source && row.source != *source) continue;
    if (concept_text && row.concept_text != concept_text) continue;
    if (exclude_concept && row.concept_text == exclude_concept) continue;
    set.values.push_back(value(r, neuron));
  }
  return set;
}

ActivationStore collect_activations(const ModelAdapter& adapter, std::string_view layer_id,
                                    std::span<const Image> images,
                                    std::span<const RowProvenance> provenance,
                                    std::size_t batch_size) {
  const auto layers = adapter.list_layers();
  if (std::find(layers.begin(), layers.end(), layer_id) == layers.end()) {
    throw Error(ErrorCode::UnknownLayer, adapter.model_id() + " has no layer \"" +
                                             std::string(layer_id) + "\"");
  }
  if (images.empty()) {
    throw Error(ErrorCode::EmptyInput, "no images to collect activations for");
  }
  if (images.size() != provenance.size()) {
    throw Error(ErrorCode::InvalidValue, "provenance count does not match image count");
  }
  batch_size = std::max<std::size_t>(1, batch_size);

  ActivationStore store;
  store.model_id = adapter.model_id();
  store.layer_id = std::string(layer_id);
  store.rows.assign(provenance.begin(), provenance.end());

  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const auto stop = std::min(images.size(), start + batch_size);
    const auto range = "images [" + std::to_string(start) + ", " + std::to_string(stop) + ")";
    std::vector<FeatureMap> maps;
    try {
      std::vector<ModelInput> inputs;
      inputs.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) inputs.push_back(adapter.preprocess(images[i]));
      maps = adapter.activations(inputs, layer_id);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::UnknownLayer) throw;
      throw Error(ErrorCode::AdapterFailure, range + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::AdapterFailure, range + ": " + e.what());
    }
    if (maps.size() != stop - start) {
      throw Error(ErrorCode::AdapterFailure, range + ": adapter returned " +
                                                 std::to_string(maps.size()) + " maps");
    }
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const auto& map = maps[i];
      if (store.neuron_count == 0) store.neuron_count = map.neurons;
      if (map.neurons != store.neuron_count || map.neurons == 0 || map.height == 0 ||
          map.width == 0 || map.values.size() != map.neurons * map.height * map.width ||
          map.height != maps[0].height || map.width != maps[0].width) {
        throw Error(ErrorCode::AdapterFailure,
                    "image " + std::to_string(start + i) + ": inconsistent feature map shape");
      }
      for (std::size_t k = 0; k < map.neurons; ++k) {
        const double pooled = pool_spatial(map, k);
        const auto stored = static_cast<float>(pooled);
        if (!std::isfinite(pooled) || !std::isfinite(stored)) {
          throw Error(ErrorCode::NonFiniteActivation,
                      "row " + std::to_string(start + i) + " (" + provenance[start + i].image_ref +
                          "), neuron " + std::to_string(k));
        }
        store.values.push_back(stored);
      }
    }
  }
  return store;
}

ActivationStore collect_batch(const ModelAdapter& adapter, std::string_view layer_id,
                              const ImageBatch& batch, SourceTag source) {
  std::vector<RowProvenance> prov;
  prov.reserve(batch.size());
  for (const auto& key : batch.provenance) {
    prov.push_back(RowProvenance{source, key.concept_text,
                                 hex64(key.prefix_hash()) + "/" + std::to_string(key.index) + ".png",
                                 key.seed ^ static_cast<std::uint64_t>(key.index)});
  }
  return collect_activations(adapter, layer_id, batch.images, prov);
}

ActivationStore collect_folder(const ModelAdapter& adapter, std::string_view layer_id,
                               const ImageFolder& folder) {
  std::vector<RowProvenance> prov;
  prov.reserve(folder.images.size());
  for (std::size_t i = 0; i < folder.images.size(); ++i) {
    RowProvenance row{SourceTag::Control, std::nullopt, folder.refs[i], std::nullopt};
    if (!folder.classes[i].empty()) row.concept_text = folder.classes[i];
    prov.push_back(std::move(row));
  }
  return collect_activations(adapter, layer_id, folder.images, prov);
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kMatrix = "activations.bin";

std::string encode_f32le(std::span<const float> values) {
  std::string out(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (std::size_t b = 0; b < 4; ++b) {
      out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  return out;
}

std::vector<float> decode_f32le(std::string_view bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[i * 4 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace

void write_store(const ActivationStore& store, const fs::path& dir) {
  if (store.values.size() != store.rows.size() * store.neuron_count) {
    throw Error(ErrorCode::LengthMismatch, "store values do not match rows x neurons");
  }
  json rows = json::array();
  for (const auto& row : store.rows) {
    json r = {{"source", to_string(row.source)}, {"image_ref", row.image_ref}};
    if (row.concept_text) r["concept_text"] = *row.concept_text;
    if (row.seed) r["seed"] = *row.seed;
    rows.push_back(std::move(r));
  }
  const json manifest = {{"version", ActivationStore::kVersion},
                         {"model_id", store.model_id},
                         {"layer_id", store.layer_id},
                         {"neuron_count", store.neuron_count},
                         {"row_count", store.rows.size()},
                         {"dtype", ActivationStore::kDtype},
                         {"rows", std::move(rows)}};
  fs::create_directories(dir);
  // Matrix first: a reader never sees a manifest without its matrix.
  io::write_file_atomic(dir / kMatrix, encode_f32le(store.values));
  io::write_file_atomic(dir / kManifest, manifest.dump(1) + "\n");
}

ActivationStore read_store(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / kManifest));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, (dir / kManifest).string() + ": " + e.what());
  }
  ActivationStore store;
  std::size_t row_count = 0;
  try {
    if (manifest.at("version").get<int>() != ActivationStore::kVersion) {
      throw Error(ErrorCode::VersionMismatch,
                  "store version " + manifest.at("version").dump() + ", expected " +
                      std::to_string(ActivationStore::kVersion));
    }
    if (manifest.at("dtype").get<std::string>() != ActivationStore::kDtype) {
      throw Error(ErrorCode::CorruptManifest, "unsupported dtype " + manifest.at("dtype").dump());
    }
    store.model_id = manifest.at("model_id").get<std::string>();
    store.layer_id = manifest.at("layer_id").get<std::string>();
    store.neuron_count = manifest.at("neuron_count").get<std::size_t>();
    row_count = manifest.at("row_count").get<std::size_t>();
    for (const auto& r : manifest.at("rows")) {
      RowProvenance row;
      row.source = source_tag_from_string(r.at("source").get<std::string>());
      row.image_ref = r.at("image_ref").get<std::string>();
      if (r.contains("concept_text")) row.concept_text = r.at("concept_text").get<std::string>();
      if (r.contains("seed")) row.seed = r.at("seed").get<std::uint64_t>();
      store.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, (dir / kManifest).string() + ": " + e.what());
  }
  if (store.neuron_count == 0) {
    throw Error(ErrorCode::CorruptManifest, "neuron_count must be positive");
  }
  if (store.rows.size() != row_count) {
    throw Error(ErrorCode::LengthMismatch, "manifest lists " + std::to_string(store.rows.size()) +
                                               " rows but row_count is " +
                                               std::to_string(row_count));
  }
  const auto bytes = io::read_file(dir / kMatrix);
  const auto expected = row_count * store.neuron_count * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::LengthMismatch, "activations.bin has " + std::to_string(bytes.size()) +
                                               " bytes, expected " + std::to_string(expected));
  }
  store.values = decode_f32le(bytes);
  return store;
}

}  // namespace cosy
