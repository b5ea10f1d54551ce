#include "cosy/imagegen.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <thread>

#include <json.hpp>

#include "cosy/error.hpp"
#include "cosy/hash.hpp"
#include "cosy/io.hpp"

namespace cosy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr char kSep = '\x1f';
}

std::string CacheKey::prefix() const {
  std::string out;
  out += backend_id;
  out += kSep;
  out += pattern;
  out += kSep;
  out += concept_text;
  out += kSep;
  out += std::to_string(seed);
  return out;
}

std::string CacheKey::serialize() const { return prefix() + kSep + std::to_string(index); }

std::uint64_t CacheKey::prefix_hash() const { return fnv1a64(prefix()); }

std::uint64_t CacheKey::hash() const { return fnv1a64(serialize()); }

void ImageBatch::validate() const {
  if (images.size() != provenance.size()) {
    throw Error(ErrorCode::InvalidValue, "batch has " + std::to_string(images.size()) +
                                             " images but " +
                                             std::to_string(provenance.size()) +
                                             " provenance entries");
  }
  for (std::size_t i = 1; i < images.size(); ++i) {
    if (images[i].width != images[0].width || images[i].height != images[0].height) {
      throw Error(ErrorCode::InvalidValue,
                  "image " + std::to_string(i) + " differs in size from image 0");
    }
  }
}

// ---------------------------------------------------------------------------
// Mock generator

std::array<std::uint8_t, 3> mock_base_color(std::string_view concept_text) {
  const auto h = fnv1a64(concept_text);
  return {static_cast<std::uint8_t>(h & 0xFF), static_cast<std::uint8_t>((h >> 8) & 0xFF),
          static_cast<std::uint8_t>((h >> 16) & 0xFF)};
}

Image mock_generate(std::string_view concept_text, std::uint64_t seed, std::size_t index) {
  const auto concept_hash = fnv1a64(concept_text);
  const auto base = mock_base_color(concept_text);
  SplitMix64 rng(seed ^ concept_hash ^ static_cast<std::uint64_t>(index));
  constexpr auto span = static_cast<std::uint64_t>(2 * kMockNoiseAmplitude + 1);

  Image img(kMockImageSize, kMockImageSize);
  for (std::size_t p = 0; p < kMockImageSize * kMockImageSize; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const int noise = static_cast<int>(rng.below(span)) - kMockNoiseAmplitude;
      img.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(base[c] + noise, 0, 255));
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Directory backend

const std::vector<fs::path>& DirectoryBackend::files_for(const std::string& concept_text) {
  std::lock_guard lock(mutex_);
  auto it = listing_.find(concept_text);
  if (it != listing_.end()) return it->second;

  fs::path dir = root_;
  std::error_code ec;
  if (!concept_text.empty() && fs::is_directory(root_ / concept_text, ec)) {
    dir = root_ / concept_text;
  }
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::BackendUnavailable, "image directory " + dir.string() + " missing");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return listing_.emplace(concept_text, std::move(files)).first->second;
}

Image DirectoryBackend::generate(const GenerationRequest& request) {
  const auto& files = files_for(request.concept_text);
  if (request.index >= files.size()) {
    throw Error(ErrorCode::GenerationRefused,
                "directory backend has " + std::to_string(files.size()) + " images for \"" +
                    request.concept_text + "\", index " + std::to_string(request.index) +
                    " requested");
  }
  try {
    return decode_png(io::read_file(files[request.index]));
  } catch (const Error& e) {
    throw Error(ErrorCode::GenerationRefused,
                files[request.index].string() + " unreadable: " + e.what());
  }
}

std::shared_ptr<GenerationBackend> make_backend(const BackendSettings& settings) {
  switch (settings.kind) {
    case BackendKind::Mock:
      return std::make_shared<MockBackend>();
    case BackendKind::Directory:
      return std::make_shared<DirectoryBackend>(settings.directory);
    case BackendKind::Http:
      return std::make_shared<HttpBackend>(settings.url, settings.timeout_ms, settings.retries);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown backend kind");
}

// ---------------------------------------------------------------------------
// Cached generation

ImageGenerator::ImageGenerator(fs::path cache_root, std::size_t max_in_flight)
    : cache_root_(std::move(cache_root)), max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {}

void ImageGenerator::register_backend(std::shared_ptr<GenerationBackend> backend) {
  auto id = backend->id();
  backends_[id] = std::move(backend);
}

fs::path ImageGenerator::cache_path(const CacheKey& key) const {
  return cache_root_ / hex64(key.prefix_hash()) / (std::to_string(key.index) + ".png");
}

ImageBatch ImageGenerator::generate_images(const GenerationSpec& spec) {
  if (spec.count < 2) {
    throw Error(ErrorCode::InvalidValue, "generation count must be >= 2");
  }
  if (spec.concept_text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::InvalidValue, "concept text is empty");
  }
  auto backend_it = backends_.find(spec.backend_id);
  if (backend_it == backends_.end()) {
    throw Error(ErrorCode::InvalidConfig, "backend \"" + spec.backend_id + "\" not registered");
  }
  auto& backend = *backend_it->second;
  const auto prompt = render_prompt(spec.prompt_template, spec.concept_text);

  ImageBatch batch;
  batch.images.resize(spec.count);
  batch.provenance.resize(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    batch.provenance[i] =
        CacheKey{spec.backend_id, spec.prompt_template.pattern, spec.concept_text, spec.seed, i};
  }

  const auto dir = cache_root_ / hex64(batch.provenance.front().prefix_hash());
  const auto key_file = dir / "key.json";
  const json key_doc = {{"backend_id", spec.backend_id},
                        {"pattern", spec.prompt_template.pattern},
                        {"concept_text", spec.concept_text},
                        {"seed", spec.seed}};
  std::error_code ec;
  if (fs::exists(key_file, ec)) {
    json stored;
    try {
      stored = json::parse(io::read_file(key_file));
    } catch (const json::exception&) {
      throw Error(ErrorCode::CacheCorrupt, key_file.string() + " is not valid JSON");
    }
    if (stored != key_doc) {
      throw Error(ErrorCode::CacheCorrupt, key_file.string() + " describes a different key");
    }
  }

  // Cache pass.
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto path = cache_path(batch.provenance[i]);
    if (fs::exists(path, ec)) {
      try {
        batch.images[i] = decode_png(io::read_file(path));
      } catch (const Error& e) {
        throw Error(ErrorCode::CacheCorrupt, path.string() + ": " + e.what());
      }
    } else {
      misses.push_back(i);
    }
  }

  if (!misses.empty()) {
    fs::create_directories(dir);
    if (!fs::exists(key_file, ec)) io::write_file_atomic(key_file, key_doc.dump(2) + "\n");

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(misses.size());
    auto worker = [&] {
      for (std::size_t slot = next.fetch_add(1); slot < misses.size(); slot = next.fetch_add(1)) {
        const auto index = misses[slot];
        try {
          GenerationRequest request{prompt, spec.concept_text, spec.seed, index};
          backend_calls_.fetch_add(1);
          auto image = backend.generate(request);
          io::write_file_atomic(cache_path(batch.provenance[index]), encode_png(image));
          batch.images[index] = std::move(image);
        } catch (...) {
          errors[slot] = std::current_exception();
        }
      }
    };
    const auto workers = std::min(max_in_flight_, misses.size());
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  batch.validate();
  return batch;
}

// ---------------------------------------------------------------------------
// Image folders

ImageFolder load_image_folder(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::Io, "image folder " + root.string() + " does not exist");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path().lexically_relative(root));
    }
  }
  std::sort(files.begin(), files.end());

  ImageFolder folder;
  for (const auto& rel : files) {
    try {
      folder.images.push_back(decode_png(io::read_file(root / rel)));
    } catch (const Error& e) {
      throw Error(ErrorCode::Io, (root / rel).string() + ": " + e.what());
    }
    folder.refs.push_back(rel.generic_string());
    folder.classes.push_back(rel.parent_path().generic_string());
  }
  return folder;
}

void export_batch(const ImageBatch& batch, const fs::path& dir) {
  for (std::size_t i = 0; i < batch.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.png", i);
    io::write_file_atomic(dir / name, encode_png(batch.images[i]));
  }
}

}  // namespace cosy
