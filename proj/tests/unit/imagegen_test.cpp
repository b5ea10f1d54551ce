#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cosy/error.hpp"
#include "cosy/hash.hpp"
#include "cosy/imagegen.hpp"
#include "cosy/io.hpp"
#include "cosy/prompt.hpp"
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

// Straight-line reference for the mock generator, written without the
// library's hash helpers.
std::uint64_t ref_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct RefSplitMix {
  std::uint64_t x;
  std::uint64_t operator()() {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

Image ref_mock(const std::string& concept_text, std::uint64_t seed, std::size_t index) {
  const auto h = ref_fnv(concept_text);
  const int base[3] = {static_cast<int>(h & 0xFF), static_cast<int>((h >> 8) & 0xFF),
                       static_cast<int>((h >> 16) & 0xFF)};
  RefSplitMix rng{seed ^ h ^ index};
  Image img;
  img.width = img.height = 64;
  for (int p = 0; p < 64 * 64; ++p) {
    for (int c = 0; c < 3; ++c) {
      const int noise = static_cast<int>(rng() % 33) - 16;
      img.pixels.push_back(static_cast<std::uint8_t>(std::clamp(base[c] + noise, 0, 255)));
    }
  }
  return img;
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Prompt, Templates) {
  EXPECT_EQ(render_prompt(builtin_template(5), "submarine"), "realistic photo of a close up of submarine");
  EXPECT_EQ(render_prompt(builtin_template(1), "pug"), "a pug");
  EXPECT_EQ(builtin_template(2).pattern, "a painting of [concept]");
  EXPECT_EQ(builtin_template(3).pattern, "photo of [concept]");
  EXPECT_EQ(builtin_template(4).pattern, "realistic photo of [concept]");
  EXPECT_EQ(custom_template("realistic photo of [concept]").id, 4);
  EXPECT_EQ(code_of([] { custom_template("no placeholder"); }), ErrorCode::MissingPlaceholder);
  EXPECT_EQ(code_of([] { custom_template("[concept] and [concept]"); }), ErrorCode::MissingPlaceholder);
  EXPECT_EQ(code_of([] { render_prompt(PromptTemplate{0, "x"}, "x"); }), ErrorCode::MissingPlaceholder);
  EXPECT_EQ(render_prompt(builtin_template(1), "[concept]"), "a [concept]");
}

TEST(MockGenerator, MatchesReferenceByteForByte) {
  for (const auto& word : {"red fire truck", "pug", "", "caf\xc3\xa9"}) {
    for (std::uint64_t seed : {0ULL, 7ULL, 0xffffffffffffffffULL}) {
      for (std::size_t index : {0u, 1u, 49u}) {
        ASSERT_EQ(mock_generate(word, seed, index), ref_mock(word, seed, index)) << word;
      }
    }
  }
}

TEST(MockGenerator, NoiseBoundsAndIsolation) {
  const auto base = mock_base_color("lemon");
  const auto img = mock_generate("lemon", 3, 5);
  EXPECT_EQ(img.width, kMockImageSize);
  for (std::size_t p = 0; p < img.width * img.height; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const int v = img.pixels[p * 3 + c];
      const int lo = std::max(0, base[c] - kMockNoiseAmplitude);
      const int hi = std::min(255, base[c] + kMockNoiseAmplitude);
      ASSERT_GE(v, lo);
      ASSERT_LE(v, hi);
    }
  }
  EXPECT_NE(mock_generate("lemon", 3, 5), mock_generate("lemon", 4, 5));
  EXPECT_EQ(mock_base_color("lemon"), base);
  EXPECT_NE(mock_base_color("lime"), base);
}

TEST(MockGenerator, HundredWordsHaveDistinctBaseColors) {
  const auto& words = testing::fixture_words();
  ASSERT_EQ(words.size(), 100u);
  std::set<std::uint32_t> colors;
  for (const auto& w : words) colors.insert(static_cast<std::uint32_t>(ref_fnv(w) & 0xFFFFFF));
  ASSERT_EQ(colors.size(), 100u);
  std::set<std::array<std::uint8_t, 3>> library_colors;
  for (const auto& w : words) library_colors.insert(mock_base_color(w));
  EXPECT_EQ(library_colors.size(), 100u);
}

TEST(CacheKey, StableSerialisation) {
  const CacheKey a{"mock", "a [concept]", "pug", 7, 3};
  const CacheKey b{"mock", "a [concept]", "pug", 7, 3};
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), fnv1a64(a.serialize()));
  EXPECT_EQ(a.prefix_hash(), fnv1a64(a.prefix()));
  CacheKey c = a;
  c.index = 4;
  EXPECT_EQ(c.prefix_hash(), a.prefix_hash());
  EXPECT_NE(c.hash(), a.hash());
  c = a;
  c.seed = 8;
  EXPECT_NE(c.prefix_hash(), a.prefix_hash());
}

class CountingBackend : public GenerationBackend {
 public:
  std::string id() const override { return "mock"; }
  Image generate(const GenerationRequest& r) override {
    calls.fetch_add(1);
    prompts_seen.fetch_add(r.prompt == "a " + r.concept_text);
    std::this_thread::sleep_for(std::chrono::milliseconds(r.index % 3));
    return mock_generate(r.concept_text, r.batch_seed, r.index);
  }
  std::atomic<int> calls{0};
  std::atomic<int> prompts_seen{0};
};

TEST(ImageGenerator, DeterministicAndCached) {
  testing::TempDir dir;
  ImageGenerator gen(dir / "cache", 4);
  auto backend = std::make_shared<CountingBackend>();
  gen.register_backend(backend);
  const GenerationSpec spec{"red fire truck", builtin_template(1), 50, 7, "mock"};

  const auto first = gen.generate_images(spec);
  EXPECT_EQ(first.size(), 50u);
  EXPECT_EQ(backend->calls.load(), 50);
  EXPECT_EQ(backend->prompts_seen.load(), 50);
  for (std::size_t i = 0; i < first.size(); ++i) {
    ASSERT_EQ(first.images[i], mock_generate("red fire truck", 7, i));
    ASSERT_EQ(first.provenance[i].index, i);
  }

  const auto calls_before = gen.backend_calls();
  const auto second = gen.generate_images(spec);
  EXPECT_EQ(gen.backend_calls(), calls_before);
  EXPECT_EQ(backend->calls.load(), 50);
  EXPECT_EQ(second.images, first.images);

  ImageGenerator fresh(dir / "cache", 1);
  fresh.register_backend(std::make_shared<CountingBackend>());
  EXPECT_EQ(fresh.generate_images(spec).images, first.images);
  EXPECT_EQ(fresh.backend_calls(), 0u);

  auto grown = spec;
  grown.count = 55;
  const auto extended = fresh.generate_images(grown);
  EXPECT_EQ(fresh.backend_calls(), 5u);
  EXPECT_TRUE(std::equal(first.images.begin(), first.images.end(), extended.images.begin()));
}

TEST(ImageGenerator, Errors) {
  testing::TempDir dir;
  ImageGenerator gen(dir / "cache");
  gen.register_backend(std::make_shared<MockBackend>());
  EXPECT_EQ(code_of([&] { gen.generate_images({"pug", builtin_template(1), 1, 0, "mock"}); }),
            ErrorCode::InvalidValue);
  EXPECT_EQ(code_of([&] { gen.generate_images({"  ", builtin_template(1), 3, 0, "mock"}); }),
            ErrorCode::InvalidValue);
  EXPECT_EQ(code_of([&] { gen.generate_images({"pug", builtin_template(1), 3, 0, "http"}); }),
            ErrorCode::InvalidConfig);

  const GenerationSpec spec{"pug", builtin_template(1), 3, 0, "mock"};
  gen.generate_images(spec);
  const auto victim = gen.cache_path(CacheKey{"mock", "a [concept]", "pug", 0, 1});
  ASSERT_TRUE(fs::exists(victim));
  std::ofstream(victim, std::ios::binary) << "not a png";
  EXPECT_EQ(code_of([&] { gen.generate_images(spec); }), ErrorCode::CacheCorrupt);
}

TEST(DirectoryBackend, ServesFilesInNameOrder) {
  testing::TempDir dir;
  for (int i = 0; i < 50; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%02d.png", 49 - i);
    std::ofstream(dir / name, std::ios::binary) << encode_png(solid_image(2, 2, std::uint8_t(i), 0, 0));
  }
  ImageGenerator gen(dir / "cache");
  gen.register_backend(std::make_shared<DirectoryBackend>(dir.path()));
  const auto batch = gen.generate_images({"anything", builtin_template(5), 50, 0, "directory"});
  ASSERT_EQ(batch.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(batch.images[i].at(0, 0, 0), 49 - i);

  EXPECT_EQ(code_of([&] { gen.generate_images({"anything", builtin_template(5), 51, 0, "directory"}); }),
            ErrorCode::GenerationRefused);
}

TEST(DirectoryBackend, PrefersConceptSubdirectory) {
  testing::TempDir dir;
  fs::create_directories(dir / "pug");
  std::ofstream(dir / "pug" / "a.png", std::ios::binary) << encode_png(solid_image(1, 1, 9, 9, 9));
  std::ofstream(dir / "pug" / "b.png", std::ios::binary) << encode_png(solid_image(1, 1, 8, 8, 8));
  DirectoryBackend backend(dir.path());
  EXPECT_EQ(backend.generate({"p", "pug", 0, 1}).at(0, 0, 0), 8);
}

TEST(HttpResponse, Decoding) {
  EXPECT_EQ(base64_decode("aGVsbG8="), "hello");
  EXPECT_EQ(base64_decode("aGVsbG8h"), "hello!");
  const auto png = encode_png(solid_image(1, 1, 1, 2, 3));
  static const char* kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string b64;
  for (std::size_t i = 0; i < png.size(); i += 3) {
    std::uint32_t v = static_cast<std::uint8_t>(png[i]) << 16;
    if (i + 1 < png.size()) v |= static_cast<std::uint8_t>(png[i + 1]) << 8;
    if (i + 2 < png.size()) v |= static_cast<std::uint8_t>(png[i + 2]);
    b64 += kB64[(v >> 18) & 63];
    b64 += kB64[(v >> 12) & 63];
    b64 += i + 1 < png.size() ? kB64[(v >> 6) & 63] : '=';
    b64 += i + 2 < png.size() ? kB64[v & 63] : '=';
  }
  EXPECT_EQ(parse_generation_response("application/json", "[\"" + b64 + "\"]").at(0), png);
  EXPECT_EQ(parse_generation_response("application/json", "{\"images\": [\"" + b64 + "\"]}").at(0), png);
  EXPECT_EQ(parse_generation_response("image/png", png).at(0), png);
  const std::string multipart = "--XyZ\r\nContent-Type: image/png\r\n\r\n" + png + "\r\n--XyZ--\r\n";
  EXPECT_EQ(parse_generation_response("multipart/mixed; boundary=XyZ", multipart).at(0), png);
}

TEST(HttpBackend, GeneratesThroughLocalServer) {
  httplib::Server server;
  std::atomic<int> requests{0};
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    requests.fetch_add(1);
    if (body.at("prompt") == "a refused") {
      res.status = 400;
      return;
    }
    const auto seed = body.at("seed").get<std::uint64_t>();
    res.set_content(encode_png(solid_image(4, 4, std::uint8_t(seed & 0xFF), 0, 0)), "image/png");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/generate";
  HttpBackend backend(url, 2000, 1);
  const auto img = backend.generate({"a pug", "pug", 40, 2});
  EXPECT_EQ(img.at(0, 0, 0), 40 ^ 2);
  EXPECT_EQ(code_of([&] { backend.generate({"a refused", "refused", 0, 0}); }), ErrorCode::GenerationRefused);

  ImageGenerator gen(fs::temp_directory_path() / ("cosy-http-" + std::to_string(port)), 3);
  gen.register_backend(std::make_shared<HttpBackend>(url, 2000, 1));
  const auto batch = gen.generate_images({"pug", builtin_template(1), 6, 16, "http"});
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(batch.images[i].at(0, 0, 0), 16 ^ i);
  fs::remove_all(gen.cache_root());

  server.stop();
  thread.join();

  HttpBackend dead(url, 200, 1);
  EXPECT_EQ(code_of([&] { dead.generate({"a pug", "pug", 0, 0}); }), ErrorCode::BackendUnavailable);
}

TEST(ImageFolder, LoadsClassesInPathOrder) {
  testing::TempDir dir;
  testing::write_mock_folder(dir / "ctrl", {"b", "a"}, 1, 2);
  const auto folder = load_image_folder(dir / "ctrl");
  ASSERT_EQ(folder.images.size(), 4u);
  EXPECT_EQ(folder.classes, (std::vector<std::string>{"a", "a", "b", "b"}));
  EXPECT_EQ(folder.refs.front(), "a/00000.png");
  EXPECT_EQ(folder.images[3], mock_generate("b", 1, 1));
  EXPECT_EQ(code_of([&] { load_image_folder(dir / "nope"); }), ErrorCode::Io);
}

TEST(ImagePng, RoundTrip) {
  const auto img = mock_generate("pug", 1, 2);
  EXPECT_EQ(decode_png(encode_png(img)), img);
  EXPECT_EQ(code_of([] { decode_png("garbage"); }), ErrorCode::CacheCorrupt);
}

}  // namespace
}  // namespace cosy
