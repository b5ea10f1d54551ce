#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cosy {

// 8-bit RGB, row-major, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t channel) {
    return pixels[(y * width + x) * 3 + channel];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t channel) const {
    return pixels[(y * width + x) * 3 + channel];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

Image solid_image(std::size_t width, std::size_t height, std::uint8_t r, std::uint8_t g,
                  std::uint8_t b);

// Lossless PNG, 8-bit RGB. decode_png accepts any PNG libpng can read and
// converts it to 8-bit RGB; failures throw CacheCorrupt.
std::string encode_png(const Image& image);
Image decode_png(std::string_view bytes);

}  // namespace cosy
