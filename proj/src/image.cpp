#include "cosy/image.hpp"

#include <cstring>
#include <memory>

#include <png.h>

#include "cosy/error.hpp"

namespace cosy {

Image solid_image(std::size_t width, std::size_t height, std::uint8_t r, std::uint8_t g,
                  std::uint8_t b) {
  Image img(width, height);
  for (std::size_t i = 0; i < width * height; ++i) {
    img.pixels[i * 3 + 0] = r;
    img.pixels[i * 3 + 1] = g;
    img.pixels[i * 3 + 2] = b;
  }
  return img;
}

std::string encode_png(const Image& image) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::Io, std::string("png size query failed: ") + desc.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels.data(), 0,
                                 nullptr)) {
    throw Error(ErrorCode::Io, std::string("png encode failed: ") + desc.message);
  }
  out.resize(size);
  return out;
}

Image decode_png(std::string_view bytes) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::CacheCorrupt, std::string("png header: ") + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  Image img(desc.width, desc.height);
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw Error(ErrorCode::CacheCorrupt, std::string("png data: ") + desc.message);
  }
  return img;
}

}  // namespace cosy
