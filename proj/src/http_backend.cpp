#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "cosy/error.hpp"
#include "cosy/imagegen.hpp"

namespace cosy {

using nlohmann::json;

std::string base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (c != '\n' && c != '\r' && c != ' ' && c != '\t') clean.push_back(c);
  }
  if (clean.size() % 4 != 0) {
    throw Error(ErrorCode::GenerationRefused, "base64 payload length is not a multiple of 4");
  }
  std::string out(clean.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  if (n < 0) {
    throw Error(ErrorCode::GenerationRefused, "invalid base64 payload");
  }
  std::size_t padding = 0;
  if (!clean.empty() && clean.back() == '=') ++padding;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_multipart(std::string_view content_type, std::string_view body) {
  const auto key = lower(content_type).find("boundary=");
  if (key == std::string::npos) {
    throw Error(ErrorCode::GenerationRefused, "multipart response without boundary");
  }
  std::string boundary(content_type.substr(key + 9));
  if (auto semi = boundary.find(';'); semi != std::string::npos) boundary.resize(semi);
  if (boundary.size() >= 2 && boundary.front() == '"' && boundary.back() == '"') {
    boundary = boundary.substr(1, boundary.size() - 2);
  }
  const std::string delim = "--" + boundary;

  std::vector<std::string> parts;
  auto pos = body.find(delim);
  while (pos != std::string_view::npos) {
    pos += delim.size();
    if (body.substr(pos, 2) == "--") break;  // closing delimiter
    const auto header_end = body.find("\r\n\r\n", pos);
    if (header_end == std::string_view::npos) break;
    const auto start = header_end + 4;
    const auto next = body.find("\r\n" + delim, start);
    if (next == std::string_view::npos) {
      throw Error(ErrorCode::GenerationRefused, "unterminated multipart part");
    }
    parts.emplace_back(body.substr(start, next - start));
    pos = next + 2;
  }
  return parts;
}

}  // namespace

std::vector<std::string> parse_generation_response(std::string_view content_type,
                                                   std::string_view body) {
  const auto type = lower(content_type);
  if (type.rfind("multipart/", 0) == 0) {
    return split_multipart(content_type, body);
  }
  if (type.rfind("image/png", 0) == 0) {
    return {std::string(body)};
  }
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::GenerationRefused, std::string("response is not JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("images")) doc = doc.at("images");
  if (!doc.is_array()) {
    throw Error(ErrorCode::GenerationRefused, "response JSON must be an array of base64 PNGs");
  }
  std::vector<std::string> images;
  for (const auto& e : doc) {
    if (!e.is_string()) {
      throw Error(ErrorCode::GenerationRefused, "response array entries must be strings");
    }
    images.push_back(base64_decode(e.get<std::string>()));
  }
  return images;
}

HttpBackend::HttpBackend(std::string url, int timeout_ms, int retries)
    : timeout_ms_(timeout_ms), retries_(std::max(0, retries)) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidValue, "http backend url needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_port_ = url;
    path_ = "/";
  } else {
    scheme_host_port_ = url.substr(0, path_start);
    path_ = url.substr(path_start);
  }
}

Image HttpBackend::generate(const GenerationRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto sec = timeout_ms_ / 1000;
  const auto usec = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);

  const json body = {{"prompt", request.prompt}, {"seed", request.image_seed()}, {"count", 1}};
  const auto payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::GenerationRefused, "HTTP " + std::to_string(res->status) +
                                                    " for prompt \"" + request.prompt + "\": " +
                                                    res->body);
    }
    const auto images =
        parse_generation_response(res->get_header_value("Content-Type"), res->body);
    if (images.empty()) {
      throw Error(ErrorCode::GenerationRefused, "backend returned no images");
    }
    try {
      return decode_png(images.front());
    } catch (const Error& e) {
      throw Error(ErrorCode::GenerationRefused, std::string("undecodable image: ") + e.what());
    }
  }
  throw Error(ErrorCode::BackendUnavailable, scheme_host_port_ + path_ + " after " +
                                                 std::to_string(retries_ + 1) +
                                                 " attempts: " + last_error);
}

}  // namespace cosy
