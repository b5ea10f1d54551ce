#include "cosy/prompt.hpp"

#include <array>

#include "cosy/error.hpp"

namespace cosy {
namespace {

constexpr std::array<std::string_view, 5> kPatterns = {
    "a [concept]",
    "a painting of [concept]",
    "photo of [concept]",
    "realistic photo of [concept]",
    "realistic photo of a close up of [concept]",
};

std::size_t count_placeholders(std::string_view pattern) {
  std::size_t count = 0;
  for (auto pos = pattern.find(kConceptPlaceholder); pos != std::string_view::npos;
       pos = pattern.find(kConceptPlaceholder, pos + kConceptPlaceholder.size())) {
    ++count;
  }
  return count;
}

}  // namespace

PromptTemplate builtin_template(int id) {
  if (id < 1 || id > static_cast<int>(kPatterns.size())) {
    throw Error(ErrorCode::InvalidValue,
                "prompt_template id must be in 1..5, got " + std::to_string(id));
  }
  return PromptTemplate{id, std::string(kPatterns[static_cast<std::size_t>(id - 1)])};
}

PromptTemplate custom_template(std::string pattern) {
  const auto count = count_placeholders(pattern);
  if (count != 1) {
    throw Error(ErrorCode::MissingPlaceholder,
                "pattern must contain [concept] exactly once, found " +
                    std::to_string(count) + " in \"" + pattern + "\"");
  }
  for (std::size_t i = 0; i < kPatterns.size(); ++i) {
    if (pattern == kPatterns[i]) {
      return PromptTemplate{static_cast<int>(i + 1), std::move(pattern)};
    }
  }
  return PromptTemplate{0, std::move(pattern)};
}

std::string render_prompt(const PromptTemplate& tmpl, std::string_view concept_text) {
  const auto pos = tmpl.pattern.find(kConceptPlaceholder);
  if (pos == std::string::npos || count_placeholders(tmpl.pattern) != 1) {
    throw Error(ErrorCode::MissingPlaceholder,
                "pattern \"" + tmpl.pattern + "\" has no single [concept] placeholder");
  }
  std::string out;
  out.reserve(tmpl.pattern.size() + concept_text.size());
  out.append(tmpl.pattern, 0, pos);
  out.append(concept_text);
  out.append(tmpl.pattern, pos + kConceptPlaceholder.size());
  return out;
}

}  // namespace cosy
