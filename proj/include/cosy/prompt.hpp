#pragma once

#include <string>
#include <string_view>

namespace cosy {

inline constexpr std::string_view kConceptPlaceholder = "[concept]";

// Id 1-5 are the built-in templates; id 0 marks a user-supplied pattern.
struct PromptTemplate {
  int id = 5;
  std::string pattern;

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

// Throws InvalidValue for ids outside 1..5.
PromptTemplate builtin_template(int id);

// Validates a literal pattern: `[concept]` must occur exactly once
// (MissingPlaceholder otherwise). Recognises built-in patterns and gives them
// their id.
PromptTemplate custom_template(std::string pattern);

// Object datasets use the close-up template, scene datasets the plain
// realistic-photo template.
inline constexpr int kDefaultObjectTemplate = 5;
inline constexpr int kDefaultSceneTemplate = 4;

std::string render_prompt(const PromptTemplate& tmpl, std::string_view concept_text);

}  // namespace cosy
