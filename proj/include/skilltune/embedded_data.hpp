#pragma once

#include <string_view>

// Contents of data/, compiled into the library.
namespace skilltune::embedded {
extern const std::string_view rubric_md;
extern const std::string_view profile_keywords_json;
extern const std::string_view concept_keywords_json;
}  // namespace skilltune::embedded
