#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace skilltune::markdown {

struct Heading {
  int level = 0;
  std::string text;
};

struct CodeBlock {
  std::string lang;  // lower-cased first word of the info string
  std::string content;
  bool closed = true;
};

struct Frontmatter {
  std::optional<std::string> block;  // lines between the fences
  std::string body;                  // everything after the closing fence
  bool malformed = false;            // opening fence without a closing one
};

Frontmatter split_frontmatter(std::string_view text);

/// Line-oriented scan of an ATX-heading markdown document.
struct Document {
  std::vector<Heading> headings;
  std::vector<CodeBlock> code_blocks;
  std::vector<std::string> prose_lines;  // non-blank lines outside fences, headings excluded
  std::vector<std::string> list_items;   // bullet / numbered items, marker stripped
  std::size_t char_count = 0;
};

Document scan(std::string_view body);

/// Heading level and text, or nullopt if `line` is not an ATX heading.
std::optional<Heading> parse_heading(std::string_view line);

/// Text of a bullet or numbered list item, or nullopt.
std::optional<std::string> parse_list_item(std::string_view line);

}  // namespace skilltune::markdown
