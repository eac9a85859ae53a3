#include "skilltune/markdown.hpp"

#include <cctype>

#include "skilltune/text.hpp"

namespace skilltune::markdown {
namespace {

bool is_fence(std::string_view line, std::string_view* info) {
  std::string_view t = line;
  std::size_t indent = 0;
  while (indent < t.size() && indent < 4 && t[indent] == ' ') ++indent;
  if (indent > 3) return false;
  t.remove_prefix(indent);
  if (t.starts_with("```") || t.starts_with("~~~")) {
    if (info) {
      std::size_t n = 0;
      while (n < t.size() && (t[n] == '`' || t[n] == '~')) ++n;
      *info = text::trim(t.substr(n));
    }
    return true;
  }
  return false;
}

}  // namespace

Frontmatter split_frontmatter(std::string_view input) {
  Frontmatter fm;
  if (!(input.starts_with("---\n") || input == "---")) {
    fm.body = std::string(input);
    return fm;
  }
  std::size_t pos = input.find('\n');
  std::size_t start = pos == std::string_view::npos ? input.size() : pos + 1;
  std::size_t cursor = start;
  while (cursor <= input.size()) {
    std::size_t nl = input.find('\n', cursor);
    std::string_view line = input.substr(cursor, nl == std::string_view::npos ? std::string_view::npos : nl - cursor);
    if (text::trim(line) == "---") {
      fm.block = std::string(input.substr(start, cursor - start));
      fm.body = nl == std::string_view::npos ? std::string() : std::string(input.substr(nl + 1));
      return fm;
    }
    if (nl == std::string_view::npos) break;
    cursor = nl + 1;
  }
  fm.malformed = true;
  fm.body = std::string(input);
  return fm;
}

std::optional<Heading> parse_heading(std::string_view line) {
  std::string_view t = line;
  std::size_t indent = 0;
  while (indent < t.size() && t[indent] == ' ') ++indent;
  if (indent > 3) return std::nullopt;
  t.remove_prefix(indent);
  int level = 0;
  while (level < static_cast<int>(t.size()) && t[level] == '#') ++level;
  if (level == 0 || level > 6) return std::nullopt;
  if (static_cast<std::size_t>(level) < t.size() && t[level] != ' ' && t[level] != '\t') return std::nullopt;
  std::string_view rest = text::trim(t.substr(level));
  while (!rest.empty() && rest.back() == '#') rest.remove_suffix(1);
  return Heading{level, std::string(text::trim(rest))};
}

std::optional<std::string> parse_list_item(std::string_view line) {
  std::string_view t = text::trim(line);
  if (t.size() >= 2 && (t[0] == '-' || t[0] == '*' || t[0] == '+') && (t[1] == ' ' || t[1] == '\t')) {
    return std::string(text::trim(t.substr(2)));
  }
  std::size_t n = 0;
  while (n < t.size() && std::isdigit(static_cast<unsigned char>(t[n]))) ++n;
  if (n > 0 && n + 1 < t.size() && (t[n] == '.' || t[n] == ')') && t[n + 1] == ' ') {
    return std::string(text::trim(t.substr(n + 2)));
  }
  return std::nullopt;
}

Document scan(std::string_view body) {
  Document doc;
  doc.char_count = text::trim(body).size();
  bool in_fence = false;
  CodeBlock current;
  for (std::string_view line : text::split_lines(body)) {
    std::string_view info;
    if (in_fence) {
      if (is_fence(line, nullptr) && text::trim(line).find_first_not_of("`~") == std::string_view::npos) {
        in_fence = false;
        doc.code_blocks.push_back(std::move(current));
        current = {};
      } else {
        current.content.append(line);
        current.content.push_back('\n');
      }
      continue;
    }
    if (is_fence(line, &info)) {
      in_fence = true;
      auto words = text::split_whitespace(info);
      current.lang = words.empty() ? std::string() : text::to_lower(words.front());
      continue;
    }
    if (text::trim(line).empty()) continue;
    if (auto h = parse_heading(line)) {
      doc.headings.push_back(std::move(*h));
      continue;
    }
    doc.prose_lines.emplace_back(text::trim(line));
    if (auto item = parse_list_item(line)) doc.list_items.push_back(std::move(*item));
  }
  if (in_fence) {
    current.closed = false;
    doc.code_blocks.push_back(std::move(current));
  }
  return doc;
}

}  // namespace skilltune::markdown
