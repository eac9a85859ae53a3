#include "skilltune/rubric.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <set>

#include "skilltune/embedded_data.hpp"
#include "skilltune/error.hpp"
#include "skilltune/hash.hpp"
#include "skilltune/markdown.hpp"
#include "skilltune/text.hpp"

namespace skilltune {
namespace {

double parse_number(std::string_view s, std::string_view context) {
  s = text::trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InvalidRubric(fmt::format("InvalidRubric: bad number '{}' in {}", s, context));
  }
  return v;
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    auto part = text::trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!part.empty()) out.emplace_back(part);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

MechanicalCheck parse_mechanical(std::string_view annotation) {
  annotation = text::trim(annotation);
  auto colon = annotation.find(':');
  if (colon == std::string_view::npos) throw InvalidRubric(fmt::format("InvalidRubric: bad annotation '{}'", annotation));
  std::string_view head = text::trim(annotation.substr(0, colon));
  std::string_view body = text::trim(annotation.substr(colon + 1));

  if (head.starts_with("keywords")) {
    KeywordSet ks;
    std::string_view rest = head.substr(8);
    if (!rest.empty()) {
      if (!rest.starts_with(">=")) throw InvalidRubric(fmt::format("InvalidRubric: bad keyword quantifier '{}'", head));
      ks.min_groups = static_cast<std::size_t>(parse_number(rest.substr(2), head));
    }
    for (const auto& group : split_on(body, ',')) ks.groups.push_back(split_on(group, '|'));
    if (ks.groups.empty() || ks.required() > ks.groups.size()) {
      throw InvalidRubric(fmt::format("InvalidRubric: empty keyword set '{}'", annotation));
    }
    return ks;
  }
  if (head == "structure") {
    StructureRule rule;
    auto eq = body.find('=');
    rule.name = std::string(text::trim(body.substr(0, eq)));
    if (eq != std::string_view::npos) rule.arg = std::string(text::trim(body.substr(eq + 1)));
    const auto& known = known_structure_rules();
    if (std::find(known.begin(), known.end(), rule.name) == known.end()) {
      throw InvalidRubric(fmt::format("InvalidRubric: unknown structure rule '{}'", rule.name));
    }
    return rule;
  }
  if (head == "stat") {
    StatRule rule;
    auto words = text::split_whitespace(body);
    if (words.size() == 3 && words[1] == "<") {
      rule.metric = words[0];
      rule.lo = 0.0;
      rule.hi = parse_number(words[2], annotation);
      rule.hi_exclusive = true;
    } else if (words.size() == 2 && words[1].find("..") != std::string::npos) {
      rule.metric = words[0];
      auto dots = words[1].find("..");
      rule.lo = parse_number(std::string_view(words[1]).substr(0, dots), annotation);
      rule.hi = parse_number(std::string_view(words[1]).substr(dots + 2), annotation);
    } else {
      throw InvalidRubric(fmt::format("InvalidRubric: bad stat rule '{}'", annotation));
    }
    if (rule.lo > rule.hi) throw InvalidRubric(fmt::format("InvalidRubric: unordered bounds in '{}'", annotation));
    const auto& known = known_stat_metrics();
    if (std::find(known.begin(), known.end(), rule.metric) == known.end()) {
      throw InvalidRubric(fmt::format("InvalidRubric: unknown stat metric '{}'", rule.metric));
    }
    return rule;
  }
  throw InvalidRubric(fmt::format("InvalidRubric: unknown check kind '{}'", head));
}

CriterionCheck parse_annotation(std::string_view ann) {
  ann = text::trim(ann);
  if (ann == "llm") return LlmOnly{};
  if (ann.starts_with("llm;")) return LlmOnly{parse_mechanical(ann.substr(4))};
  return std::visit([](auto&& c) -> CriterionCheck { return c; }, parse_mechanical(ann));
}

std::string format_mechanical(const MechanicalCheck& check) {
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, KeywordSet>) {
          std::vector<std::string> groups;
          for (const auto& g : c.groups) groups.push_back(text::join(g, "|"));
          std::string head = c.min_groups == 0 ? "keywords" : fmt::format("keywords>={}", c.min_groups);
          return fmt::format("{}: {}", head, text::join(groups, ", "));
        } else if constexpr (std::is_same_v<T, StructureRule>) {
          return c.arg.empty() ? fmt::format("structure: {}", c.name) : fmt::format("structure: {}={}", c.name, c.arg);
        } else {
          if (c.hi_exclusive) return fmt::format("stat: {} < {}", c.metric, c.hi);
          return fmt::format("stat: {} {}..{}", c.metric, c.lo, c.hi);
        }
      },
      check);
}

}  // namespace

std::size_t Rubric::total_points() const noexcept {
  std::size_t n = 0;
  for (const auto& d : dimensions) n += d.max_points();
  return n;
}

const std::vector<std::string>& known_structure_rules() {
  static const std::vector<std::string> rules{
      "intro_first",    "section",          "min_code_blocks",    "runnable_examples",
      "consistent_headings", "headers_lists_code", "no_vague_terms", "subheadings",
      "commands_explained",  "flags_documented",   "min_commands"};
  return rules;
}

const std::vector<std::string>& known_stat_metrics() {
  static const std::vector<std::string> metrics{"avg_sentence_words", "char_count"};
  return metrics;
}

std::string describe_check(const CriterionCheck& check) {
  if (const auto* llm = std::get_if<LlmOnly>(&check)) {
    return llm->proxy ? "llm; " + format_mechanical(*llm->proxy) : std::string("llm");
  }
  return std::visit(
      [](const auto& c) -> std::string {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LlmOnly>) {
          return "llm";
        } else {
          return format_mechanical(MechanicalCheck{c});
        }
      },
      check);
}

Rubric parse_rule_document(std::string_view doc) {
  Rubric rubric;
  rubric.pass_threshold = kDefaultPassThreshold;
  std::optional<Dimension> current;
  std::set<std::string> names;

  auto flush = [&] {
    if (current && !current->items.empty()) {
      if (!names.insert(current->name).second) {
        throw InvalidRubric("InvalidRubric: duplicate dimension '" + current->name + "'");
      }
      rubric.dimensions.push_back(std::move(*current));
    }
    current.reset();
  };

  bool in_fence = false;
  const std::string normalized = text::normalize_newlines(doc);
  for (std::string_view line : text::split_lines(normalized)) {
    std::string_view t = text::trim(line);
    if (t.starts_with("```")) {
      in_fence = !in_fence;
      continue;
    }
    if (in_fence || t.empty()) continue;
    if (auto h = markdown::parse_heading(line)) {
      flush();
      current = Dimension{h->text, {}};
      continue;
    }
    const std::string lower = text::to_lower(t);
    if (lower.starts_with("threshold:")) {
      std::string_view v = text::trim(t.substr(10));
      double value;
      if (v.ends_with("%")) {
        value = parse_number(v.substr(0, v.size() - 1), "threshold") / 100.0;
      } else {
        value = parse_number(v, "threshold");
        if (value > 1.0) value /= 100.0;
      }
      if (!(value > 0.0 && value <= 1.0)) throw InvalidRubric(fmt::format("InvalidRubric: threshold {} outside (0,1]", value));
      rubric.pass_threshold = value;
      continue;
    }
    if (lower.starts_with("scale:")) {
      rubric.scale_max = parse_number(t.substr(6), "scale");
      if (rubric.scale_max <= 0.0) throw InvalidRubric("InvalidRubric: scale must be positive");
      continue;
    }
    if (!current || line.starts_with(" ") || line.starts_with("\t")) continue;
    auto item_text = markdown::parse_list_item(line);
    if (!item_text) continue;
    std::string_view body = *item_text;
    CriterionItem item;
    if (body.ends_with("]")) {
      auto open = body.rfind(" [");
      if (open != std::string_view::npos) {
        item.check = parse_annotation(body.substr(open + 2, body.size() - open - 3));
        body = text::trim(body.substr(0, open));
      }
    }
    item.text = std::string(body);
    if (item.text.empty()) continue;
    for (const auto& existing : current->items) {
      if (existing.text == item.text) throw InvalidRubric("InvalidRubric: duplicate item '" + item.text + "'");
    }
    current->items.push_back(std::move(item));
  }
  flush();
  if (rubric.dimensions.empty()) throw EmptyRubric();
  return rubric;
}

std::string serialize_rubric(const Rubric& rubric) {
  std::string out = fmt::format("threshold: {}\nscale: {}\n", rubric.pass_threshold, rubric.scale_max);
  for (const auto& dim : rubric.dimensions) {
    out += fmt::format("\n## {}\n", dim.name);
    for (const auto& item : dim.items) out += fmt::format("- {} [{}]\n", item.text, describe_check(item.check));
  }
  return out;
}

std::string rubric_digest(const Rubric& rubric) { return hex_digest(fnv1a64(serialize_rubric(rubric))); }

const Rubric& builtin_rubric() {
  static const Rubric rubric = parse_rule_document(embedded::rubric_md);
  return rubric;
}

}  // namespace skilltune
