#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace skilltune {

/// Every group must match unless min_groups says otherwise; a group matches
/// when any of its alternatives occurs at the start of a word.
struct KeywordSet {
  std::vector<std::vector<std::string>> groups;
  std::size_t min_groups = 0;  // 0 = all groups

  std::size_t required() const noexcept { return min_groups == 0 ? groups.size() : min_groups; }
  bool operator==(const KeywordSet&) const = default;
};

struct StructureRule {
  std::string name;
  std::string arg;
  bool operator==(const StructureRule&) const = default;
};

struct StatRule {
  std::string metric;
  double lo = 0.0;
  double hi = 0.0;
  bool hi_exclusive = false;

  bool contains(double v) const noexcept { return v >= lo && (hi_exclusive ? v < hi : v <= hi); }
  bool operator==(const StatRule&) const = default;
};

using MechanicalCheck = std::variant<KeywordSet, StructureRule, StatRule>;

/// Judged by the model; `proxy` is what heuristic mode falls back on.
struct LlmOnly {
  std::optional<MechanicalCheck> proxy;
  bool operator==(const LlmOnly&) const = default;
};

using CriterionCheck = std::variant<KeywordSet, StructureRule, StatRule, LlmOnly>;

struct CriterionItem {
  std::string text;
  CriterionCheck check = LlmOnly{};
  bool operator==(const CriterionItem&) const = default;
};

struct Dimension {
  std::string name;
  std::vector<CriterionItem> items;

  std::size_t max_points() const noexcept { return items.size(); }
  bool operator==(const Dimension&) const = default;
};

struct Rubric {
  std::vector<Dimension> dimensions;
  double pass_threshold = 0.70;
  double scale_max = 100.0;

  std::size_t total_points() const noexcept;
  bool operator==(const Rubric&) const = default;
};

inline constexpr double kDefaultPassThreshold = 0.70;

/// The 8-dimension document-quality catalog bundled with the library.
const Rubric& builtin_rubric();

/// Parses `## Dimension` / `- item [annotation]` documents. Throws EmptyRubric
/// or InvalidRubric.
Rubric parse_rule_document(std::string_view doc);

std::string serialize_rubric(const Rubric& rubric);

/// Digest of the serialized form; identical rubrics share a digest.
std::string rubric_digest(const Rubric& rubric);

std::string describe_check(const CriterionCheck& check);

const std::vector<std::string>& known_structure_rules();
const std::vector<std::string>& known_stat_metrics();

}  // namespace skilltune
