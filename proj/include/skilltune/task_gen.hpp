#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skilltune/skill_model.hpp"

namespace skilltune {

namespace llm {
class Gateway;
}

enum class Split { Train, Test };
enum class Tier { Standard, Advanced, Boundary };
enum class CriterionKind { FileExists, KeywordPresent, RegexMatch };

std::string_view to_string(Split s) noexcept;
std::string_view to_string(Tier t) noexcept;
std::string_view to_string(CriterionKind k) noexcept;

struct Location {
  enum class Kind { Stdout, Stderr, OutputFile };
  Kind kind = Kind::Stdout;
  std::string path;  // OutputFile only

  static Location stdout_stream() { return {}; }
  static Location stderr_stream() { return {Kind::Stderr, {}}; }
  static Location file(std::string p) { return {Kind::OutputFile, std::move(p)}; }
  bool operator==(const Location&) const = default;
};

struct ValidationCriterion {
  CriterionKind kind = CriterionKind::KeywordPresent;
  std::string target;  // path, keyword or ECMAScript regex source
  Location where;
  int weight = 1;
  std::vector<std::string> keywords;  // concept keywords consulted in virtual mode

  bool operator==(const ValidationCriterion&) const = default;
};

/// Short human-readable form, e.g. `FileExists(out.json)`.
std::string describe(const ValidationCriterion& c);

struct Task {
  std::string id;
  Split split = Split::Train;
  Tier tier = Tier::Standard;
  std::string area;  // capability-profile area the task was generated from
  std::string description;
  std::vector<SourceFile> context;
  std::vector<ValidationCriterion> criteria;

  bool operator==(const Task&) const = default;
};

struct TaskSuite {
  std::string skill_name;
  std::vector<Task> train;
  std::vector<Task> test;
  std::uint64_t generation_seed = 0;
  std::string generator_version;

  bool operator==(const TaskSuite&) const = default;
};

inline constexpr std::string_view kGeneratorVersion = "taskgen/1";

struct GenerationConfig {
  int train_count = 12;
  int test_count = 8;
  std::uint64_t seed = 0;
};

/// Concept keywords attached to criteria for virtual-mode scoring, keyed by
/// criterion kind with optional per-rule overrides.
struct ConceptVocabulary {
  std::map<std::string, std::vector<std::string>> by_kind;
  std::map<std::string, std::vector<std::string>> by_trigger;

  const std::vector<std::string>& lookup(CriterionKind kind, std::string_view trigger) const;
  /// Every keyword the vocabulary can attach.
  std::vector<std::string> all_keywords() const;

  static const ConceptVocabulary& builtin();
  static ConceptVocabulary from_json(std::string_view json_text);
};

/// Regex sources attached by the format and error rules.
inline constexpr std::string_view kJsonObjectRegex = R"((^|\n)\s*\{)";
inline constexpr std::string_view kCsvRowRegex = R"([^,\n]+,[^,\n]+)";
inline constexpr std::string_view kErrorReportRegex = R"([Ee]rror|ERROR|[Ii]nvalid|INVALID|[Ww]arning)";

/// Derives criteria from the task description; never leaves criteria empty.
Task attach_validation_criteria(Task task, std::string_view skill_name,
                                const ConceptVocabulary& vocab = ConceptVocabulary::builtin());

/// Template generation with optional model phrasing. Throws InsufficientProfile
/// or InvalidConfig.
TaskSuite generate_task_suite(const CapabilityProfile& profile, const SkillPackage& pkg, const GenerationConfig& cfg,
                              const llm::Gateway* gateway = nullptr,
                              const ConceptVocabulary& vocab = ConceptVocabulary::builtin());

/// Cross-split substring collisions between task descriptions.
std::vector<std::string> verify_isolation(const TaskSuite& suite);

const Task* find_task(const TaskSuite& suite, std::string_view id);

nlohmann::ordered_json to_json(const ValidationCriterion& c);
nlohmann::ordered_json to_json(const Task& t);
nlohmann::ordered_json to_json(const TaskSuite& s);
ValidationCriterion criterion_from_json(const nlohmann::json& j);
Task task_from_json(const nlohmann::json& j);
TaskSuite suite_from_json(const nlohmann::json& j);

/// Canonical tasks.json text (stable key order, trailing newline).
std::string serialize_suite(const TaskSuite& suite);

}  // namespace skilltune
