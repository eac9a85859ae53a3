#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "skilltune/exec_engine.hpp"
#include "skilltune/llm_gateway.hpp"
#include "skilltune/rubric.hpp"
#include "skilltune/task_gen.hpp"

namespace skilltune {

inline constexpr std::size_t kEvidenceCap = 512;

struct CriterionResult {
  std::size_t index = 0;
  bool satisfied = false;
  std::string evidence;
  bool operator==(const CriterionResult&) const = default;
};

struct TaskScore {
  std::string task_id;
  SkillVersion version;
  Tier tier = Tier::Standard;
  std::vector<CriterionResult> per_criterion;
  std::size_t points = 0;
  std::size_t max_points = 1;
  double normalized = 0.0;
  bool passed = false;
  std::string rubric_digest;

  bool operator==(const TaskScore&) const = default;
};

/// Inclusive threshold comparison.
bool meets_threshold(double normalized, double threshold) noexcept;

/// Fills points, max_points, normalized and passed from per_criterion.
void finalize_score(TaskScore& score, double threshold);

/// Checks every criterion of `task` against `record`. Pure.
TaskScore evaluate_task(const ExecutionRecord& record, const Task& task, const Rubric& rubric);

struct MetricsSummary {
  std::size_t task_count = 0;
  double pass_rate = 0.0;
  double average_score = 0.0;
  std::optional<double> standard_score;  // absent when the tier has no tasks
  std::optional<double> advanced_score;
  double error_rate = 0.0;

  bool operator==(const MetricsSummary&) const = default;
};

MetricsSummary compute_metrics(const std::vector<TaskScore>& scores, const std::vector<ExecutionRecord>& records);

enum class Verdict { Retain, Discard };
std::string_view to_string(Verdict v) noexcept;

struct Decision {
  Verdict verdict = Verdict::Discard;
  std::string justification;
  std::vector<std::string> evidence_refs;
  bool operator==(const Decision&) const = default;
};

/// Retain iff the average strictly improves and the pass rate does not drop.
/// `deltas` (task id, optimized - original) feeds evidence_refs.
Decision decide_retention(const MetricsSummary& original, const MetricsSummary& optimized,
                          std::span<const std::pair<std::string, double>> deltas = {});

struct DimensionScore {
  std::string name;
  double score = 0.0;
  std::string evidence;
  bool operator==(const DimensionScore&) const = default;
};

enum class ScoringMode { Llm, Heuristic };
std::string_view to_string(ScoringMode m) noexcept;

struct DimensionScores {
  ScoringMode mode = ScoringMode::Heuristic;
  std::vector<DimensionScore> per_dimension;
  double overall = 0.0;
  std::vector<std::string> warnings;
  bool operator==(const DimensionScores&) const = default;
};

/// Whether one rubric item's mechanical check holds for `instruction`.
bool check_item(const CriterionItem& item, std::string_view instruction);

DimensionScores evaluate_instruction_heuristic(std::string_view instruction, const Rubric& rubric);

/// One structured model call (one retry on an invalid payload), heuristic fallback otherwise.
DimensionScores evaluate_instruction_llm(std::string_view instruction, const Rubric& rubric, const llm::Gateway& gateway);

nlohmann::ordered_json to_json(const TaskScore& s);
nlohmann::ordered_json to_json(const MetricsSummary& m);
nlohmann::ordered_json to_json(const Decision& d);
nlohmann::ordered_json to_json(const DimensionScores& d);
TaskScore task_score_from_json(const nlohmann::json& j);
MetricsSummary metrics_from_json(const nlohmann::json& j);
Decision decision_from_json(const nlohmann::json& j);
DimensionScores dimension_scores_from_json(const nlohmann::json& j);

}  // namespace skilltune
