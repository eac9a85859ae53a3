#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skilltune/evaluator.hpp"
#include "skilltune/exec_engine.hpp"
#include "skilltune/llm_gateway.hpp"
#include "skilltune/optimizer.hpp"
#include "skilltune/task_gen.hpp"

namespace skilltune {

inline constexpr std::string_view kToolVersion = "skilltune 0.1.0";

struct PipelineConfig {
  std::filesystem::path skill_dir;
  Mode mode = Mode::Real;
  int num_epochs = 3;
  int group_size = 3;
  int max_iterations = 2;
  int train_count = 12;
  int test_count = 8;
  double pass_threshold = kDefaultPassThreshold;
  int parallelism = 4;
  std::uint64_t seed = 0;
  llm::GatewayConfig gateway;
  ExecLimits limits;
  std::filesystem::path output_dir = "skilltune-out";
  /// Use this package as the optimized version instead of running the optimizer.
  std::optional<std::filesystem::path> candidate_dir;
};

/// Throws InvalidConfig when a count is < 1 or the threshold is outside (0, 1].
void validate(const PipelineConfig& cfg);

/// Config echo written into the report. Output location is left out so the
/// report does not depend on where it is written.
nlohmann::ordered_json config_snapshot(const PipelineConfig& cfg);

struct PerTaskEntry {
  std::string task_id;
  Tier tier = Tier::Standard;
  std::string area;
  TaskScore original;
  TaskScore optimized;
  double delta = 0.0;
  bool operator==(const PerTaskEntry&) const = default;
};

struct BoundaryEntry {
  std::string area;
  std::size_t tasks = 0;
  std::size_t original_passed = 0;
  std::size_t optimized_passed = 0;
  double original_mean = 0.0;
  double optimized_mean = 0.0;
  std::vector<std::string> still_failing;  // "task_id: criterion" for the optimized version
  bool operator==(const BoundaryEntry&) const = default;
};

struct HistorySummary {
  std::string path = "history.json";
  std::size_t epochs = 0;
  std::size_t instruction_evaluations = 0;
  std::size_t code_pathway_entries = 0;
  std::size_t fix_attempts = 0;
  std::string source;  // "optimizer" or "candidate"
  bool operator==(const HistorySummary&) const = default;
};

struct RunReport {
  std::string tool_version{kToolVersion};
  std::string skill_name;
  SkillType skill_type = SkillType::InstructionOnly;
  std::string original_digest;
  std::string optimized_digest;
  nlohmann::ordered_json config;
  std::string suite_digest;
  std::string generator_version;
  std::string rubric_digest;
  EnvReport environment;
  std::size_t execution_records = 0;
  MetricsSummary original_metrics;
  MetricsSummary optimized_metrics;
  std::vector<PerTaskEntry> per_task;
  std::vector<BoundaryEntry> boundary_analysis;
  DimensionScores original_quality;
  DimensionScores optimized_quality;
  HistorySummary history;
  Decision decision;
  std::vector<std::string> notes;

  bool operator==(const RunReport&) const = default;
};

nlohmann::ordered_json to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::json& j);
std::string serialize_report(const RunReport& r);
std::string render_markdown(const RunReport& r);

enum class ReportFormat { Json, Markdown };

/// Writes report.json and/or report.md into `dir`. Throws WriteFailure.
std::vector<std::filesystem::path> emit_report(const RunReport& r, const std::set<ReportFormat>& formats,
                                               const std::filesystem::path& dir);

/// Capability-area rollup of paired test scores.
std::vector<BoundaryEntry> boundary_analysis(const std::vector<PerTaskEntry>& per_task, const std::vector<Task>& tests);

/// Writes a package tree (root files, then the in-memory documents and code).
void write_package(const SkillPackage& pkg, const std::filesystem::path& dir);

struct PipelineHooks {
  std::shared_ptr<llm::Transport> transport;  // default: HTTP
  OptimizerProbe probe;
};

struct PipelineOutcome {
  RunReport report;
  TaskSuite suite;
  OptimizationHistory history;
  ComparativeRunLog log;
  std::vector<std::filesystem::path> written;
};

/// parse, profile, generate, optimize, compare, evaluate, decide, persist.
PipelineOutcome run_pipeline(const PipelineConfig& cfg, const PipelineHooks& hooks = {});

}  // namespace skilltune
