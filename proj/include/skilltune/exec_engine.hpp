#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "skilltune/skill_model.hpp"
#include "skilltune/task_gen.hpp"

namespace skilltune {

enum class Mode { Real, Virtual };
std::string_view to_string(Mode m) noexcept;
std::optional<Mode> parse_mode(std::string_view s);

struct SkillVersion {
  enum class Kind { Original, Optimized, Variant };
  Kind kind = Kind::Original;
  std::string variant_id;

  static SkillVersion original() { return {}; }
  static SkillVersion optimized() { return {Kind::Optimized, {}}; }
  static SkillVersion variant(std::string id) { return {Kind::Variant, std::move(id)}; }
  std::string label() const;
  static SkillVersion parse(std::string_view label);
  bool operator==(const SkillVersion&) const = default;
};

struct Artifact {
  std::string path;
  std::uint64_t size = 0;
  std::string digest;                  // hex FNV-1a 64 of the file bytes
  std::optional<std::string> content;  // kept when size <= max_output_bytes
  bool operator==(const Artifact&) const = default;
};

struct ExecError {
  std::string error_class;  // Timeout, NonZeroExit, Crash, SpawnFailure, NoCommand, Io, Internal
  std::string message;
  bool partial_output_preserved = false;
  bool operator==(const ExecError&) const = default;
};

struct CriterionDraw {
  std::size_t criterion_index = 0;
  double keyword_coverage = 0.0;
  double draw = 0.0;
  bool passed = false;
  bool operator==(const CriterionDraw&) const = default;
};

struct VirtualOutcome {
  std::string task_id;
  std::vector<CriterionDraw> per_criterion;
  bool operator==(const VirtualOutcome&) const = default;
};

struct ExecutionRecord {
  std::string task_id;
  SkillVersion version;
  Mode mode = Mode::Real;
  std::optional<int> exit_code;
  std::string stdout_text;
  std::string stderr_text;
  bool truncated = false;
  std::vector<Artifact> artifacts;
  std::int64_t duration_ms = 0;
  std::optional<ExecError> error;
  std::optional<VirtualOutcome> virtual_outcome;

  bool operator==(const ExecutionRecord&) const = default;
};

struct EnvReport {
  std::vector<std::string> required;
  std::vector<std::string> present;
  std::vector<std::string> missing;
  bool operator==(const EnvReport&) const = default;
};

struct ExecLimits {
  int timeout_ms = 30000;
  std::size_t max_output_bytes = 1 << 20;
  std::filesystem::path temp_root;  // empty = system temp directory
};

/// Pass probability as a linear function of keyword coverage.
struct VirtualModel {
  double floor = 0.3;
  double span = 0.6;
  double pass_probability(double coverage) const noexcept { return floor + span * coverage; }
};

struct ExecContext {
  Mode mode = Mode::Real;
  ExecLimits limits;
  VirtualModel model;
  std::string frozen_seed;  // digest of the original instruction; virtual mode only
};

/// Digest used to seed virtual draws.
std::string frozen_seed_for(std::string_view original_instruction);

EnvReport check_environment(const SkillPackage& pkg);
bool program_on_path(std::string_view program);

/// Runs the package's commands for `task` in a fresh workspace that is removed
/// before returning. Never throws; failures become error-bearing records.
ExecutionRecord execute_task_real(const SkillPackage& pkg, const Task& task, const ExecLimits& limits,
                                  const SkillVersion& version = SkillVersion::original());

/// Keyword-coverage simulation with draws fixed by (frozen_seed, task, criterion).
std::pair<ExecutionRecord, VirtualOutcome> execute_task_virtual(std::string_view frozen_seed, std::string_view instruction,
                                                                const Task& task, const VirtualModel& model = {},
                                                                const SkillVersion& version = SkillVersion::original());

double keyword_coverage(std::string_view instruction, const std::vector<std::string>& keywords);
double criterion_draw(std::string_view frozen_seed, std::string_view task_id, std::size_t criterion_index);

ExecutionRecord execute(const SkillPackage& pkg, const Task& task, const SkillVersion& version, const ExecContext& ctx);

/// Runs every task against `pkg` on up to `parallelism` workers, results in task order.
std::vector<ExecutionRecord> execute_all(const SkillPackage& pkg, const std::vector<Task>& tasks,
                                         const SkillVersion& version, const ExecContext& ctx, std::size_t parallelism);

struct VersionStats {
  std::size_t total = 0;
  std::size_t succeeded = 0;
  double success_rate() const noexcept { return total == 0 ? 0.0 : static_cast<double>(succeeded) / static_cast<double>(total); }
};

struct ComparativeRunLog {
  Mode mode = Mode::Real;
  std::vector<ExecutionRecord> records;  // per task: Original then Optimized
  VersionStats original;
  VersionStats optimized;
  std::string environment_policy = "parent environment passed through unchanged";
};

ComparativeRunLog run_comparative(const SkillPackage& original, const SkillPackage& optimized, const std::vector<Task>& tests,
                                  const ExecContext& ctx, std::size_t parallelism);

nlohmann::ordered_json to_json(const ExecutionRecord& r);
ExecutionRecord record_from_json(const nlohmann::json& j);

/// JSON-lines text: a header line followed by one record per line.
std::string serialize_execution_log(const ComparativeRunLog& log);
std::vector<ExecutionRecord> parse_execution_log(std::string_view jsonl);

}  // namespace skilltune
