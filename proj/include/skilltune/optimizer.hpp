#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skilltune/evaluator.hpp"
#include "skilltune/exec_engine.hpp"
#include "skilltune/llm_gateway.hpp"
#include "skilltune/rubric.hpp"
#include "skilltune/skill_model.hpp"
#include "skilltune/task_gen.hpp"

namespace skilltune {

/// Observes every text the optimizer consumes (prompts, lessons, failure
/// evidence). `stage` names the consumer.
using OptimizerProbe = std::function<void(std::string_view stage, std::string_view input)>;

struct Variant {
  std::string id;
  std::string instruction;
};

struct VariantGroup {
  int epoch = 1;
  std::string base_instruction;
  std::vector<Variant> variants;  // variants[0] is the unmodified incumbent
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::size_t selected = 0;
  std::string proposal_source = "fallback";  // or "llm"
};

struct Lesson {
  int epoch = 0;
  std::string variant_id;
  std::vector<std::string> failed_criteria;
  double advantage = 0.0;
};

class LessonLedger {
 public:
  void append(Lesson lesson) { entries_.push_back(std::move(lesson)); }
  const std::vector<Lesson>& entries() const noexcept { return entries_; }
  /// Up to `cap` most recent entries with negative advantage, oldest first.
  std::vector<Lesson> recent_negative(std::size_t cap = 10) const;

 private:
  std::vector<Lesson> entries_;
};

enum class IssueClass { DependencyConflict, ParameterMisconfiguration, PathError, Other };
std::string_view to_string(IssueClass c) noexcept;

/// Classifies failure text using the stderr pattern tables.
IssueClass classify_failure(std::string_view failure_text);

struct FixAttempt {
  int iteration = 1;
  IssueClass issue_class = IssueClass::Other;
  std::string patch_description;
  double resulting_train_score = 0.0;
};

/// Mean normalized train score plus the raw material behind it.
struct TrainEval {
  double score = 0.0;
  std::vector<ExecutionRecord> records;
  std::vector<TaskScore> scores;
};

using TrainEvaluator = std::function<TrainEval(const SkillPackage&)>;

// ---- instruction pathway ----

/// `count` distinct rewrites of `base`. Uses the gateway when enabled, else
/// appends one catalogued section per variant. Throws DegenerateBase.
std::vector<std::string> propose_variants(std::string_view base, const LessonLedger& lessons, std::size_t count,
                                          const llm::Gateway* gateway = nullptr, const OptimizerProbe& probe = {});

/// Population z-scores; all zero when the rewards do not vary.
std::vector<double> group_relative_advantages(const std::vector<double>& rewards);

/// Argmax of rewards, lowest index on ties; stored into group.selected.
std::size_t select_variant(VariantGroup& group);

// ---- code pathway ----

struct RuleChange {
  std::string file;
  std::string rule;
  std::string note;
};

struct RuleResult {
  std::vector<SourceFile> files;
  std::vector<RuleChange> applied;
  std::vector<RuleChange> skipped;
};

/// Rule names: entry-guard, arg-validation, memoize-reads.
const std::vector<std::string>& rule_catalog();

/// Applies the catalogued transforms, each at most once per file.
RuleResult apply_rule_optimizations(const std::vector<SourceFile>& code_files);

/// Refined commands: workspace-relative paths, and model-filled flags when a gateway is enabled.
std::vector<CommandSpec> refine_commands(const SkillPackage& pkg, const llm::Gateway* gateway = nullptr,
                                         const OptimizerProbe& probe = {});

/// Package with `commands` installed and every changed command line rewritten in the instruction.
SkillPackage with_commands(const SkillPackage& pkg, const std::vector<CommandSpec>& commands);

struct AutoFixResult {
  SkillPackage package;
  std::vector<FixAttempt> attempts;
  double initial_score = 0.0;
  double final_score = 0.0;
};

/// Classify, patch, re-run, repeat. Returns the best-scoring intermediate.
AutoFixResult auto_fix(const SkillPackage& pkg, const std::vector<ExecutionRecord>& failures, int max_iterations,
                       const TrainEvaluator& evaluate, const OptimizerProbe& probe = {});

// ---- driver ----

struct OptimizerConfig {
  int num_epochs = 3;
  int group_size = 3;
  int max_iterations = 2;
  std::size_t parallelism = 4;
  std::size_t lesson_cap = 10;
};

struct CodeStep {
  std::string step;  // rule_transforms, refine_commands, auto_fix
  double score_before = 0.0;
  double score_after = 0.0;
  bool kept = false;
  std::vector<std::string> changes;
};

struct EpochHistory {
  int epoch = 1;
  double baseline_before = 0.0;
  VariantGroup group;
  std::vector<CodeStep> code_steps;
  std::vector<FixAttempt> fix_attempts;
  double baseline_after = 0.0;
};

struct OptimizationHistory {
  OptimizerConfig config;
  std::vector<EpochHistory> epochs;
  LessonLedger lessons;

  std::size_t instruction_evaluations() const noexcept;
  std::size_t code_pathway_entries() const noexcept;
};

nlohmann::ordered_json to_json(const OptimizationHistory& h);

struct OptimizeResult {
  SkillPackage package;
  OptimizationHistory history;
};

/// Builds the train-set evaluator used by optimize_skill.
TrainEvaluator make_train_evaluator(const std::vector<Task>& train, const ExecContext& ctx, const Rubric& rubric,
                                    std::size_t parallelism);

/// Epoch loop over the train split only. Throws DegenerateBase.
OptimizeResult optimize_skill(const SkillPackage& pkg, const TaskSuite& suite, const OptimizerConfig& cfg,
                              const ExecContext& ctx, const Rubric& rubric, const llm::Gateway* gateway = nullptr,
                              const OptimizerProbe& probe = {});

}  // namespace skilltune
