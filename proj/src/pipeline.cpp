#include "skilltune/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "skilltune/error.hpp"
#include "skilltune/hash.hpp"
#include "skilltune/rubric.hpp"
#include "skilltune/text.hpp"

namespace fs = std::filesystem;

namespace skilltune {
namespace {

using json = nlohmann::ordered_json;

Tier tier_from_string(std::string_view s) {
  if (s == "Advanced") return Tier::Advanced;
  if (s == "Boundary") return Tier::Boundary;
  return Tier::Standard;
}

void write_text(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WriteFailure(path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw WriteFailure(path);
}

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw WriteFailure(dir);
  const fs::path probe = dir / ".skilltune-write-test";
  {
    std::ofstream out(probe);
    if (!out) throw WriteFailure(dir);
  }
  fs::remove(probe, ec);
  // A previous Retain must not leave a stale optimized/ behind a Discard.
  fs::remove_all(dir / "optimized", ec);
}

std::string pct(double v) { return fmt::format("{:.2f}%", v * 100.0); }
std::string num(double v) { return fmt::format("{:.3f}", v); }
std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string("n/a"); }
std::string signed_num(double v) { return fmt::format("{:+.3f}", v); }

json summary_json(const HistorySummary& h) {
  json j;
  j["path"] = h.path;
  j["source"] = h.source;
  j["epochs"] = h.epochs;
  j["instruction_evaluations"] = h.instruction_evaluations;
  j["code_pathway_entries"] = h.code_pathway_entries;
  j["fix_attempts"] = h.fix_attempts;
  return j;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Parsed objects come back key-sorted; restore the order config_snapshot writes.
json in_snapshot_order(const nlohmann::json& src, const json& shape) {
  if (!src.is_object() || !shape.is_object()) return json::parse(src.dump());
  json out = json::object();
  for (const auto& [key, sub] : shape.items()) {
    if (src.contains(key)) out[key] = in_snapshot_order(src.at(key), sub);
  }
  for (const auto& [key, value] : src.items()) {
    if (!out.contains(key)) out[key] = json::parse(value.dump());
  }
  return out;
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw InvalidConfig(fmt::format("{} must be >= 1 (got {})", name, v));
  };
  positive(cfg.num_epochs, "num_epochs");
  positive(cfg.group_size, "group_size");
  positive(cfg.max_iterations, "max_iterations");
  positive(cfg.train_count, "train_count");
  positive(cfg.test_count, "test_count");
  positive(cfg.parallelism, "parallelism");
  if (cfg.group_size < 2) throw InvalidConfig("group_size must be >= 2 so the incumbent competes with a variant");
  if (!(cfg.pass_threshold > 0.0 && cfg.pass_threshold <= 1.0)) {
    throw InvalidConfig(fmt::format("pass_threshold must lie in (0, 1] (got {})", cfg.pass_threshold));
  }
  if (cfg.limits.timeout_ms < 1) throw InvalidConfig("timeout_ms must be >= 1");
}

json config_snapshot(const PipelineConfig& cfg) {
  json j;
  j["skill_dir"] = cfg.skill_dir.generic_string();
  j["mode"] = to_string(cfg.mode);
  j["num_epochs"] = cfg.num_epochs;
  j["group_size"] = cfg.group_size;
  j["max_iterations"] = cfg.max_iterations;
  j["train_count"] = cfg.train_count;
  j["test_count"] = cfg.test_count;
  j["pass_threshold"] = cfg.pass_threshold;
  j["parallelism"] = cfg.parallelism;
  j["seed"] = cfg.seed;
  j["gateway"] = {{"endpoint", cfg.gateway.endpoint},       {"model", cfg.gateway.model},
                  {"api_key_env", cfg.gateway.api_key_env}, {"timeout_ms", cfg.gateway.timeout_ms},
                  {"max_retries", cfg.gateway.max_retries}, {"offline", cfg.gateway.offline}};
  j["exec"] = {{"timeout_ms", cfg.limits.timeout_ms}, {"max_output_bytes", cfg.limits.max_output_bytes}};
  j["candidate_dir"] = cfg.candidate_dir ? json(cfg.candidate_dir->generic_string()) : json(nullptr);
  return j;
}

std::vector<BoundaryEntry> boundary_analysis(const std::vector<PerTaskEntry>& per_task, const std::vector<Task>& tests) {
  std::map<std::string, BoundaryEntry> by_area;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> means;
  std::vector<std::string> order;
  for (const auto& e : per_task) {
    const std::string area = e.area.empty() ? "unassigned" : e.area;
    if (!by_area.contains(area)) {
      order.push_back(area);
      by_area[area].area = area;
    }
    auto& b = by_area[area];
    ++b.tasks;
    if (e.original.passed) ++b.original_passed;
    if (e.optimized.passed) ++b.optimized_passed;
    means[area].first.push_back(e.original.normalized);
    means[area].second.push_back(e.optimized.normalized);
    const Task* task = nullptr;
    for (const auto& t : tests) {
      if (t.id == e.task_id) task = &t;
    }
    for (const auto& r : e.optimized.per_criterion) {
      if (r.satisfied) continue;
      const std::string what = task && r.index < task->criteria.size() ? describe(task->criteria[r.index])
                                                                         : fmt::format("criterion {}", r.index);
      b.still_failing.push_back(fmt::format("{}: {}", e.task_id, what));
    }
  }
  std::sort(order.begin(), order.end());
  std::vector<BoundaryEntry> out;
  for (const auto& area : order) {
    auto b = by_area[area];
    b.original_mean = mean_of(means[area].first);
    b.optimized_mean = mean_of(means[area].second);
    out.push_back(std::move(b));
  }
  return out;
}

json to_json(const RunReport& r) {
  json j;
  j["tool_version"] = r.tool_version;
  j["skill"] = {{"name", r.skill_name},
                {"skill_type", to_string(r.skill_type)},
                {"original_digest", r.original_digest},
                {"optimized_digest", r.optimized_digest}};
  j["config"] = r.config;
  j["suite"] = {{"digest", r.suite_digest}, {"generator_version", r.generator_version}};
  j["rubric_digest"] = r.rubric_digest;
  j["environment"] = {{"required", r.environment.required}, {"present", r.environment.present}, {"missing", r.environment.missing}};
  j["execution_records"] = r.execution_records;
  j["metrics"] = {{"original", to_json(r.original_metrics)}, {"optimized", to_json(r.optimized_metrics)}};
  j["per_task"] = json::array();
  for (const auto& e : r.per_task) {
    json ej;
    ej["task_id"] = e.task_id;
    ej["tier"] = to_string(e.tier);
    ej["area"] = e.area;
    ej["delta"] = e.delta;
    ej["original"] = to_json(e.original);
    ej["optimized"] = to_json(e.optimized);
    j["per_task"].push_back(ej);
  }
  j["boundary_analysis"] = json::array();
  for (const auto& b : r.boundary_analysis) {
    json bj;
    bj["area"] = b.area;
    bj["tasks"] = b.tasks;
    bj["original_passed"] = b.original_passed;
    bj["optimized_passed"] = b.optimized_passed;
    bj["original_mean"] = b.original_mean;
    bj["optimized_mean"] = b.optimized_mean;
    bj["still_failing"] = b.still_failing;
    j["boundary_analysis"].push_back(bj);
  }
  j["instruction_quality"] = {{"original", to_json(r.original_quality)}, {"optimized", to_json(r.optimized_quality)}};
  j["optimization_history"] = summary_json(r.history);
  j["decision"] = to_json(r.decision);
  j["notes"] = r.notes;
  return j;
}

RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.tool_version = j.at("tool_version").get<std::string>();
  const auto& skill = j.at("skill");
  r.skill_name = skill.at("name").get<std::string>();
  r.skill_type = skill.at("skill_type").get<std::string>() == "CodeInclusive" ? SkillType::CodeInclusive : SkillType::InstructionOnly;
  r.original_digest = skill.at("original_digest").get<std::string>();
  r.optimized_digest = skill.at("optimized_digest").get<std::string>();
  r.config = in_snapshot_order(j.at("config"), config_snapshot(PipelineConfig{}));
  r.suite_digest = j.at("suite").at("digest").get<std::string>();
  r.generator_version = j.at("suite").at("generator_version").get<std::string>();
  r.rubric_digest = j.at("rubric_digest").get<std::string>();
  const auto& env = j.at("environment");
  r.environment = {env.at("required").get<std::vector<std::string>>(), env.at("present").get<std::vector<std::string>>(),
                   env.at("missing").get<std::vector<std::string>>()};
  r.execution_records = j.at("execution_records").get<std::size_t>();
  r.original_metrics = metrics_from_json(j.at("metrics").at("original"));
  r.optimized_metrics = metrics_from_json(j.at("metrics").at("optimized"));
  for (const auto& e : j.at("per_task")) {
    r.per_task.push_back({e.at("task_id").get<std::string>(), tier_from_string(e.at("tier").get<std::string>()),
                          e.at("area").get<std::string>(), task_score_from_json(e.at("original")),
                          task_score_from_json(e.at("optimized")), e.at("delta").get<double>()});
  }
  for (const auto& b : j.at("boundary_analysis")) {
    r.boundary_analysis.push_back({b.at("area").get<std::string>(), b.at("tasks").get<std::size_t>(),
                                   b.at("original_passed").get<std::size_t>(), b.at("optimized_passed").get<std::size_t>(),
                                   b.at("original_mean").get<double>(), b.at("optimized_mean").get<double>(),
                                   b.at("still_failing").get<std::vector<std::string>>()});
  }
  r.original_quality = dimension_scores_from_json(j.at("instruction_quality").at("original"));
  r.optimized_quality = dimension_scores_from_json(j.at("instruction_quality").at("optimized"));
  const auto& h = j.at("optimization_history");
  r.history = {h.at("path").get<std::string>(),
               h.at("epochs").get<std::size_t>(),
               h.at("instruction_evaluations").get<std::size_t>(),
               h.at("code_pathway_entries").get<std::size_t>(),
               h.at("fix_attempts").get<std::size_t>(),
               h.at("source").get<std::string>()};
  r.decision = decision_from_json(j.at("decision"));
  r.notes = j.at("notes").get<std::vector<std::string>>();
  return r;
}

std::string serialize_report(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

std::string render_markdown(const RunReport& r) {
  const auto& o = r.original_metrics;
  const auto& p = r.optimized_metrics;
  std::string md = fmt::format("# Skill optimization report: {}\n\n", r.skill_name);
  md += fmt::format("Verdict: **{}**\n\n{}\n\n", to_string(r.decision.verdict), r.decision.justification);
  md += fmt::format("Skill type: {} | mode: {} | tool: {}\n\n", to_string(r.skill_type),
                    r.config.contains("mode") ? r.config["mode"].get<std::string>() : std::string("?"), r.tool_version);

  md += "## Comparison (Ori → Opt)\n\n";
  md += "| Skill | Score | Pass Rate | Standard Task Score | Advanced Task Score | Improvement |\n";
  md += "|---|---|---|---|---|---|\n";
  md += fmt::format("| {} | {} → {} | {} → {} | {} → {} | {} → {} | {} |\n\n", r.skill_name, num(o.average_score),
                    num(p.average_score), pct(o.pass_rate), pct(p.pass_rate), opt_num(o.standard_score),
                    opt_num(p.standard_score), opt_num(o.advanced_score), opt_num(p.advanced_score),
                    signed_num(p.average_score - o.average_score));
  md += fmt::format("Error rate: {} → {}\n\n", pct(o.error_rate), pct(p.error_rate));

  md += "## Per-Task Breakdown\n\n| Task | Tier | Area | Original | Optimized | Delta |\n|---|---|---|---|---|---|\n";
  for (const auto& e : r.per_task) {
    md += fmt::format("| {} | {} | {} | {}{} | {}{} | {} |\n", e.task_id, to_string(e.tier), e.area, num(e.original.normalized),
                      e.original.passed ? " ✓" : "", num(e.optimized.normalized), e.optimized.passed ? " ✓" : "",
                      signed_num(e.delta));
  }

  md += "\n## Capability Boundary Analysis\n\n| Area | Tasks | Passed (Ori → Opt) | Mean Score (Ori → Opt) | Still Failing |\n";
  md += "|---|---|---|---|---|\n";
  for (const auto& b : r.boundary_analysis) {
    std::string failing = b.still_failing.empty() ? "none" : text::join(b.still_failing, "<br>");
    failing = text::replace_all(failing, "|", "\\|");
    md += fmt::format("| {} | {} | {} → {} | {} → {} | {} |\n", b.area, b.tasks, b.original_passed, b.optimized_passed,
                      num(b.original_mean), num(b.optimized_mean), failing);
  }

  md += fmt::format("\n## Instruction Quality ({})\n\n| Dimension | Original | Optimized |\n|---|---|---|\n",
                    to_string(r.optimized_quality.mode));
  for (std::size_t i = 0; i < r.original_quality.per_dimension.size(); ++i) {
    const auto& a = r.original_quality.per_dimension[i];
    const double b = i < r.optimized_quality.per_dimension.size() ? r.optimized_quality.per_dimension[i].score : 0.0;
    md += fmt::format("| {} | {:.1f} | {:.1f} |\n", a.name, a.score, b);
  }
  md += fmt::format("| Overall | {:.1f} | {:.1f} |\n", r.original_quality.overall, r.optimized_quality.overall);

  md += fmt::format(
      "\n## Optimization History\n\nSource: {}. Epochs: {}, instruction evaluations: {}, code-pathway entries: {}, "
      "fix attempts: {}. Details in `{}`.\n",
      r.history.source, r.history.epochs, r.history.instruction_evaluations, r.history.code_pathway_entries,
      r.history.fix_attempts, r.history.path);

  md += "\n## Environment\n\n";
  md += fmt::format("Required: {}\n\nMissing: {}\n", r.environment.required.empty() ? "none" : text::join(r.environment.required, ", "),
                    r.environment.missing.empty() ? "none" : text::join(r.environment.missing, ", "));
  if (!r.notes.empty()) {
    md += "\n## Notes\n\n";
    for (const auto& n : r.notes) md += "- " + n + "\n";
  }
  return md;
}

std::vector<fs::path> emit_report(const RunReport& r, const std::set<ReportFormat>& formats, const fs::path& dir) {
  std::vector<fs::path> written;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (formats.contains(ReportFormat::Json)) {
    write_text(dir / "report.json", serialize_report(r));
    written.push_back(dir / "report.json");
  }
  if (formats.contains(ReportFormat::Markdown)) {
    write_text(dir / "report.md", render_markdown(r));
    written.push_back(dir / "report.md");
  }
  return written;
}

void write_package(const SkillPackage& pkg, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw WriteFailure(dir);
  if (!pkg.root.empty() && fs::is_directory(pkg.root, ec)) {
    for (auto it = fs::recursive_directory_iterator(pkg.root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      if (it->path().filename().string().starts_with(".")) {
        if (it->is_directory()) it.disable_recursion_pending();
        continue;
      }
      const auto rel = it->path().lexically_relative(pkg.root);
      if (it->is_directory()) {
        fs::create_directories(dir / rel, ec);
      } else if (it->is_regular_file()) {
        fs::create_directories((dir / rel).parent_path(), ec);
        fs::copy_file(it->path(), dir / rel, fs::copy_options::overwrite_existing, ec);
        if (ec) throw WriteFailure(dir / rel);
      }
    }
  }
  write_text(dir / pkg.instruction_path, pkg.instruction);
  for (const auto& d : pkg.auxiliary_docs) write_text(dir / d.path, d.text);
  for (const auto& c : pkg.code_files) {
    write_text(dir / c.path, c.text);
    fs::permissions(dir / c.path, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                    fs::perm_options::add, ec);
  }
}

PipelineOutcome run_pipeline(const PipelineConfig& cfg, const PipelineHooks& hooks) {
  using Clock = std::chrono::system_clock;
  const auto started = Clock::now();
  const auto steady_start = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, std::int64_t>> stage_ms;
  auto stage_clock = std::chrono::steady_clock::now();
  auto lap = [&](std::string name) {
    const auto now = std::chrono::steady_clock::now();
    stage_ms.emplace_back(std::move(name), std::chrono::duration_cast<std::chrono::milliseconds>(now - stage_clock).count());
    stage_clock = now;
  };

  validate(cfg);
  prepare_output_dir(cfg.output_dir);

  PipelineOutcome out;
  const SkillPackage original = parse_skill_package(cfg.skill_dir);
  for (const auto& w : original.warnings) spdlog::warn("{}: {}", original.name, w);
  const CapabilityProfile profile = extract_capability_profile(original);

  auto transport = hooks.transport ? hooks.transport : llm::make_http_transport();
  const llm::Gateway gateway(cfg.gateway, transport);
  spdlog::info("{}: {} skill, {} command(s), model {}", original.name, to_string(original.skill_type), original.commands.size(),
               gateway.enabled() ? "enabled" : "disabled (heuristic fallbacks)");

  GenerationConfig gen{cfg.train_count, cfg.test_count, cfg.seed};
  out.suite = generate_task_suite(profile, original, gen, &gateway);
  lap("generate");

  Rubric rubric = builtin_rubric();
  rubric.pass_threshold = cfg.pass_threshold;

  ExecContext ctx;
  ctx.mode = cfg.mode;
  ctx.limits = cfg.limits;
  ctx.frozen_seed = frozen_seed_for(original.instruction);

  SkillPackage optimized;
  RunReport& report = out.report;
  if (cfg.candidate_dir) {
    optimized = parse_skill_package(*cfg.candidate_dir);
    report.history.source = "candidate";
    report.notes.push_back("optimized version supplied as a candidate package; optimizer not run");
  } else {
    OptimizerConfig ocfg;
    ocfg.num_epochs = cfg.num_epochs;
    ocfg.group_size = cfg.group_size;
    ocfg.max_iterations = cfg.max_iterations;
    ocfg.parallelism = static_cast<std::size_t>(cfg.parallelism);
    auto result = optimize_skill(original, out.suite, ocfg, ctx, rubric, &gateway, hooks.probe);
    optimized = std::move(result.package);
    out.history = std::move(result.history);
    report.history.source = "optimizer";
  }
  lap("optimize");

  // Fresh runs of both versions on the held-out split.
  out.log = run_comparative(original, optimized, out.suite.test, ctx, static_cast<std::size_t>(cfg.parallelism));
  lap("execute");

  std::vector<TaskScore> orig_scores, opt_scores;
  std::vector<ExecutionRecord> orig_records, opt_records;
  for (std::size_t i = 0; i < out.suite.test.size(); ++i) {
    const auto& task = out.suite.test[i];
    const auto& ro = out.log.records[2 * i];
    const auto& rp = out.log.records[2 * i + 1];
    orig_scores.push_back(evaluate_task(ro, task, rubric));
    opt_scores.push_back(evaluate_task(rp, task, rubric));
    orig_records.push_back(ro);
    opt_records.push_back(rp);
    report.per_task.push_back({task.id, task.tier, task.area, orig_scores.back(), opt_scores.back(),
                               opt_scores.back().normalized - orig_scores.back().normalized});
  }
  report.original_metrics = compute_metrics(orig_scores, orig_records);
  report.optimized_metrics = compute_metrics(opt_scores, opt_records);
  std::vector<std::pair<std::string, double>> deltas;
  for (const auto& e : report.per_task) deltas.emplace_back(e.task_id, e.delta);
  report.decision = decide_retention(report.original_metrics, report.optimized_metrics, deltas);
  report.boundary_analysis = boundary_analysis(report.per_task, out.suite.test);

  if (gateway.enabled()) {
    report.original_quality = evaluate_instruction_llm(original.instruction, rubric, gateway);
    report.optimized_quality = evaluate_instruction_llm(optimized.instruction, rubric, gateway);
  } else {
    report.original_quality = evaluate_instruction_heuristic(original.instruction, rubric);
    report.optimized_quality = evaluate_instruction_heuristic(optimized.instruction, rubric);
  }
  lap("evaluate");

  report.skill_name = original.name;
  report.skill_type = original.skill_type;
  report.original_digest = package_digest(original);
  report.optimized_digest = package_digest(optimized);
  report.config = config_snapshot(cfg);
  report.suite_digest = hex_digest(fnv1a64(serialize_suite(out.suite)));
  report.generator_version = out.suite.generator_version;
  report.rubric_digest = rubric_digest(rubric);
  report.environment = check_environment(original);
  report.execution_records = out.log.records.size();
  report.history.epochs = out.history.epochs.size();
  report.history.instruction_evaluations = out.history.instruction_evaluations();
  report.history.code_pathway_entries = out.history.code_pathway_entries();
  for (const auto& e : out.history.epochs) report.history.fix_attempts += e.fix_attempts.size();
  report.notes.push_back("history.json is kept for both verdicts");
  if (!report.environment.missing.empty()) {
    report.notes.push_back("missing programs (not provisioned): " + text::join(report.environment.missing, ", "));
  }

  out.written = emit_report(report, {ReportFormat::Json, ReportFormat::Markdown}, cfg.output_dir);
  write_text(cfg.output_dir / "tasks.json", serialize_suite(out.suite));
  write_text(cfg.output_dir / "execution.log.jsonl", serialize_execution_log(out.log));
  write_text(cfg.output_dir / "history.json", to_json(out.history).dump(2) + "\n");
  out.written.push_back(cfg.output_dir / "tasks.json");
  out.written.push_back(cfg.output_dir / "execution.log.jsonl");
  out.written.push_back(cfg.output_dir / "history.json");
  if (report.decision.verdict == Verdict::Retain) {
    write_package(optimized, cfg.output_dir / "optimized");
    out.written.push_back(cfg.output_dir / "optimized");
  }
  lap("persist");

  json meta;
  meta["started_at"] = fmt::format("{:%Y-%m-%dT%H:%M:%S}Z", fmt::gmtime(Clock::to_time_t(started)));
  meta["duration_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - steady_start).count();
  meta["output_dir"] = cfg.output_dir.generic_string();
  meta["stages_ms"] = json::object();
  for (const auto& [name, ms] : stage_ms) meta["stages_ms"][name] = ms;
  std::int64_t exec_ms = 0;
  for (const auto& r : out.log.records) exec_ms += r.duration_ms;
  meta["execution_ms_total"] = exec_ms;
  write_text(cfg.output_dir / "run.meta.json", meta.dump(2) + "\n");
  out.written.push_back(cfg.output_dir / "run.meta.json");

  spdlog::info("{}: {} (average {:.3f} -> {:.3f}, pass rate {:.2f}% -> {:.2f}%)", report.skill_name,
               to_string(report.decision.verdict), report.original_metrics.average_score,
               report.optimized_metrics.average_score, report.original_metrics.pass_rate * 100.0,
               report.optimized_metrics.pass_rate * 100.0);
  return out;
}

}  // namespace skilltune
