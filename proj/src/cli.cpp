#include "skilltune/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "skilltune/error.hpp"
#include "skilltune/rubric.hpp"

namespace fs = std::filesystem;

namespace skilltune {
namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(content.data(), static_cast<std::streamsize>(content.size()))) throw WriteFailure(path);
}

void install_logger(bool verbose, bool quiet) {
  auto logger = spdlog::get("skilltune");
  if (!logger) logger = spdlog::stderr_color_mt("skilltune");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);
}

struct GatewayFlags {
  bool offline = false;
  bool trace = false;
};

void add_gateway_options(CLI::App* cmd, PipelineConfig& cfg, GatewayFlags& flags) {
  cmd->add_flag("--offline", flags.offline, "Never contact the model; use heuristic fallbacks");
  cmd->add_flag("--trace-llm", flags.trace, "Log model requests and responses (token redacted)");
  cmd->add_option("--endpoint", cfg.gateway.endpoint, "Chat-completion endpoint URL")->capture_default_str();
  cmd->add_option("--model", cfg.gateway.model, "Model name")->capture_default_str();
  cmd->add_option("--api-key-env", cfg.gateway.api_key_env, "Environment variable holding the API key")->capture_default_str();
  cmd->add_option("--llm-timeout-ms", cfg.gateway.timeout_ms, "Per-request model timeout")->capture_default_str();
  cmd->add_option("--llm-retries", cfg.gateway.max_retries, "Retries on timeout or 5xx")->capture_default_str();
}

void add_generation_options(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_option("--skill-dir", cfg.skill_dir, "Skill package directory")->required();
  cmd->add_option("--train-count", cfg.train_count, "Train tasks to generate")->capture_default_str();
  cmd->add_option("--test-count", cfg.test_count, "Test tasks to generate")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "Seed for task generation")->capture_default_str();
}

}  // namespace

int cli_main(int argc, const char* const* argv, const PipelineHooks& hooks) {
  CLI::App app{"Generate tasks for an agent skill, optimize it, compare both versions and decide whether to keep the result.",
               "skilltune"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

  PipelineConfig cfg;
  GatewayFlags gw_flags;
  std::string mode = "real";

  auto* run = app.add_subcommand("run", "Full pipeline: generate, optimize, execute, evaluate, decide");
  add_generation_options(run, cfg);
  run->add_option("--mode", mode, "Execution mode")->check(CLI::IsMember({"real", "virtual"}, CLI::ignore_case))->capture_default_str();
  run->add_option("--num-epochs,--epochs", cfg.num_epochs, "Optimization epochs")->capture_default_str();
  run->add_option("--group-size", cfg.group_size, "Variants per epoch, incumbent included")->capture_default_str();
  run->add_option("--max-iterations", cfg.max_iterations, "Auto-fix iterations")->capture_default_str();
  run->add_option("--pass-threshold", cfg.pass_threshold, "Fraction of points needed to pass a task")->capture_default_str();
  run->add_option("--parallelism", cfg.parallelism, "Concurrent task executions")->capture_default_str();
  run->add_option("--timeout-ms", cfg.limits.timeout_ms, "Per-command timeout")->capture_default_str();
  run->add_option("--max-output-bytes", cfg.limits.max_output_bytes, "Captured bytes per stream")->capture_default_str();
  run->add_option("--output-dir", cfg.output_dir, "Where reports are written")->capture_default_str();
  std::string candidate;
  run->add_option("--candidate-dir", candidate, "Compare against this package instead of optimizing");
  add_gateway_options(run, cfg, gw_flags);

  auto* gen = app.add_subcommand("generate-tasks", "Generate and print the task suite only");
  add_generation_options(gen, cfg);
  std::string tasks_out;
  gen->add_option("-o,--output", tasks_out, "Write tasks.json here instead of stdout");
  add_gateway_options(gen, cfg, gw_flags);

  auto* eval = app.add_subcommand("evaluate", "Score an existing execution log against its tasks");
  std::string log_path, tasks_path, eval_out;
  eval->add_option("--log", log_path, "execution.log.jsonl from a run")->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", tasks_path, "tasks.json from the same run")->required()->check(CLI::ExistingFile);
  eval->add_option("--pass-threshold", cfg.pass_threshold, "Fraction of points needed to pass a task")->capture_default_str();
  eval->add_option("-o,--output", eval_out, "Write the evaluation JSON here instead of stdout");

  auto* rep = app.add_subcommand("report", "Re-render report.md from report.json");
  std::string report_in, report_out;
  rep->add_option("--report", report_in, "report.json")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--output", report_out, "Markdown destination (default: next to report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return 2;
  }

  install_logger(verbose, quiet);
  cfg.gateway.offline = gw_flags.offline;
  cfg.gateway.trace = gw_flags.trace;

  try {
    if (*run) {
      cfg.mode = parse_mode(mode).value_or(Mode::Real);
      if (!candidate.empty()) cfg.candidate_dir = fs::path(candidate);
      validate(cfg);
      auto outcome = run_pipeline(cfg, hooks);
      for (const auto& p : outcome.written) std::cout << p.string() << "\n";
      return 0;
    }
    if (*gen) {
      if (cfg.train_count < 1 || cfg.test_count < 1) throw InvalidConfig("task counts must be >= 1");
      const auto pkg = parse_skill_package(cfg.skill_dir);
      auto transport = hooks.transport ? hooks.transport : llm::make_http_transport();
      const llm::Gateway gateway(cfg.gateway, transport);
      const auto suite = generate_task_suite(extract_capability_profile(pkg), pkg,
                                             {cfg.train_count, cfg.test_count, cfg.seed}, &gateway);
      if (tasks_out.empty()) {
        std::cout << serialize_suite(suite);
      } else {
        write_file(tasks_out, serialize_suite(suite));
      }
      return 0;
    }
    if (*eval) {
      if (!(cfg.pass_threshold > 0.0 && cfg.pass_threshold <= 1.0)) throw InvalidConfig("pass_threshold must lie in (0, 1]");
      const auto suite = suite_from_json(nlohmann::json::parse(read_file(tasks_path)));
      const auto records = parse_execution_log(read_file(log_path));
      Rubric rubric = builtin_rubric();
      rubric.pass_threshold = cfg.pass_threshold;
      std::vector<TaskScore> orig_scores, opt_scores;
      std::vector<ExecutionRecord> orig_records, opt_records;
      std::vector<std::pair<std::string, double>> deltas;
      nlohmann::ordered_json per_task = nlohmann::ordered_json::array();
      for (const auto& task : suite.test) {
        const ExecutionRecord* o = nullptr;
        const ExecutionRecord* p = nullptr;
        for (const auto& r : records) {
          if (r.task_id != task.id) continue;
          if (r.version.kind == SkillVersion::Kind::Original) o = &r;
          if (r.version.kind == SkillVersion::Kind::Optimized) p = &r;
        }
        if (o == nullptr || p == nullptr) throw Error(fmt::format("log has no record pair for test task {}", task.id));
        orig_scores.push_back(evaluate_task(*o, task, rubric));
        opt_scores.push_back(evaluate_task(*p, task, rubric));
        orig_records.push_back(*o);
        opt_records.push_back(*p);
        const double delta = opt_scores.back().normalized - orig_scores.back().normalized;
        deltas.emplace_back(task.id, delta);
        per_task.push_back({{"task_id", task.id},
                            {"delta", delta},
                            {"original", to_json(orig_scores.back())},
                            {"optimized", to_json(opt_scores.back())}});
      }
      const auto mo = compute_metrics(orig_scores, orig_records);
      const auto mp = compute_metrics(opt_scores, opt_records);
      nlohmann::ordered_json j;
      j["metrics"] = {{"original", to_json(mo)}, {"optimized", to_json(mp)}};
      j["decision"] = to_json(decide_retention(mo, mp, deltas));
      j["per_task"] = per_task;
      const std::string text = j.dump(2) + "\n";
      if (eval_out.empty()) {
        std::cout << text;
      } else {
        write_file(eval_out, text);
      }
      return 0;
    }
    if (*rep) {
      const auto report = report_from_json(nlohmann::json::parse(read_file(report_in)));
      const fs::path dest = report_out.empty() ? fs::path(report_in).parent_path() / "report.md" : fs::path(report_out);
      write_file(dest, render_markdown(report));
      std::cout << dest.string() << "\n";
      return 0;
    }
  } catch (const InvalidConfig& e) {
    spdlog::error("{}", e.what());
    std::cerr << app.help();
    return 2;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("malformed input: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("fatal: {}", e.what());
    return 1;
  }
  return 2;
}

}  // namespace skilltune
