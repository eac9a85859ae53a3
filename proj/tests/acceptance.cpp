// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "skilltune/cli.hpp"
#include "skilltune/error.hpp"
#include "skilltune/evaluator.hpp"
#include "skilltune/exec_engine.hpp"
#include "skilltune/optimizer.hpp"
#include "skilltune/pipeline.hpp"
#include "skilltune/rubric.hpp"
#include "skilltune/skill_model.hpp"
#include "skilltune/task_gen.hpp"
#include "skilltune/text.hpp"
#include "test_support.hpp"

using namespace skilltune;
namespace fs = std::filesystem;

namespace {

// Failure details collected while a criterion runs.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 20) failures.push_back(what);
    if (!ok && failures.size() == 20) failures.push_back("(further failures suppressed)");
  }
};

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

PipelineConfig offline_config(const char* skill, Mode mode, const fs::path& out) {
  PipelineConfig cfg;
  cfg.skill_dir = testing::fixture(std::string("skills/") + skill);
  cfg.mode = mode;
  cfg.gateway.offline = true;
  cfg.output_dir = out;
  return cfg;
}

PipelineHooks silent_hooks() {
  PipelineHooks h;
  h.transport = std::make_shared<testing::RecordingTransport>();
  return h;
}

TaskSuite suite_for(const SkillPackage& pkg, std::uint64_t seed) {
  return generate_task_suite(extract_capability_profile(pkg), pkg, GenerationConfig{12, 8, seed});
}

// 1. Two CLI invocations, byte-identical report.json, each under 10 s.
void determinism(Check& c) {
  testing::TempDir dir("acc1");
  std::vector<std::string> reports;
  for (const char* sub : {"a", "b"}) {
    const auto cmd = fmt::format("env -u ANTHROPIC_API_KEY {} -q run --mode virtual --seed 7 --skill-dir {} --output-dir {}",
                                 quote(SKILLTUNE_CLI_PATH), quote(testing::fixture("skills/weather-brief")),
                                 quote(dir / sub));
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = std::system(cmd.c_str());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(rc == 0, fmt::format("run {} exited with {}", sub, rc));
    c.expect(secs < 10.0, fmt::format("run {} took {:.2f} s", sub, secs));
    reports.push_back(testing::read_file(dir / sub / "report.json"));
  }
  c.expect(!reports[0].empty(), "report.json missing");
  c.expect(reports[0] == reports[1], "report.json differs between runs");
}

// 2. Adding every concept keyword never turns a passing draw into a failure.
void keyword_monotonicity(Check& c) {
  for (const char* skill : {"weather-brief", "csv-summary"}) {
    const auto pkg = parse_skill_package(testing::fixture(std::string("skills/") + skill));
    const auto suite = suite_for(pkg, 7);
    const std::string seed = frozen_seed_for(pkg.instruction);
    std::string augmented = pkg.instruction + "\n";
    for (const auto& kw : ConceptVocabulary::builtin().all_keywords()) augmented += kw + "\n";
    std::vector<Task> all = suite.train;
    all.insert(all.end(), suite.test.begin(), suite.test.end());

    std::vector<TaskScore> before, after;
    std::vector<ExecutionRecord> rb, ra;
    std::size_t pairs = 0, flips = 0;
    for (const auto& task : all) {
      for (const auto& crit : task.criteria) {
        for (const auto& kw : crit.keywords) augmented += kw + "\n";
      }
    }
    for (const auto& task : all) {
      auto [r0, o0] = execute_task_virtual(seed, pkg.instruction, task, {}, SkillVersion::original());
      auto [r1, o1] = execute_task_virtual(seed, augmented, task, {}, SkillVersion::optimized());
      for (std::size_t i = 0; i < task.criteria.size(); ++i) {
        ++pairs;
        c.expect(o0.per_criterion[i].draw == o1.per_criterion[i].draw, task.id + ": draw changed");
        c.expect(o1.per_criterion[i].keyword_coverage >= o0.per_criterion[i].keyword_coverage, task.id + ": coverage fell");
        if (o0.per_criterion[i].passed && !o1.per_criterion[i].passed) ++flips;
      }
      before.push_back(evaluate_task(r0, task, builtin_rubric()));
      after.push_back(evaluate_task(r1, task, builtin_rubric()));
      rb.push_back(r0);
      ra.push_back(r1);
    }
    c.expect(pairs > 0, std::string(skill) + ": no criteria");
    c.expect(flips == 0, fmt::format("{}: {} pass->fail transitions over {} pairs", skill, flips, pairs));
    const auto m0 = compute_metrics(before, rb);
    const auto m1 = compute_metrics(after, ra);
    c.expect(m1.average_score >= m0.average_score,
             fmt::format("{}: average {} < {}", skill, m1.average_score, m0.average_score));
  }
}

// 3. Default real run shape.
void shape(Check& c) {
  testing::TempDir out("acc3");
  auto cfg = offline_config("csv-summary", Mode::Real, out.path());
  cfg.limits.temp_root = out / "ws";
  fs::create_directories(cfg.limits.temp_root);
  const auto o = run_pipeline(cfg, silent_hooks());
  auto standard = [](const std::vector<Task>& ts) {
    return std::count_if(ts.begin(), ts.end(), [](const Task& t) { return t.tier == Tier::Standard; });
  };
  c.expect(o.suite.train.size() == 12, fmt::format("train {}", o.suite.train.size()));
  c.expect(standard(o.suite.train) == 6, fmt::format("train standard {}", standard(o.suite.train)));
  c.expect(o.suite.test.size() == 8, fmt::format("test {}", o.suite.test.size()));
  c.expect(standard(o.suite.test) == 4, fmt::format("test standard {}", standard(o.suite.test)));
  c.expect(o.history.epochs.size() == 3, fmt::format("epochs {}", o.history.epochs.size()));
  for (const auto& e : o.history.epochs) {
    c.expect(e.group.variants.size() == 3, fmt::format("epoch {} has {} variants", e.epoch, e.group.variants.size()));
    c.expect(e.group.rewards.size() == 3, fmt::format("epoch {} has {} rewards", e.epoch, e.group.rewards.size()));
    c.expect(e.fix_attempts.size() <= 2, fmt::format("epoch {} made {} fix attempts", e.epoch, e.fix_attempts.size()));
  }
  c.expect(o.log.records.size() == 16, fmt::format("records {}", o.log.records.size()));
  c.expect(o.report.execution_records == 16, "report record count");
  const auto history = nlohmann::json::parse(testing::read_file(out / "history.json"));
  c.expect(history.dump().find("\"epochs\"") != std::string::npos, "history.json lacks epochs");
}

// 4. Inclusive threshold.
void threshold(Check& c) {
  const std::array<double, 3> values{0.69, 0.70, 0.71};
  const std::array<bool, 3> expected{false, true, true};
  for (std::size_t i = 0; i < 3; ++i) {
    TaskScore s;
    s.normalized = values[i];
    c.expect(meets_threshold(s.normalized, 0.70) == expected[i], fmt::format("normalized {}", values[i]));
  }
  // Same boundary reached through finalize_score from raw points.
  for (std::size_t satisfied : {69u, 70u, 71u}) {
    TaskScore s;
    for (std::size_t i = 0; i < 100; ++i) s.per_criterion.push_back({i, i < satisfied, ""});
    finalize_score(s, 0.70);
    c.expect(s.passed == (satisfied >= 70), fmt::format("{} of 100", satisfied));
  }
}

// 5. compute_metrics against a brute-force recomputation.
void metrics_oracle(Check& c) {
  std::mt19937_64 rng(20240521);
  const std::array<int, 4> pcts{50, 70, 80, 100};
  for (int trial = 0; trial < 1000; ++trial) {
    const int pct = pcts[rng() % pcts.size()];
    const double threshold = pct / 100.0;
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::vector<bool>> raw(n);
    std::vector<Tier> tiers(n);
    std::vector<bool> errors(n);
    std::vector<TaskScore> scores;
    std::vector<ExecutionRecord> records;
    for (std::size_t t = 0; t < n; ++t) {
      raw[t].resize(1 + rng() % 6);
      tiers[t] = static_cast<Tier>(rng() % 3);
      errors[t] = rng() % 4 == 0;
      TaskScore s;
      s.task_id = fmt::format("t{}", t);
      s.tier = tiers[t];
      for (std::size_t i = 0; i < raw[t].size(); ++i) {
        raw[t][i] = rng() % 2 == 0;
        s.per_criterion.push_back({i, raw[t][i], ""});
      }
      finalize_score(s, threshold);
      scores.push_back(s);
      ExecutionRecord r;
      r.task_id = s.task_id;
      if (errors[t]) r.error = ExecError{"NonZeroExit", "synthetic", false};
      records.push_back(r);
    }
    // Oracle: exact rational arithmetic on counts.
    long double sum = 0, std_sum = 0, adv_sum = 0;
    std::size_t passed = 0, n_std = 0, n_adv = 0, n_err = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const auto sat = static_cast<std::size_t>(std::count(raw[t].begin(), raw[t].end(), true));
      const long double v = static_cast<long double>(sat) / static_cast<long double>(raw[t].size());
      sum += v;
      if (sat * 100 >= static_cast<std::size_t>(pct) * raw[t].size()) ++passed;
      if (tiers[t] == Tier::Standard) {
        std_sum += v;
        ++n_std;
      } else {
        adv_sum += v;
        ++n_adv;
      }
      if (errors[t]) ++n_err;
    }
    const auto m = compute_metrics(scores, records);
    const auto close = [](double a, long double b) { return std::fabs(static_cast<long double>(a) - b) <= 1e-12L; };
    const std::string tag = fmt::format("trial {}", trial);
    c.expect(m.task_count == n, tag + ": task_count");
    c.expect(close(m.pass_rate, static_cast<long double>(passed) / n), tag + ": pass_rate");
    c.expect(close(m.average_score, sum / n), tag + ": average_score");
    c.expect(close(m.error_rate, static_cast<long double>(n_err) / n), tag + ": error_rate");
    c.expect(m.standard_score.has_value() == (n_std > 0), tag + ": standard presence");
    c.expect(m.advanced_score.has_value() == (n_adv > 0), tag + ": advanced presence");
    if (n_std > 0 && m.standard_score) c.expect(close(*m.standard_score, std_sum / n_std), tag + ": standard_score");
    if (n_adv > 0 && m.advanced_score) c.expect(close(*m.advanced_score, adv_sum / n_adv), tag + ": advanced_score");
  }
}

// 6. Group-relative advantages.
void advantages(Check& c) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0), scale(0.1, 10.0), shift(-5.0, 5.0);
  auto select = [](const std::vector<double>& r) {
    VariantGroup g;
    g.rewards = r;
    g.variants.resize(r.size());
    return select_variant(g);
  };
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r{unit(rng), unit(rng), unit(rng)};
    if (trial % 10 == 0) r[1] = r[0];  // exercise ties
    const auto adv = group_relative_advantages(r);
    const double a = scale(rng), b = shift(rng);
    std::vector<double> r2;
    for (double x : r) r2.push_back(a * x + b);
    const auto adv2 = group_relative_advantages(r2);
    const std::string tag = fmt::format("trial {}", trial);
    c.expect(adv.size() == 3 && adv2.size() == 3, tag + ": size");
    if (adv.size() != 3 || adv2.size() != 3) continue;
    c.expect(std::fabs(adv[0] + adv[1] + adv[2]) <= 1e-9, tag + ": sum");
    for (int i = 0; i < 3; ++i) c.expect(std::fabs(adv[i] - adv2[i]) <= 1e-9, tag + ": affine");
    // Selection is compared on rewards, since ties in a·r+b can be broken by rounding.
    if (r[0] != r[1] && r[1] != r[2] && r[0] != r[2]) c.expect(select(r) == select(r2), tag + ": selection");
    c.expect(select(r) == select(adv), tag + ": selection by advantage");
  }
  for (double v : {0.0, 0.42, 1.0}) {
    for (double x : group_relative_advantages({v, v, v})) c.expect(x == 0.0, "zero variance");
  }
  const auto w = group_relative_advantages({0.5, 0.8, 0.8});
  const std::array<double, 3> expect{-1.4142, 0.7071, 0.7071};
  for (int i = 0; i < 3; ++i) c.expect(std::fabs(w[i] - expect[i]) <= 1e-4, fmt::format("worked example [{}] = {}", i, w[i]));
}

// 7. Decision rule on the published aggregates.
void decision(Check& c) {
  MetricsSummary orig, opt;
  orig.average_score = 0.378;
  orig.pass_rate = 0.3359;
  opt.average_score = 0.84;
  opt.pass_rate = 0.8802;
  c.expect(decide_retention(orig, opt).verdict == Verdict::Retain, "improved summary not retained");
  c.expect(decide_retention(orig, orig).verdict == Verdict::Discard, "identical summary retained");
  c.expect(decide_retention(opt, opt).verdict == Verdict::Discard, "identical summary retained");
}

// 8. Parallel real execution: hygiene, isolation, parity with sequential.
void isolation(Check& c) {
  testing::TempDir root("acc8");
  const auto pkg = parse_skill_package(testing::fixture("skills/csv-summary"));
  const auto suite = suite_for(pkg, 11);
  ExecContext ctx;
  ctx.mode = Mode::Real;
  ctx.limits.temp_root = root.path();
  const auto par = execute_all(pkg, suite.test, SkillVersion::original(), ctx, 4);
  c.expect(testing::count_entries(root.path(), "skilltune-ws-") == 0, "workspace left after parallel run");
  const auto seq = execute_all(pkg, suite.test, SkillVersion::original(), ctx, 1);
  c.expect(testing::count_entries(root.path(), "skilltune-ws-") == 0, "workspace left after sequential run");
  c.expect(par.size() == 8 && seq.size() == 8, "record count");
  if (par.size() != seq.size()) return;

  auto strip = [](ExecutionRecord r) {
    r.duration_ms = 0;
    return r;
  };
  std::vector<std::string> a, b;
  for (const auto& r : par) a.push_back(to_json(strip(r)).dump());
  for (const auto& r : seq) b.push_back(to_json(strip(r)).dump());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  c.expect(a == b, "parallel and sequential record sets differ");

  // Reference: each task alone in its own run.
  std::map<std::string, std::set<std::string>> own;
  for (const auto& task : suite.test) {
    const auto solo = execute_task_real(pkg, task, ctx.limits);
    for (const auto& art : solo.artifacts) own[task.id].insert(art.digest);
  }
  std::size_t produced = 0;
  for (std::size_t i = 0; i < par.size(); ++i) {
    for (const auto& art : par[i].artifacts) {
      ++produced;
      c.expect(own[par[i].task_id].contains(art.digest), par[i].task_id + ": artifact " + art.path + " not reproducible alone");
      for (std::size_t j = 0; j < par.size(); ++j) {
        if (i == j) continue;
        for (const auto& other : par[j].artifacts) {
          if (other.digest == art.digest && !own[par[i].task_id].contains(other.digest)) {
            c.expect(false, par[i].task_id + " carries a file written by " + par[j].task_id);
          }
        }
      }
      // Context files of other tasks never show up.
      for (const auto& task : suite.test) {
        if (task.id == par[i].task_id) continue;
        for (const auto& f : task.context) {
          const bool own_ctx = std::any_of(suite.test[i].context.begin(), suite.test[i].context.end(),
                                           [&](const SourceFile& g) { return g.path == f.path; });
          if (!own_ctx) c.expect(art.path != f.path, par[i].task_id + " holds context of " + task.id);
        }
      }
    }
  }
  c.expect(produced > 0, "no artifacts produced; isolation not exercised");
}

// 9. Broken candidate still yields a full report.
void fail_safe(Check& c) {
  testing::TempDir out("acc9");
  const auto cmd = fmt::format("env -u ANTHROPIC_API_KEY {} -q run --mode real --skill-dir {} --candidate-dir {} --output-dir {}",
                               quote(SKILLTUNE_CLI_PATH), quote(testing::fixture("skills/csv-summary")),
                               quote(testing::fixture("skills/csv-summary-broken")), quote(out.path()));
  const int rc = std::system(cmd.c_str());
  c.expect(rc == 0, fmt::format("exit status {}", rc));
  const auto log = parse_execution_log(testing::read_file(out / "execution.log.jsonl"));
  std::size_t optimized = 0, optimized_err = 0;
  for (const auto& r : log) {
    if (r.version.kind != SkillVersion::Kind::Optimized) continue;
    ++optimized;
    if (r.error) ++optimized_err;
  }
  c.expect(log.size() == 16, fmt::format("{} records", log.size()));
  c.expect(optimized == 8 && optimized_err == 8, fmt::format("{} optimized records, {} with errors", optimized, optimized_err));
  const auto report = nlohmann::json::parse(testing::read_file(out / "report.json"));
  c.expect(report["decision"]["verdict"] == "Discard", "verdict " + report["decision"]["verdict"].dump());
  c.expect(report["per_task"].size() == 8, "per_task incomplete");
  c.expect(fs::exists(out / "report.md"), "report.md missing");
  c.expect(!fs::exists(out / "optimized"), "optimized/ written on Discard");
}

// 10. Built-in rubric against the published catalog.
void rubric_conformance(Check& c) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> catalog = {
      {"Structural Completeness & Organization",
       {"Clear introduction/overview at document start explaining purpose and goals",
        "Installation/setup instructions with complete environment configuration",
        "Comprehensive usage section detailing all commands and functions",
        "Multiple concrete examples with at least 3 different real-world scenarios",
        "Configuration/parameters section listing all configurable options",
        "Troubleshooting/error handling with dedicated section for FAQs",
        "Logical progression from basic to advanced concepts"}},
      {"Practical Usability & Learnability",
       {"Beginner step-by-step guide with clear guidance keywords (first, then, next)",
        "Copy-paste ready examples with actual commands ($, python, bash, etc.)",
        "Explicit prerequisites clearly listing dependencies and required knowledge",
        "Common pitfalls documentation with warning/note/important markers",
        "Progressive complexity from simple to advanced examples",
        "Quick start guide or minimal working example section"}},
      {"Example Quality & Coverage",
       {"At least 3 different real examples with complete executable code blocks",
        "Diverse use cases covering different scenarios, not just task variations",
        "Expected output demonstration using output:/result:/=>/-> markers",
        "Boundary condition examples showing edge cases and extreme scenarios",
        "Error handling scenarios demonstrating exception and failure handling",
        "Complex multi-step workflow showing complete real-world application"}},
      {"Technical Depth & Accuracy",
       {"All parameters/options documented with parameter/option/flag keywords",
        "Return values and output format specification (types, JSON structure)",
        "Performance characteristics mentioned when relevant",
        "Clear limitations and constraints explicitly listed",
        "Integration with other systems explained and demonstrated",
        "Correct use of 2+ professional technical terms (API, CLI, SDK, etc.)"}},
      {"Clarity & Readability",
       {"Clear concise language with average sentence length < 30 words",
        "Consistent formatting and style with unified header levels",
        "Proper use of at least 3 headers, lists (- or *), and code blocks",
        "Unambiguous statements avoiding vague or misleading expressions",
        "Appropriate detail level (500-15000 characters, not too brief or verbose)",
        "Good visual hierarchy using secondary headers (##) or tertiary headers (###)"}},
      {"Command Coverage Completeness",
       {"Every command in examples explained in documentation",
        "All flags/options for each command documented",
        "Command syntax clearly demonstrated with correct format",
        "Usage context explained for when to use each command",
        "Relationships between multiple commands clarified",
        "No undocumented or hidden functionality"}},
      {"Error Handling & Troubleshooting",
       {"Common errors and solutions listed with fixes",
        "Error message explanations clarifying meaning and context",
        "Debugging tips provided with diagnostic methods and commands",
        "Known issues and workarounds documented",
        "Support and bug reporting instructions provided",
        "Verification steps to check configuration correctness"}},
      {"Advanced Scenarios & Best Practices",
       {"Advanced use cases and patterns with advanced/complex/production examples",
        "Best practices and recommendations using best practice/recommended/tip keywords",
        "Performance optimization tips when applicable",
        "Security considerations mentioned and explained when relevant",
        "Integration patterns showing how to combine with other tools",
        "Real-world workflow examples demonstrating complete practical scenarios"}},
  };
  const auto& r = builtin_rubric();
  c.expect(r.dimensions.size() == 8, fmt::format("{} dimensions", r.dimensions.size()));
  const std::array<std::size_t, 8> counts{7, 6, 6, 6, 6, 6, 6, 6};
  for (std::size_t d = 0; d < std::min<std::size_t>(8, r.dimensions.size()); ++d) {
    const auto& dim = r.dimensions[d];
    c.expect(dim.name == catalog[d].first, "dimension name " + dim.name);
    c.expect(dim.items.size() == counts[d], fmt::format("{}: {} items", dim.name, dim.items.size()));
    for (std::size_t i = 0; i < std::min(dim.items.size(), catalog[d].second.size()); ++i) {
      c.expect(dim.items[i].text == catalog[d].second[i], "item text: " + dim.items[i].text);
    }
  }
  const auto empty = evaluate_instruction_heuristic("", r);
  c.expect(empty.per_dimension.size() == 8, "empty evaluation dimension count");
  for (const auto& d : empty.per_dimension) c.expect(d.score == 0.0, fmt::format("{} scored {}", d.name, d.score));
  c.expect(empty.overall == 0.0, "empty overall nonzero");
}

// Word windows of `text` that occur in no string of `allowed`.
std::vector<std::string> private_windows(const std::string& text, const std::vector<std::string>& allowed, std::size_t n) {
  const auto words = text::split_whitespace(text);
  std::vector<std::string> out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::string w;
    for (std::size_t k = 0; k < n; ++k) w += (k ? " " : "") + std::string(words[i + k]);
    const bool shared = std::any_of(allowed.begin(), allowed.end(), [&](const std::string& a) { return a.find(w) != std::string::npos; });
    if (!shared) out.push_back(w);
  }
  return out;
}

// 11. Nothing from the test split reaches the optimizer.
void firewall(Check& c) {
  for (const char* skill : {"weather-brief", "csv-summary"}) {
    testing::TempDir out("acc11");
    std::vector<std::string> inputs;
    std::mutex mu;
    auto hooks = silent_hooks();
    hooks.probe = [&](std::string_view, std::string_view input) {
      std::lock_guard lock(mu);
      inputs.emplace_back(input);
    };
    auto cfg = offline_config(skill, Mode::Virtual, out.path());
    cfg.seed = 7;
    const auto o = run_pipeline(cfg, hooks);
    c.expect(!inputs.empty(), std::string(skill) + ": probe saw nothing");
    std::vector<std::string> allowed{o.suite.skill_name, parse_skill_package(cfg.skill_dir).instruction};
    for (const auto& t : o.suite.train) allowed.push_back(t.description);
    std::size_t windows = 0;
    for (const auto& t : o.suite.test) {
      const auto priv = private_windows(t.description, allowed, 4);
      windows += priv.size();
      for (const auto& in : inputs) {
        c.expect(in.find(t.id) == std::string::npos, std::string(skill) + ": test id " + t.id + " leaked");
        c.expect(in.find(t.description) == std::string::npos, std::string(skill) + ": description of " + t.id + " leaked");
        for (const auto& w : priv) c.expect(in.find(w) == std::string::npos, std::string(skill) + ": '" + w + "' leaked");
      }
    }
    c.expect(windows > 0, std::string(skill) + ": test descriptions share every phrase with train");
  }
}

int cli(std::vector<std::string> args, const PipelineHooks& hooks) {
  std::vector<const char*> argv{"skilltune", "-q"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data(), hooks);
}

// 12. --offline means zero network calls even with a key present.
void offline(Check& c) {
  testing::ScopedEnv key("ANTHROPIC_API_KEY", std::string("dummy-key"));
  for (const char* mode : {"virtual", "real"}) {
    testing::TempDir out("acc12");
    auto t = std::make_shared<testing::RecordingTransport>();
    PipelineHooks hooks;
    hooks.transport = t;
    const int rc = cli({"run", "--offline", "--mode", mode, "--skill-dir", testing::fixture("skills/csv-summary").string(),
                        "--output-dir", out.path().string()},
                       hooks);
    c.expect(rc == 0, fmt::format("{}: exit {}", mode, rc));
    c.expect(t->calls() == 0, fmt::format("{}: {} network calls", mode, t->calls()));
    c.expect(fs::exists(out / "report.json"), std::string(mode) + ": report missing");
  }
  // Sanity: the same transport does see traffic when the gateway is live.
  testing::TempDir out("acc12b");
  auto t = std::make_shared<testing::RecordingTransport>();
  PipelineHooks hooks;
  hooks.transport = t;
  const int rc = cli({"run", "--mode", "virtual", "--llm-retries", "0", "--skill-dir",
                      testing::fixture("skills/weather-brief").string(), "--output-dir", out.path().string()},
                     hooks);
  c.expect(rc == 0, fmt::format("live run exit {}", rc));
  c.expect(t->calls() > 0, "recording transport saw no calls on a live run");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"virtual-mode determinism", determinism},
      {"keyword monotonicity", keyword_monotonicity},
      {"default run shape", shape},
      {"threshold semantics", threshold},
      {"metrics oracle", metrics_oracle},
      {"advantage properties", advantages},
      {"decision rule", decision},
      {"executor isolation and hygiene", isolation},
      {"fail-safe totality", fail_safe},
      {"rubric conformance", rubric_conformance},
      {"train/test firewall", firewall},
      {"offline completeness", offline},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    if (!ok) ++failed;
    std::printf("%s %zu %s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str());
    for (const auto& f : c.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
