#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "skilltune/error.hpp"
#include "skilltune/optimizer.hpp"
#include "skilltune/skill_model.hpp"
#include "skilltune/task_gen.hpp"
#include "test_support.hpp"

using namespace skilltune;
using testing::TempDir;

namespace {

/// Package rooted at `root` whose only command runs `script_rel` with sh.
SkillPackage script_pkg(const std::filesystem::path& root, const std::string& script_rel, const std::string& script,
                        const std::string& instruction_extra = "") {
  testing::write_file(root / "SKILL.md", "# fixer\n\nRuns the script.\n\n```bash\nsh " + script_rel + "\n```\n" + instruction_extra);
  testing::write_file(root / script_rel, script);
  return parse_skill_package(root);
}

Task keyword_task(const std::string& id, const std::string& keyword) {
  Task t;
  t.id = id;
  t.description = "print " + keyword;
  ValidationCriterion c;
  c.kind = CriterionKind::KeywordPresent;
  c.target = keyword;
  c.keywords = {"save"};
  t.criteria.push_back(c);
  return t;
}

ExecContext real_ctx(const TempDir& tmp) {
  ExecContext ctx;
  ctx.mode = Mode::Real;
  ctx.limits.temp_root = tmp.path();
  ctx.limits.timeout_ms = 10000;
  return ctx;
}

std::vector<ExecutionRecord> failing_records(const TrainEvaluator& eval, const SkillPackage& pkg) {
  auto ev = eval(pkg);
  std::vector<ExecutionRecord> out;
  for (auto& r : ev.records) {
    if (r.error) out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("advantages: worked examples") {
  const auto a = group_relative_advantages({0.5, 0.8, 0.8});
  CHECK(a[0] == doctest::Approx(-1.4142).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(a[2] == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(group_relative_advantages({0.6, 0.6, 0.6}) == std::vector<double>{0, 0, 0});
  const auto b = group_relative_advantages({0.0, 1.0});
  CHECK(b[0] == doctest::Approx(-1.0));
  CHECK(b[1] == doctest::Approx(1.0));
}

TEST_CASE("advantages: properties over random groups") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> r{u(rng), u(rng), u(rng), u(rng)};
    const auto adv = group_relative_advantages(r);
    double sum = 0, sq = 0;
    for (double x : adv) {
      sum += x;
      sq += x * x;
    }
    CHECK(std::abs(sum) < 1e-9);
    CHECK(sq / 4 == doctest::Approx(1.0));  // unit population variance
  }
}

TEST_CASE("selection: argmax with lowest-index ties") {
  VariantGroup g;
  g.rewards = {0.5, 0.8, 0.8};
  CHECK(select_variant(g) == 1);
  CHECK(g.selected == 1);
  g.rewards = {0.9, 0.1, 0.5};
  CHECK(select_variant(g) == 0);
  g.rewards = {0.3, 0.3, 0.3};
  CHECK(select_variant(g) == 0);
}

TEST_CASE("propose_variants: fallback yields distinct single-section extensions") {
  const std::string base = "# Tool\n\nDoes a thing.\n";
  const auto v = propose_variants(base, {}, 3);
  REQUIRE(v.size() == 3);
  std::set<std::string> distinct(v.begin(), v.end());
  CHECK(distinct.size() == 3);
  const std::vector<std::string> titles{"## Error Handling", "## Usage Examples", "## Troubleshooting"};
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v[i].starts_with("# Tool\n\nDoes a thing."));
    CHECK(v[i] != base);
    std::size_t appended = 0;
    for (const auto& t : titles) appended += v[i].find(t) != std::string::npos;
    CHECK(appended == 1);
    CHECK(v[i].find(titles[i]) != std::string::npos);
  }
  const auto more = propose_variants(base, {}, 5);
  CHECK(std::set<std::string>(more.begin(), more.end()).size() == 5);
  CHECK_THROWS_AS(propose_variants("   \n", {}, 3), DegenerateBase);
  CHECK(propose_variants(base, {}, 3) == v);
}

TEST_CASE("propose_variants: model variants are used and lessons reach the prompt") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "k");
  auto t = std::make_shared<testing::ScriptedTransport>();
  t->push_content(R"({"variants": ["# A\nbetter one", "# A\nbetter two"]})");
  llm::Gateway g(testing::test_gateway_config(), t);
  LessonLedger lessons;
  lessons.append({1, "e1-v1", {"KeywordPresent(\"zeta\" in stdout)"}, -1.2});
  lessons.append({1, "e1-v2", {"unused"}, 0.5});
  std::vector<std::string> seen;
  const auto v = propose_variants("# A\nbase", lessons, 3, &g, [&](std::string_view stage, std::string_view input) {
    CHECK(stage == "propose_variants");
    seen.emplace_back(input);
  });
  REQUIRE(v.size() == 3);
  CHECK(v[0] == "# A\nbetter one");
  CHECK(v[1] == "# A\nbetter two");
  CHECK(v[2].find("## Error Handling") != std::string::npos);
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].find("zeta") != std::string::npos);
  CHECK(seen[0].find("unused") == std::string::npos);
}

TEST_CASE("lesson ledger keeps recent negative entries, oldest first") {
  LessonLedger l;
  for (int i = 0; i < 15; ++i) l.append({i, "v" + std::to_string(i), {}, i % 2 ? -1.0 : 1.0});
  const auto neg = l.recent_negative(3);
  REQUIRE(neg.size() == 3);
  CHECK(neg[0].epoch == 9);
  CHECK(neg[2].epoch == 13);
}

TEST_CASE("rules: shell argument validation, applied by hand") {
  const std::string src = "#!/bin/sh\nset -e\necho \"hello $1\"\n";
  const std::string expected =
      "#!/bin/sh\nset -e\n"
      "if [ \"$#\" -lt 1 ]; then  # skilltune:rule=arg-validation\n"
      "  echo \"usage: $0 <arg1>\" >&2\n"
      "  exit 2\n"
      "fi\n"
      "echo \"hello $1\"\n";
  const auto r = apply_rule_optimizations({{"greet.sh", src}});
  REQUIRE(r.applied.size() == 1);
  CHECK(r.applied[0].rule == "arg-validation");
  CHECK(r.applied[0].file == "greet.sh");
  CHECK(r.files[0].text == expected);

  const auto again = apply_rule_optimizations(r.files);
  CHECK(again.applied.empty());
  CHECK(again.files[0].text == expected);
  const bool logged = std::any_of(again.skipped.begin(), again.skipped.end(),
                                  [](const RuleChange& c) { return c.rule == "arg-validation" && c.note == "marker present"; });
  CHECK(logged);
}

TEST_CASE("rules: awk fields inside single quotes are not positional parameters") {
  const std::string src = "#!/bin/sh\nawk -F, '{ s += $3 } END { print s }' data.csv\n";
  const auto r = apply_rule_optimizations({{"sum.sh", src}});
  CHECK(r.applied.empty());
  CHECK(r.files[0].text == src);
}

TEST_CASE("rules: python argument validation behaves as written") {
  const std::string src = "import sys\n\nname = sys.argv[1]\nprint(name)\n";
  const std::string expected =
      "import sys\n\n"
      "if len(sys.argv) < 2:  # skilltune:rule=arg-validation\n"
      "    print(\"usage: greet.py <arg1>\", file=sys.stderr)\n"
      "    sys.exit(2)\n"
      "name = sys.argv[1]\nprint(name)\n";
  const auto r = apply_rule_optimizations({{"scripts/greet.py", src}});
  REQUIRE(r.applied.size() == 1);
  CHECK(r.files[0].text == expected);

  if (program_on_path("python3")) {
    TempDir dir("py");
    testing::write_file(dir / "greet.py", r.files[0].text);
    const auto cmd = "cd '" + dir.path().string() + "' && python3 greet.py >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 2);
    const auto ok = "cd '" + dir.path().string() + "' && python3 greet.py bob >/dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(ok.c_str())) == 0);
  }
}

TEST_CASE("rules: python entry guard and memoized reads") {
  const std::string src =
      "import json\n\ndef main():\n    a = open('cfg.json').read()\n    b = open('cfg.json').read()\n    return a + b\n\n"
      "if __name__ == \"__main__\":\n    main()\n";
  const auto r = apply_rule_optimizations({{"tool.py", src}});
  std::set<std::string> rules;
  for (const auto& c : r.applied) rules.insert(c.rule);
  CHECK(rules == std::set<std::string>{"entry-guard", "memoize-reads"});
  const auto& out = r.files[0].text;
  CHECK(out.find("    try:  # skilltune:rule=entry-guard\n        main()\n    except Exception as exc:") != std::string::npos);
  CHECK(out.find("_skilltune_read('cfg.json')") != std::string::npos);
  CHECK(out.find("open('cfg.json').read()") == std::string::npos);
  CHECK(out.find("import sys") != std::string::npos);
  CHECK(apply_rule_optimizations(r.files).applied.empty());

  const auto other = apply_rule_optimizations({{"lib.js", "console.log(1)\n"}});
  CHECK(other.applied.empty());
  CHECK(other.files[0].text == "console.log(1)\n");
}

TEST_CASE("refine_commands normalizes paths against the package tree") {
  SkillPackage pkg;
  pkg.instruction = "```bash\npython run.py --n 2\npython scripts/run.py\ncat notes.txt\n```\n";
  pkg.code_files = {{"scripts/run.py", "print(1)\n"}};
  pkg.commands = extract_commands(pkg.instruction);
  const auto refined = refine_commands(pkg);
  REQUIRE(refined.size() == 3);
  CHECK(refined[0].raw == "python scripts/run.py --n 2");
  CHECK(refined[1].raw == "python scripts/run.py");
  CHECK(refined[2].raw == "cat notes.txt");
  CHECK(refine_commands(SkillPackage{}).empty());

  const auto updated = with_commands(pkg, refined);
  CHECK(updated.instruction.find("python scripts/run.py --n 2") != std::string::npos);
  CHECK(updated.commands == refined);
}

TEST_CASE("refine_commands takes a well-formed model rewrite") {
  testing::ScopedEnv key("SKILLTUNE_TEST_API_KEY", "k");
  SkillPackage pkg;
  pkg.instruction = "```bash\npython run.py\n```\nUse `--mode fast`.\n";
  pkg.code_files = {{"scripts/run.py", "print(1)\n"}};
  pkg.commands = extract_commands(pkg.instruction);
  auto t = std::make_shared<testing::ScriptedTransport>();
  t->push_content(R"({"commands": ["python run.py --mode fast"]})");
  llm::Gateway g(testing::test_gateway_config(), t);
  const auto refined = refine_commands(pkg, &g);
  REQUIRE(refined.size() == 1);
  CHECK(refined[0].raw == "python scripts/run.py --mode fast");
}

TEST_CASE("classify_failure tables") {
  CHECK(classify_failure("ModuleNotFoundError: No module named 'yaml'") == IssueClass::DependencyConflict);
  CHECK(classify_failure("sh: 1: python: not found") == IssueClass::DependencyConflict);
  CHECK(classify_failure("error: the following arguments are required: --mode") == IssueClass::ParameterMisconfiguration);
  CHECK(classify_failure("No such file or directory: out/") == IssueClass::PathError);
  CHECK(classify_failure("segmentation fault") == IssueClass::Other);
}

TEST_CASE("auto_fix: missing directory is created in one attempt") {
  TempDir root("pe"), tmp("ws");
  const std::string script =
      "if [ ! -d out ]; then echo \"No such file or directory: out/\" >&2; exit 1; fi\n"
      "echo done > out/result.txt\necho done\n";
  const auto pkg = script_pkg(root.path(), "scripts/write.sh", script);
  const auto eval = make_train_evaluator({keyword_task("pe-1", "done")}, real_ctx(tmp), builtin_rubric(), 1);
  const auto failures = failing_records(eval, pkg);
  REQUIRE(failures.size() == 1);
  const auto res = auto_fix(pkg, failures, 2, eval);
  REQUIRE(res.attempts.size() == 1);
  CHECK(res.attempts[0].iteration == 1);
  CHECK(res.attempts[0].issue_class == IssueClass::PathError);
  CHECK(res.initial_score == 0.0);
  CHECK(res.final_score == 1.0);
  CHECK(res.attempts[0].resulting_train_score == 1.0);
  REQUIRE(res.package.commands.size() == 2);
  CHECK(res.package.commands[0].raw == "mkdir -p out");
  CHECK(res.package.instruction.find("mkdir -p out\nsh scripts/write.sh") != std::string::npos);
  CHECK(testing::count_entries(tmp.path(), "skilltune-ws-") == 0);
}

TEST_CASE("auto_fix: persistent failure uses both iterations and keeps the score") {
  TempDir root("pf"), tmp("ws");
  const auto pkg = script_pkg(root.path(), "scripts/fail.sh", "echo \"No such file or directory: data/input.txt\" >&2\nexit 1\n");
  const auto eval = make_train_evaluator({keyword_task("pf-1", "done")}, real_ctx(tmp), builtin_rubric(), 1);
  const auto res = auto_fix(pkg, failing_records(eval, pkg), 2, eval);
  REQUIRE(res.attempts.size() == 2);
  CHECK(res.attempts[0].issue_class == IssueClass::PathError);
  CHECK(res.attempts[1].iteration == 2);
  CHECK(res.final_score == res.initial_score);
  CHECK(res.package == pkg);
}

TEST_CASE("auto_fix: unrecognized failure gives one Other attempt without a patch") {
  TempDir root("of"), tmp("ws");
  const auto pkg = script_pkg(root.path(), "scripts/odd.sh", "echo 'the reactor hiccupped' >&2\nexit 4\n");
  const auto eval = make_train_evaluator({keyword_task("of-1", "done")}, real_ctx(tmp), builtin_rubric(), 1);
  const auto res = auto_fix(pkg, failing_records(eval, pkg), 2, eval);
  REQUIRE(res.attempts.size() == 1);
  CHECK(res.attempts[0].issue_class == IssueClass::Other);
  CHECK(res.attempts[0].patch_description == "no patch applied");
  CHECK(res.package == pkg);
}

TEST_CASE("auto_fix: documented flag is added for a parameter error") {
  TempDir root("pm"), tmp("ws");
  const std::string script =
      "if [ \"${1:-}\" != \"--mode\" ]; then echo 'usage: run.sh --mode MODE' >&2; "
      "echo 'error: the following arguments are required: --mode' >&2; exit 2; fi\necho \"done $2\"\n";
  const auto pkg = script_pkg(root.path(), "scripts/run.sh", script, "\nSet the mode with `--mode fast`.\n");
  const auto eval = make_train_evaluator({keyword_task("pm-1", "done fast")}, real_ctx(tmp), builtin_rubric(), 1);
  const auto res = auto_fix(pkg, failing_records(eval, pkg), 2, eval);
  REQUIRE(!res.attempts.empty());
  CHECK(res.attempts[0].issue_class == IssueClass::ParameterMisconfiguration);
  CHECK(res.final_score == 1.0);
  CHECK(res.package.commands.back().raw == "sh scripts/run.sh --mode fast");
}

TEST_CASE("auto_fix: missing interpreter is swapped for the available one") {
  if (program_on_path("python") || !program_on_path("python3")) return;
  TempDir root("dc"), tmp("ws");
  testing::write_file(root / "SKILL.md", "# py\n\n```bash\npython scripts/hello.py\n```\n");
  testing::write_file(root / "scripts/hello.py", "print('done')\n");
  const auto pkg = parse_skill_package(root.path());
  const auto eval = make_train_evaluator({keyword_task("dc-1", "done")}, real_ctx(tmp), builtin_rubric(), 1);
  const auto res = auto_fix(pkg, failing_records(eval, pkg), 2, eval);
  REQUIRE(!res.attempts.empty());
  CHECK(res.attempts[0].issue_class == IssueClass::DependencyConflict);
  CHECK(res.final_score == 1.0);
  CHECK(res.package.commands[0].raw == "python3 scripts/hello.py");
}

TEST_CASE("optimize_skill: instruction-only skill, defaults") {
  const auto pkg = parse_skill_package(testing::fixture("skills/weather-brief"));
  const auto suite = generate_task_suite(extract_capability_profile(pkg), pkg, {});
  ExecContext ctx;
  ctx.mode = Mode::Virtual;
  ctx.frozen_seed = frozen_seed_for(pkg.instruction);
  const auto res = optimize_skill(pkg, suite, {}, ctx, builtin_rubric());
  const auto& h = res.history;
  REQUIRE(h.epochs.size() == 3);
  CHECK(h.instruction_evaluations() == 9);
  CHECK(h.code_pathway_entries() == 0);
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    const auto& ep = h.epochs[e];
    CHECK(ep.group.variants.size() == 3);
    CHECK(ep.group.rewards.size() == 3);
    CHECK(ep.group.advantages.size() == 3);
    CHECK(ep.group.variants[0].instruction == ep.group.base_instruction);
    CHECK(ep.group.rewards[0] == doctest::Approx(ep.baseline_before));
    CHECK(ep.baseline_after >= ep.baseline_before);
    CHECK(ep.group.rewards[ep.group.selected] == *std::max_element(ep.group.rewards.begin(), ep.group.rewards.end()));
    if (e + 1 < h.epochs.size()) CHECK(h.epochs[e + 1].baseline_before >= ep.baseline_after - 1e-12);
    CHECK(ep.code_steps.empty());
    CHECK(ep.fix_attempts.empty());
  }
  CHECK(res.package.instruction == h.epochs.back().group.variants[h.epochs.back().group.selected].instruction);
  const auto j = to_json(h);
  CHECK(j["epochs"].size() == 3);
}

TEST_CASE("optimize_skill: equal rewards keep the incumbent") {
  const auto pkg = parse_skill_package(testing::fixture("skills/weather-brief"));
  auto suite = generate_task_suite(extract_capability_profile(pkg), pkg, {});
  // criteria whose keywords no variant can change: every reward is identical
  for (auto& t : suite.train) {
    for (auto& c : t.criteria) c.keywords = {"zzqx-never-present"};
  }
  ExecContext ctx;
  ctx.mode = Mode::Virtual;
  ctx.frozen_seed = frozen_seed_for(pkg.instruction);
  const auto res = optimize_skill(pkg, suite, {}, ctx, builtin_rubric());
  for (const auto& ep : res.history.epochs) {
    CHECK(ep.group.selected == 0);
    CHECK(ep.group.advantages == std::vector<double>{0, 0, 0});
  }
  CHECK(res.package.instruction == pkg.instruction);
}

TEST_CASE("optimize_skill: code-inclusive skill records code steps with bounded fix attempts") {
  TempDir tmp("ws");
  const auto pkg = parse_skill_package(testing::fixture("skills/csv-summary"));
  const auto suite = generate_task_suite(extract_capability_profile(pkg), pkg, {});
  ExecContext ctx;
  ctx.limits.temp_root = tmp.path();
  OptimizerConfig cfg;
  const auto res = optimize_skill(pkg, suite, cfg, ctx, builtin_rubric());
  REQUIRE(res.history.epochs.size() == 3);
  CHECK(res.history.code_pathway_entries() > 0);
  for (const auto& ep : res.history.epochs) {
    CHECK(ep.fix_attempts.size() <= static_cast<std::size_t>(cfg.max_iterations));
    for (const auto& a : ep.fix_attempts) CHECK(a.iteration <= cfg.max_iterations);
    for (const auto& s : ep.code_steps) {
      if (s.kept) CHECK(s.score_after >= s.score_before);
    }
    CHECK(ep.baseline_after >= ep.baseline_before);
  }
  CHECK(testing::count_entries(tmp.path(), "skilltune-ws-") == 0);
}
