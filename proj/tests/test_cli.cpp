#include <doctest.h>

#include <initializer_list>
#include <string>
#include <vector>

#include "skilltune/cli.hpp"
#include "test_support.hpp"

using namespace skilltune;
using testing::TempDir;

namespace {

int run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"skilltune", "-q"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : owned) argv.push_back(a.c_str());
  PipelineHooks hooks;
  hooks.transport = std::make_shared<testing::RecordingTransport>();
  return cli_main(static_cast<int>(argv.size()), argv.data(), hooks);
}

}  // namespace

TEST_CASE("cli: argument errors exit 2") {
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"run"}) == 2);
  CHECK(run_cli({"run", "--skill-dir", "x", "--mode", "imaginary"}) == 2);
  CHECK(run_cli({"run", "--skill-dir", "x", "--pass-threshold", "2"}) == 2);
  CHECK(run_cli({"run", "--skill-dir", "x", "--group-size", "1"}) == 2);
  CHECK(run_cli({"bogus"}) == 2);
}

TEST_CASE("cli: fatal pipeline error exits 1") {
  TempDir empty("cli-empty"), out("cli-out");
  CHECK(run_cli({"run", "--skill-dir", empty.path().string(), "--offline", "--output-dir", out.path().string()}) == 1);
}

TEST_CASE("cli: run, evaluate and report") {
  TempDir out("cli-run");
  const auto dir = out.path().string();
  REQUIRE(run_cli({"run", "--skill-dir", testing::fixture("skills/weather-brief").string(), "--mode", "virtual", "--seed", "7",
                   "--offline", "--output-dir", dir}) == 0);
  const auto report = nlohmann::json::parse(testing::read_file(out / "report.json"));
  CHECK(report["config"]["mode"] == "Virtual");
  CHECK(report["config"]["seed"] == 7);

  REQUIRE(run_cli({"evaluate", "--log", dir + "/execution.log.jsonl", "--tasks", dir + "/tasks.json", "-o", dir + "/eval.json"}) == 0);
  const auto eval = nlohmann::json::parse(testing::read_file(out / "eval.json"));
  CHECK(eval["metrics"]["original"] == report["metrics"]["original"]);
  CHECK(eval["metrics"]["optimized"] == report["metrics"]["optimized"]);
  CHECK(eval["decision"]["verdict"] == report["decision"]["verdict"]);

  REQUIRE(run_cli({"report", "--report", dir + "/report.json", "-o", dir + "/again.md"}) == 0);
  CHECK(testing::read_file(out / "again.md") == testing::read_file(out / "report.md"));

  CHECK(run_cli({"evaluate", "--log", dir + "/missing.jsonl", "--tasks", dir + "/tasks.json"}) == 2);
  testing::write_file(out / "broken.json", "{not json");
  CHECK(run_cli({"report", "--report", dir + "/broken.json", "-o", dir + "/x.md"}) == 1);
}

TEST_CASE("cli: generate-tasks writes a reproducible suite") {
  TempDir out("cli-gen");
  const auto skill = testing::fixture("skills/csv-summary").string();
  REQUIRE(run_cli({"generate-tasks", "--skill-dir", skill, "--seed", "3", "--offline", "-o", (out / "a.json").string()}) == 0);
  REQUIRE(run_cli({"generate-tasks", "--skill-dir", skill, "--seed", "3", "--offline", "-o", (out / "b.json").string()}) == 0);
  const auto a = testing::read_file(out / "a.json");
  CHECK(a == testing::read_file(out / "b.json"));
  const auto j = nlohmann::json::parse(a);
  CHECK(j["train"].size() == 12);
  CHECK(j["test"].size() == 8);
  CHECK(run_cli({"generate-tasks", "--skill-dir", skill, "--train-count", "1", "--offline"}) == 2);
}
