#include "skilltune/task_gen.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <random>
#include <regex>
#include <set>

#include "skilltune/embedded_data.hpp"
#include "skilltune/error.hpp"
#include "skilltune/hash.hpp"
#include "skilltune/llm_gateway.hpp"
#include "skilltune/text.hpp"

namespace skilltune {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Distinct first and second words so no subject is a substring of another.
constexpr std::string_view kSubjects[] = {
    "amber-falcon",    "basalt-orchid",  "cobalt-heron",   "dune-lantern",    "ember-quarry",   "fjord-willow",
    "garnet-beacon",   "harbor-thistle", "indigo-canyon",  "juniper-comet",   "kelp-meridian",  "lichen-atlas",
    "marble-osprey",   "nectar-glacier", "onyx-prairie",   "pewter-lagoon",   "quartz-mesa",    "russet-tundra",
    "saffron-delta",   "tidal-sparrow",  "umber-citadel",  "velvet-summit",   "walnut-estuary", "xenon-bramble",
    "yarrow-pinnacle", "zephyr-grove",   "alder-monsoon",  "birch-nebula",    "cedar-riptide",  "dahlia-sierra",
    "ermine-caldera",  "flint-savanna",  "gossamer-ridge", "hazel-cascade",   "iris-badlands",  "jade-archipelago",
    "krill-plateau",   "lupine-volcano", "myrtle-isthmus", "nimbus-foundry",  "opal-crevasse",  "plume-steppe",
    "quill-aurora",    "raven-marsh",    "sorrel-geyser",  "thorn-lowlands",  "ursa-floodplain", "vireo-headland"};

constexpr std::string_view kConcepts[3][4] = {
    {"summary", "result", "status", "total"},
    {"options", "workflow", "report", "details"},
    {"error", "limit", "warning", "invalid"},
};

// {0}=skill {1}=focus {2}=subject {3}=concept
constexpr std::string_view kTemplates[3][3] = {
    {
        "Use the {0} skill on the {2} records in input/{2}.csv (focus: {1}), save the result to {2}_result.json "
        "and print a summary line that mentions \"{3}\".",
        "Run the {0} skill for the {2} case (focus: {1}) and return the results in JSON format, printing a line "
        "that mentions \"{3}\".",
        "Apply the {0} skill to input/{2}.csv (focus: {1}) and write the output to {2}_table.csv in CSV format.",
    },
    {
        "In a multi-step workflow, first use the {0} skill on input/{2}.csv (focus: {1}), then save the combined "
        "result to {2}_combined.json in JSON format and print a summary that mentions \"{3}\".",
        "Use the {0} skill with non-default options for the {2} case (focus: {1}), return the results in JSON "
        "format and report the options applied in a line that mentions \"{3}\".",
        "Chain two runs of the {0} skill over input/{2}.csv (focus: {1}), export the intermediate data to "
        "{2}_stage1.csv in CSV format, then print a final line that mentions \"{3}\".",
    },
    {
        "Push the {0} skill to its limits (focus: {1}) with the oversized input input/{2}_large.csv and print a "
        "line that mentions \"{3}\", reporting an error if a limit is exceeded.",
        "Give the {0} skill the malformed input input/{2}_invalid.csv (focus: {1}); it must report an error for "
        "the invalid input and print a line that mentions \"{3}\".",
        "Run the {0} skill on the empty input input/{2}_empty.csv (focus: {1}), save whatever it produces to "
        "{2}_empty_result.json and print a line that mentions \"{3}\" instead of crashing.",
    },
};

const std::regex& filename_re() {
  static const std::regex re(R"([A-Za-z0-9_][A-Za-z0-9_./-]*\.(json|csv|tsv|txt|md|html|xml|yaml|yml|log|png|jpg|pdf|svg))");
  return re;
}

const std::regex& output_verb_re() {
  static const std::regex re(R"(\b(save|saves|saving|write|writes|writing|export|exports|store|stores)\b)",
                             std::regex::icase);
  return re;
}

const std::regex& format_re() {
  static const std::regex re(R"(\b(?:(?:in|as) (json|csv)(?: format)?|(json|csv) format)\b)", std::regex::icase);
  return re;
}

const std::regex& quoted_re() {
  static const std::regex re("\"([^\"]+)\"");
  return re;
}

const std::regex& reporting_verb_re() {
  static const std::regex re(R"(\b(print|prints|printing|mention|mentions|report|reports|reporting|display|show|list|return|returns|output|log)\b)",
                             std::regex::icase);
  return re;
}

const std::regex& error_word_re() {
  static const std::regex re(R"(\b(error|errors|invalid|malformed|exceeded|exceeds)\b)", std::regex::icase);
  return re;
}

const std::regex& input_path_re() {
  static const std::regex re(R"(input/[A-Za-z0-9_.-]+\.csv)");
  return re;
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    bool end = (c == '.' || c == ';') && (i + 1 == s.size() || s[i + 1] == ' ' || s[i + 1] == '\n');
    if (end) {
      if (!text::trim(cur).empty()) out.emplace_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!text::trim(cur).empty()) out.emplace_back(text::trim(cur));
  return out;
}

std::string lower_ext(const std::string& path) {
  auto dot = path.rfind('.');
  return dot == std::string::npos ? std::string() : text::to_lower(path.substr(dot + 1));
}

void push_unique(std::vector<ValidationCriterion>& out, ValidationCriterion c) {
  for (const auto& e : out) {
    if (e.kind == c.kind && e.target == c.target && e.where == c.where) return;
  }
  out.push_back(std::move(c));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(eng_() % n); }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
};

std::string focus_text(std::string_view raw) {
  std::string cleaned;
  for (char c : raw) {
    if (c == '"' || c == '*' || c == '\n' || c == '(' || c == ')') continue;
    cleaned.push_back(c);
  }
  auto words = text::split_whitespace(cleaned);
  if (words.size() > 14) words.resize(14);
  std::string out = text::join(words, " ");
  while (!out.empty() && (out.back() == '.' || out.back() == ':' || out.back() == ';' || out.back() == ',')) out.pop_back();
  return out;
}

struct AreaEntry {
  std::string area;
  std::string text;
};

std::vector<AreaEntry> sources_for(Tier tier, const CapabilityProfile& profile, const SkillPackage& pkg) {
  std::vector<AreaEntry> out;
  auto take = [&](std::string_view area) {
    for (const auto& e : profile_area(profile, area)) {
      auto f = focus_text(e);
      if (!f.empty()) out.push_back({std::string(area), f});
    }
  };
  switch (tier) {
    case Tier::Standard: take("core_functions"); break;
    case Tier::Advanced:
      take("optional_features");
      take("io_formats");
      break;
    case Tier::Boundary:
      take("boundary_conditions");
      take("failure_scenarios");
      break;
  }
  if (out.empty() && tier != Tier::Standard) take("core_functions");
  if (out.empty()) {
    for (const auto& c : pkg.commands) out.push_back({"commands", focus_text("running `" + c.raw + "`")});
  }
  return out;
}

std::string fixture_content(const std::string& path, const std::string& subject, Rng& rng) {
  if (path.ends_with("_empty.csv")) return {};
  if (path.ends_with("_invalid.csv")) {
    return fmt::format("id;label|value\n1,\"{}-unterminated,\n???,,,\n\x01\x02 not,csv\n", subject);
  }
  const std::size_t rows = path.ends_with("_large.csv") ? 2000 : 5 + rng.below(8);
  std::string out = "id,label,value\n";
  for (std::size_t i = 1; i <= rows; ++i) out += fmt::format("{},{}-{},{}\n", i, subject, i, rng.below(1000));
  return out;
}

std::vector<std::string> must_keep_tokens(const std::string& description) {
  std::vector<std::string> tokens;
  for (auto it = std::sregex_iterator(description.begin(), description.end(), filename_re()); it != std::sregex_iterator(); ++it) {
    tokens.push_back(it->str());
  }
  for (auto it = std::sregex_iterator(description.begin(), description.end(), quoted_re()); it != std::sregex_iterator(); ++it) {
    tokens.push_back(it->str());
  }
  return tokens;
}

void rephrase_with_model(TaskSuite& suite, const llm::Gateway& gateway, std::string_view skill_name,
                         const ConceptVocabulary& vocab) {
  json listing = json::array();
  for (const auto* split : {&suite.train, &suite.test}) {
    for (const auto& t : *split) listing.push_back({{"id", t.id}, {"tier", to_string(t.tier)}, {"description", t.description}});
  }
  llm::CompletionRequest req;
  req.system =
      "You rewrite generated test tasks for an agent skill so they read naturally. Keep every file name and every "
      "double-quoted term exactly as written. Reply with a JSON object {\"tasks\": [{\"id\": ..., \"description\": "
      "...}]}.";
  req.user = listing.dump(2);
  req.schema = llm::SchemaHint{{"tasks"}};
  auto result = gateway.complete(req);
  const auto* text_result = std::get_if<llm::Text>(&result);
  if (!text_result) return;
  auto obj = llm::extract_json_object(text_result->content);
  if (!obj || !(*obj)["tasks"].is_array()) return;

  std::map<std::string, std::string> rewritten;
  for (const auto& entry : (*obj)["tasks"]) {
    if (entry.is_object() && entry.contains("id") && entry.contains("description") && entry["id"].is_string() &&
        entry["description"].is_string()) {
      rewritten[entry["id"].get<std::string>()] = entry["description"].get<std::string>();
    }
  }

  TaskSuite candidate = suite;
  bool any = false;
  for (auto* split : {&candidate.train, &candidate.test}) {
    for (auto& t : *split) {
      auto it = rewritten.find(t.id);
      if (it == rewritten.end()) continue;
      std::string desc(text::trim(it->second));
      if (desc.empty()) continue;
      auto keep = must_keep_tokens(t.description);
      if (!std::all_of(keep.begin(), keep.end(), [&](const std::string& k) { return desc.find(k) != std::string::npos; })) {
        continue;
      }
      Task updated = t;
      updated.description = desc;
      updated.criteria.clear();
      updated = attach_validation_criteria(std::move(updated), skill_name, vocab);
      if (updated.criteria.size() < t.criteria.size()) continue;
      t = std::move(updated);
      any = true;
    }
  }
  if (!any) return;
  // Revert any task involved in an isolation violation to its template phrasing.
  const auto violations = verify_isolation(candidate);
  for (auto* split : {&candidate.train, &candidate.test}) {
    for (auto& t : *split) {
      const bool involved = std::any_of(violations.begin(), violations.end(),
                                        [&](const std::string& v) { return v.find(t.id) != std::string::npos; });
      if (involved) t = *find_task(suite, t.id);
    }
  }
  if (!verify_isolation(candidate).empty()) return;
  candidate.generator_version = std::string(kGeneratorVersion) + "+llm";
  suite = std::move(candidate);
}

void enforce_tier_monotonicity(TaskSuite& suite, std::string_view skill_name, const ConceptVocabulary& vocab) {
  std::size_t min_standard = 0;
  bool seen = false;
  for (const auto* split : {&suite.train, &suite.test}) {
    for (const auto& t : *split) {
      if (t.tier != Tier::Standard) continue;
      min_standard = seen ? std::min(min_standard, t.criteria.size()) : t.criteria.size();
      seen = true;
    }
  }
  for (auto* split : {&suite.train, &suite.test}) {
    for (auto& t : *split) {
      if (t.tier == Tier::Standard) continue;
      std::size_t pad = 0;
      while (t.criteria.size() < min_standard) {
        ValidationCriterion c;
        c.kind = CriterionKind::KeywordPresent;
        c.target = pad == 0 ? std::string(skill_name) : fmt::format("{} {}", skill_name, pad);
        c.keywords = vocab.lookup(CriterionKind::KeywordPresent, "fallback");
        push_unique(t.criteria, std::move(c));
        ++pad;
      }
    }
  }
}

}  // namespace

std::string_view to_string(Split s) noexcept { return s == Split::Train ? "Train" : "Test"; }

std::string_view to_string(Tier t) noexcept {
  switch (t) {
    case Tier::Standard: return "Standard";
    case Tier::Advanced: return "Advanced";
    case Tier::Boundary: return "Boundary";
  }
  return "Standard";
}

std::string_view to_string(CriterionKind k) noexcept {
  switch (k) {
    case CriterionKind::FileExists: return "FileExists";
    case CriterionKind::KeywordPresent: return "KeywordPresent";
    case CriterionKind::RegexMatch: return "RegexMatch";
  }
  return "KeywordPresent";
}

std::string describe(const ValidationCriterion& c) {
  std::string where;
  switch (c.where.kind) {
    case Location::Kind::Stdout: where = "stdout"; break;
    case Location::Kind::Stderr: where = "stderr"; break;
    case Location::Kind::OutputFile: where = "file " + c.where.path; break;
  }
  switch (c.kind) {
    case CriterionKind::FileExists: return fmt::format("FileExists({})", c.target);
    case CriterionKind::KeywordPresent: return fmt::format("KeywordPresent(\"{}\" in {})", c.target, where);
    case CriterionKind::RegexMatch: return fmt::format("RegexMatch(/{}/ on {})", c.target, where);
  }
  return {};
}

const std::vector<std::string>& ConceptVocabulary::lookup(CriterionKind kind, std::string_view trigger) const {
  if (auto it = by_trigger.find(std::string(trigger)); it != by_trigger.end() && !it->second.empty()) return it->second;
  if (auto it = by_kind.find(std::string(to_string(kind))); it != by_kind.end() && !it->second.empty()) return it->second;
  static const std::vector<std::string> fallback{"usage"};
  return fallback;
}

std::vector<std::string> ConceptVocabulary::all_keywords() const {
  std::set<std::string> all;
  for (const auto& [_, v] : by_kind) all.insert(v.begin(), v.end());
  for (const auto& [_, v] : by_trigger) all.insert(v.begin(), v.end());
  return {all.begin(), all.end()};
}

ConceptVocabulary ConceptVocabulary::from_json(std::string_view json_text) {
  auto j = json::parse(json_text);
  ConceptVocabulary v;
  v.by_kind = j.at("kinds").get<std::map<std::string, std::vector<std::string>>>();
  if (j.contains("triggers")) v.by_trigger = j.at("triggers").get<std::map<std::string, std::vector<std::string>>>();
  return v;
}

const ConceptVocabulary& ConceptVocabulary::builtin() {
  static const ConceptVocabulary v = from_json(embedded::concept_keywords_json);
  return v;
}

Task attach_validation_criteria(Task task, std::string_view skill_name, const ConceptVocabulary& vocab) {
  std::vector<ValidationCriterion> found;
  auto make = [&](CriterionKind kind, std::string target, Location where, std::string_view trigger) {
    ValidationCriterion c;
    c.kind = kind;
    c.target = std::move(target);
    c.where = std::move(where);
    c.keywords = vocab.lookup(kind, trigger);
    return c;
  };

  for (const auto& sentence : split_sentences(task.description)) {
    std::vector<std::string> outputs;
    for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), output_verb_re()); it != std::sregex_iterator(); ++it) {
      auto tail = sentence.substr(static_cast<std::size_t>(it->position() + it->length()));
      std::smatch file;
      if (std::regex_search(tail, file, filename_re())) {
        std::string path = file.str();
        if (path.starts_with("input/")) continue;
        if (std::find(outputs.begin(), outputs.end(), path) == outputs.end()) outputs.push_back(path);
      }
    }
    for (const auto& path : outputs) push_unique(found, make(CriterionKind::FileExists, path, Location::file(path), "output_file"));

    for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), format_re()); it != std::sregex_iterator(); ++it) {
      std::string fmt_name = text::to_lower((*it)[1].matched ? (*it)[1].str() : (*it)[2].str());
      Location where = Location::stdout_stream();
      for (const auto& path : outputs) {
        if (lower_ext(path) == fmt_name) {
          where = Location::file(path);
          break;
        }
      }
      if (fmt_name == "json") {
        push_unique(found, make(CriterionKind::RegexMatch, std::string(kJsonObjectRegex), where, "json_format"));
      } else {
        push_unique(found, make(CriterionKind::RegexMatch, std::string(kCsvRowRegex), where, "csv_format"));
      }
    }
  }

  if (std::regex_search(task.description, reporting_verb_re())) {
    for (auto it = std::sregex_iterator(task.description.begin(), task.description.end(), quoted_re());
         it != std::sregex_iterator(); ++it) {
      std::string term((*it)[1].str());
      if (!text::trim(term).empty()) {
        push_unique(found, make(CriterionKind::KeywordPresent, term, Location::stdout_stream(), "quoted_term"));
      }
    }
  }

  if (std::regex_search(task.description, error_word_re())) {
    push_unique(found, make(CriterionKind::RegexMatch, std::string(kErrorReportRegex), Location::stdout_stream(), "error_report"));
  }

  if (found.empty()) {
    found.push_back(make(CriterionKind::KeywordPresent, std::string(skill_name), Location::stdout_stream(), "fallback"));
  }
  for (auto& c : found) push_unique(task.criteria, std::move(c));
  return task;
}

TaskSuite generate_task_suite(const CapabilityProfile& profile, const SkillPackage& pkg, const GenerationConfig& cfg,
                              const llm::Gateway* gateway, const ConceptVocabulary& vocab) {
  if (cfg.train_count < 2 || cfg.test_count < 2) throw InvalidConfig("InvalidConfig: train and test counts must be >= 2");
  if (profile.core_functions.empty() && pkg.commands.empty()) throw InsufficientProfile();

  TaskSuite suite;
  suite.skill_name = pkg.name;
  suite.generation_seed = cfg.seed;
  suite.generator_version = std::string(kGeneratorVersion);

  Rng rng(cfg.seed ^ fnv1a64(pkg.name));
  std::vector<std::string> pool(std::begin(kSubjects), std::end(kSubjects));
  rng.shuffle(pool);
  const std::size_t half = pool.size() / 2;
  const std::vector<std::string> train_pool(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<std::string> test_pool(pool.begin() + static_cast<std::ptrdiff_t>(half), pool.end());

  std::vector<AreaEntry> sources[3] = {sources_for(Tier::Standard, profile, pkg), sources_for(Tier::Advanced, profile, pkg),
                                       sources_for(Tier::Boundary, profile, pkg)};
  std::size_t template_offset[3];
  std::size_t source_offset[3];
  for (int t = 0; t < 3; ++t) {
    template_offset[t] = rng.below(3);
    source_offset[t] = rng.below(std::max<std::size_t>(1, sources[t].size()));
  }

  auto build_split = [&](Split split, int count, const std::vector<std::string>& subjects) {
    std::vector<Task> tasks;
    const int standard = (count + 1) / 2;
    std::vector<Tier> tiers(static_cast<std::size_t>(standard), Tier::Standard);
    for (int i = 0; i < count - standard; ++i) tiers.push_back(i % 2 == 0 ? Tier::Advanced : Tier::Boundary);

    std::size_t per_tier[3] = {0, 0, 0};
    for (std::size_t i = 0; i < tiers.size(); ++i) {
      const auto tier_index = static_cast<std::size_t>(tiers[i]);
      const std::size_t ordinal = per_tier[tier_index]++;
      std::string subject = subjects[i % subjects.size()];
      if (i >= subjects.size()) subject += fmt::format("-r{}", i / subjects.size() + 1);
      const auto& src = sources[tier_index];
      const auto& entry = src[(source_offset[tier_index] + ordinal) % src.size()];
      const auto& concept_word = kConcepts[tier_index][ordinal % 4];
      const auto tmpl = kTemplates[tier_index][(template_offset[tier_index] + ordinal) % 3];

      Task task;
      task.split = split;
      task.tier = tiers[i];
      task.area = entry.area;
      task.id = fmt::format("{}-{}-{}-{:02}", pkg.name, text::to_lower(to_string(split)), text::to_lower(to_string(tiers[i])),
                            ordinal + 1);
      task.description = fmt::format(fmt::runtime(tmpl), pkg.name, entry.text, subject, concept_word);

      Rng fixture_rng(cfg.seed ^ fnv1a64(task.id));
      std::set<std::string> seen;
      for (auto it = std::sregex_iterator(task.description.begin(), task.description.end(), input_path_re());
           it != std::sregex_iterator(); ++it) {
        if (seen.insert(it->str()).second) task.context.push_back({it->str(), fixture_content(it->str(), subject, fixture_rng)});
      }
      tasks.push_back(attach_validation_criteria(std::move(task), pkg.name, vocab));
    }
    return tasks;
  };

  suite.train = build_split(Split::Train, cfg.train_count, train_pool);
  suite.test = build_split(Split::Test, cfg.test_count, test_pool);

  if (gateway && gateway->enabled()) rephrase_with_model(suite, *gateway, pkg.name, vocab);
  enforce_tier_monotonicity(suite, pkg.name, vocab);

  if (auto violations = verify_isolation(suite); !violations.empty()) {
    throw Error("internal: generated suite violates isolation: " + violations.front());
  }
  return suite;
}

std::vector<std::string> verify_isolation(const TaskSuite& suite) {
  std::vector<std::string> violations;
  for (const auto& tr : suite.train) {
    for (const auto& te : suite.test) {
      if (tr.description.find(te.description) != std::string::npos ||
          te.description.find(tr.description) != std::string::npos) {
        violations.push_back(fmt::format("test task {} and train task {} share description text", te.id, tr.id));
      }
    }
  }
  return violations;
}

const Task* find_task(const TaskSuite& suite, std::string_view id) {
  for (const auto* split : {&suite.train, &suite.test}) {
    for (const auto& t : *split) {
      if (t.id == id) return &t;
    }
  }
  return nullptr;
}

ordered_json to_json(const ValidationCriterion& c) {
  ordered_json where;
  switch (c.where.kind) {
    case Location::Kind::Stdout: where = {{"kind", "Stdout"}}; break;
    case Location::Kind::Stderr: where = {{"kind", "Stderr"}}; break;
    case Location::Kind::OutputFile: where = {{"kind", "OutputFile"}, {"path", c.where.path}}; break;
  }
  ordered_json j;
  j["kind"] = to_string(c.kind);
  j["target"] = c.target;
  j["where"] = where;
  j["weight"] = c.weight;
  j["keywords"] = c.keywords;
  return j;
}

ordered_json to_json(const Task& t) {
  ordered_json j;
  j["id"] = t.id;
  j["split"] = to_string(t.split);
  j["tier"] = to_string(t.tier);
  j["area"] = t.area;
  j["description"] = t.description;
  j["context"] = ordered_json::array();
  for (const auto& f : t.context) j["context"].push_back({{"path", f.path}, {"content", f.text}});
  j["criteria"] = ordered_json::array();
  for (const auto& c : t.criteria) j["criteria"].push_back(to_json(c));
  return j;
}

ordered_json to_json(const TaskSuite& s) {
  ordered_json j;
  j["skill_name"] = s.skill_name;
  j["generation_seed"] = s.generation_seed;
  j["generator_version"] = s.generator_version;
  j["train"] = ordered_json::array();
  for (const auto& t : s.train) j["train"].push_back(to_json(t));
  j["test"] = ordered_json::array();
  for (const auto& t : s.test) j["test"].push_back(to_json(t));
  return j;
}

ValidationCriterion criterion_from_json(const json& j) {
  ValidationCriterion c;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "FileExists") c.kind = CriterionKind::FileExists;
  else if (kind == "KeywordPresent") c.kind = CriterionKind::KeywordPresent;
  else if (kind == "RegexMatch") c.kind = CriterionKind::RegexMatch;
  else throw Error("invalid criterion kind: " + kind);
  c.target = j.at("target").get<std::string>();
  const auto& where = j.at("where");
  const auto wk = where.at("kind").get<std::string>();
  if (wk == "Stdout") c.where = Location::stdout_stream();
  else if (wk == "Stderr") c.where = Location::stderr_stream();
  else if (wk == "OutputFile") c.where = Location::file(where.at("path").get<std::string>());
  else throw Error("invalid criterion location: " + wk);
  c.weight = j.value("weight", 1);
  c.keywords = j.value("keywords", std::vector<std::string>{});
  return c;
}

Task task_from_json(const json& j) {
  Task t;
  t.id = j.at("id").get<std::string>();
  t.split = j.at("split").get<std::string>() == "Test" ? Split::Test : Split::Train;
  const auto tier = j.at("tier").get<std::string>();
  t.tier = tier == "Advanced" ? Tier::Advanced : tier == "Boundary" ? Tier::Boundary : Tier::Standard;
  t.area = j.value("area", std::string());
  t.description = j.at("description").get<std::string>();
  for (const auto& f : j.value("context", json::array())) t.context.push_back({f.at("path").get<std::string>(), f.at("content").get<std::string>()});
  for (const auto& c : j.at("criteria")) t.criteria.push_back(criterion_from_json(c));
  return t;
}

TaskSuite suite_from_json(const json& j) {
  TaskSuite s;
  s.skill_name = j.at("skill_name").get<std::string>();
  s.generation_seed = j.at("generation_seed").get<std::uint64_t>();
  s.generator_version = j.at("generator_version").get<std::string>();
  for (const auto& t : j.at("train")) s.train.push_back(task_from_json(t));
  for (const auto& t : j.at("test")) s.test.push_back(task_from_json(t));
  return s;
}

std::string serialize_suite(const TaskSuite& suite) { return to_json(suite).dump(2) + "\n"; }

}  // namespace skilltune
