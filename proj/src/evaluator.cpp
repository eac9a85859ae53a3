#include "skilltune/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fmt/format.h>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "skilltune/markdown.hpp"
#include "skilltune/skill_model.hpp"
#include "skilltune/text.hpp"

namespace skilltune {
namespace {

constexpr std::size_t kSnippetRadius = 60;

std::string snippet(std::string_view haystack, std::size_t pos, std::size_t len) {
  const std::size_t begin = pos > kSnippetRadius ? pos - kSnippetRadius : 0;
  const std::size_t end = std::min(haystack.size(), pos + len + kSnippetRadius);
  std::string out = begin > 0 ? "..." : "";
  out.append(haystack.substr(begin, end - begin));
  if (end < haystack.size()) out.append("...");
  return out;
}

std::size_t find_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it == haystack.end() ? std::string_view::npos : static_cast<std::size_t>(it - haystack.begin());
}

std::string normalize_path(std::string_view p) {
  while (p.starts_with("./")) p.remove_prefix(2);
  return std::string(p);
}

const Artifact* find_artifact(const ExecutionRecord& rec, std::string_view path) {
  const auto want = normalize_path(path);
  for (const auto& a : rec.artifacts) {
    if (normalize_path(a.path) == want) return &a;
  }
  return nullptr;
}

std::string location_label(const Location& where) {
  switch (where.kind) {
    case Location::Kind::Stdout: return "stdout";
    case Location::Kind::Stderr: return "stderr";
    case Location::Kind::OutputFile: return where.path;
  }
  return "stdout";
}

CriterionResult check_real(const ExecutionRecord& rec, const ValidationCriterion& c, std::size_t index) {
  CriterionResult r;
  r.index = index;
  if (c.kind == CriterionKind::FileExists) {
    const std::string& path = c.where.kind == Location::Kind::OutputFile && c.target.empty() ? c.where.path : c.target;
    if (const Artifact* a = find_artifact(rec, path)) {
      r.satisfied = true;
      r.evidence = fmt::format("{} produced ({} bytes, digest {})", a->path, a->size, a->digest);
    } else {
      r.evidence = fmt::format("{} not produced", path);
    }
    return r;
  }

  std::string_view content;
  switch (c.where.kind) {
    case Location::Kind::Stdout: content = rec.stdout_text; break;
    case Location::Kind::Stderr: content = rec.stderr_text; break;
    case Location::Kind::OutputFile: {
      const Artifact* a = find_artifact(rec, c.where.path);
      if (a == nullptr || !a->content) {
        r.evidence = "target missing";
        return r;
      }
      content = *a->content;
      break;
    }
  }

  if (c.kind == CriterionKind::KeywordPresent) {
    auto pos = find_ci(content, c.target);
    if (pos != std::string_view::npos) {
      r.satisfied = true;
      r.evidence = fmt::format("{}: {}", location_label(c.where), snippet(content, pos, c.target.size()));
    } else {
      r.evidence = fmt::format("'{}' absent from {}", c.target, location_label(c.where));
    }
    return r;
  }

  try {
    const std::regex re(c.target, std::regex::ECMAScript);
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(content.begin(), content.end(), m, re)) {
      r.satisfied = true;
      const auto pos = static_cast<std::size_t>(m.position(0));
      r.evidence = fmt::format("{}: {}", location_label(c.where), snippet(content, pos, static_cast<std::size_t>(m.length(0))));
    } else {
      r.evidence = fmt::format("/{}/ has no match in {}", c.target, location_label(c.where));
    }
  } catch (const std::regex_error& e) {
    r.evidence = fmt::format("invalid pattern /{}/: {}", c.target, e.what());
  }
  return r;
}

// ---- heuristic document checks ----

struct DocView {
  std::string_view full;
  markdown::Document doc;
  std::vector<CommandSpec> commands;
  std::string prose;  // prose lines joined by newlines
};

DocView view_of(std::string_view instruction) {
  DocView v;
  v.full = instruction;
  auto fm = markdown::split_frontmatter(instruction);
  v.doc = markdown::scan(fm.body);
  v.commands = extract_commands(instruction);
  v.prose = text::join(v.doc.prose_lines, "\n");
  return v;
}

bool keyword_group_hit(std::string_view haystack, const std::vector<std::string>& alternatives) {
  return std::any_of(alternatives.begin(), alternatives.end(),
                     [&](const std::string& alt) { return text::contains_word_prefix_ci(haystack, alt); });
}

bool check_keywords(const KeywordSet& ks, const DocView& v) {
  if (ks.groups.empty()) return false;
  std::size_t hits = 0;
  for (const auto& g : ks.groups) {
    if (keyword_group_hit(v.full, g)) ++hits;
  }
  return hits >= ks.required();
}

std::vector<std::string> split_alternatives(std::string_view arg) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= arg.size()) {
    auto bar = arg.find('|', start);
    auto part = text::trim(arg.substr(start, bar == std::string_view::npos ? std::string_view::npos : bar - start));
    if (!part.empty()) out.emplace_back(part);
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view arg, std::size_t fallback) {
  std::size_t n = 0;
  bool any = false;
  for (char ch : arg) {
    if (!std::isdigit(static_cast<unsigned char>(ch))) return fallback;
    n = n * 10 + static_cast<std::size_t>(ch - '0');
    any = true;
  }
  return any ? n : fallback;
}

bool intro_first(const DocView& v) {
  auto fm = markdown::split_frontmatter(v.full);
  for (std::string_view line : text::split_lines(fm.body)) {
    auto t = text::trim(line);
    if (t.empty()) continue;
    if (auto h = markdown::parse_heading(t)) {
      if (h->level == 1) continue;
      return false;
    }
    if (t.starts_with("```") || t.starts_with("~~~") || markdown::parse_list_item(t)) return false;
    return text::split_whitespace(t).size() >= 3;
  }
  return false;
}

const std::set<std::string>& interpreter_programs() {
  static const std::set<std::string> s{"python", "python3", "node", "bash", "sh", "ruby", "npx", "uv", "ts-node", "deno"};
  return s;
}

/// The thing a reader would look up: the script for interpreters, else the program.
std::string command_subject(const CommandSpec& c) {
  if (interpreter_programs().contains(c.program)) {
    for (const auto& a : c.args) {
      if (!a.starts_with("-")) {
        auto slash = a.find_last_of('/');
        return slash == std::string::npos ? a : a.substr(slash + 1);
      }
    }
  }
  return c.program;
}

bool runnable_examples(const DocView& v) {
  static const std::set<std::string> shell{"bash", "sh", "shell", "console", "zsh"};
  static const std::vector<std::string_view> leaders{"$ ", "python", "bash ", "sh ", "node ", "npm ", "pip ", "curl ", "./"};
  for (const auto& b : v.doc.code_blocks) {
    if (!b.closed || text::trim(b.content).empty()) continue;
    if (shell.contains(b.lang)) return true;
    for (std::string_view line : text::split_lines(b.content)) {
      auto t = text::trim(line);
      for (auto lead : leaders) {
        if (t.starts_with(lead)) return true;
      }
    }
  }
  return false;
}

bool consistent_headings(const DocView& v) {
  const auto& hs = v.doc.headings;
  if (hs.empty()) return false;
  int h1 = 0;
  int prev = 0;
  for (const auto& h : hs) {
    if (h.level == 1) ++h1;
    if (prev != 0 && h.level > prev + 1) return false;
    prev = h.level;
  }
  return h1 <= 1;
}

bool no_vague_terms(const DocView& v) {
  static const std::vector<std::string> vague{"somehow", "stuff", "whatever", "and so on", "kind of", "sort of",
                                              "probably", "maybe", "various things", "some things"};
  if (v.prose.empty()) return false;
  return std::none_of(vague.begin(), vague.end(), [&](const std::string& w) { return text::contains_word_prefix_ci(v.prose, w); });
}

bool commands_explained(const DocView& v) {
  if (v.commands.empty()) return false;
  return std::all_of(v.commands.begin(), v.commands.end(),
                     [&](const CommandSpec& c) { return text::contains_ci(v.prose, command_subject(c)); });
}

bool flags_documented(const DocView& v) {
  if (v.commands.empty()) return false;
  for (const auto& c : v.commands) {
    for (const auto& a : c.args) {
      if (!a.starts_with("-") || a == "-" || a == "--") continue;
      std::string flag = a.substr(0, a.find('='));
      if (!text::contains_ci(v.prose, flag)) return false;
    }
  }
  return true;
}

bool check_structure(const StructureRule& rule, const DocView& v) {
  const auto& doc = v.doc;
  if (rule.name == "intro_first") return intro_first(v);
  if (rule.name == "section") {
    const auto alts = split_alternatives(rule.arg);
    return std::any_of(doc.headings.begin(), doc.headings.end(), [&](const markdown::Heading& h) {
      return std::any_of(alts.begin(), alts.end(), [&](const std::string& a) { return text::contains_ci(h.text, a); });
    });
  }
  if (rule.name == "min_code_blocks") {
    const auto closed = std::count_if(doc.code_blocks.begin(), doc.code_blocks.end(),
                                      [](const markdown::CodeBlock& b) { return b.closed && !text::trim(b.content).empty(); });
    return static_cast<std::size_t>(closed) >= std::max<std::size_t>(1, parse_count(rule.arg, 1));
  }
  if (rule.name == "runnable_examples") return runnable_examples(v);
  if (rule.name == "consistent_headings") return consistent_headings(v);
  if (rule.name == "headers_lists_code") {
    return doc.headings.size() >= 3 && !doc.list_items.empty() &&
           std::any_of(doc.code_blocks.begin(), doc.code_blocks.end(), [](const markdown::CodeBlock& b) { return b.closed; });
  }
  if (rule.name == "no_vague_terms") return no_vague_terms(v);
  if (rule.name == "subheadings") {
    return std::any_of(doc.headings.begin(), doc.headings.end(),
                       [](const markdown::Heading& h) { return h.level == 2 || h.level == 3; });
  }
  if (rule.name == "commands_explained") return commands_explained(v);
  if (rule.name == "flags_documented") return flags_documented(v);
  if (rule.name == "min_commands") return v.commands.size() >= std::max<std::size_t>(1, parse_count(rule.arg, 1));
  return false;
}

std::optional<double> stat_value(std::string_view metric, const DocView& v) {
  if (metric == "char_count") return static_cast<double>(v.doc.char_count);
  if (metric == "avg_sentence_words") {
    std::size_t sentences = 0;
    std::size_t words = 0;
    std::string current;
    auto flush = [&] {
      auto n = text::split_whitespace(current).size();
      if (n > 0) {
        ++sentences;
        words += n;
      }
      current.clear();
    };
    for (std::size_t i = 0; i < v.prose.size(); ++i) {
      char ch = v.prose[i];
      const bool boundary_punct =
          (ch == '.' || ch == '!' || ch == '?') && (i + 1 == v.prose.size() || std::isspace(static_cast<unsigned char>(v.prose[i + 1])));
      if (ch == '\n' || boundary_punct) {
        flush();
      } else {
        current.push_back(ch);
      }
    }
    flush();
    if (sentences == 0) return std::nullopt;
    return static_cast<double>(words) / static_cast<double>(sentences);
  }
  return std::nullopt;
}

bool check_mechanical(const MechanicalCheck& check, const DocView& v) {
  return std::visit(
      [&](const auto& c) -> bool {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, KeywordSet>) {
          return check_keywords(c, v);
        } else if constexpr (std::is_same_v<T, StructureRule>) {
          return check_structure(c, v);
        } else {
          auto value = stat_value(c.metric, v);
          return value && c.contains(*value);
        }
      },
      check);
}

bool check_item_in(const CriterionItem& item, const DocView& v) {
  if (const auto* llm_only = std::get_if<LlmOnly>(&item.check)) {
    return llm_only->proxy && check_mechanical(*llm_only->proxy, v);
  }
  return std::visit(
      [&](const auto& c) -> bool {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, LlmOnly>) {
          return false;
        } else {
          return check_mechanical(MechanicalCheck{c}, v);
        }
      },
      item.check);
}

void finalize_overall(DimensionScores& d) {
  double sum = 0.0;
  for (const auto& s : d.per_dimension) sum += s.score;
  d.overall = d.per_dimension.empty() ? 0.0 : sum / static_cast<double>(d.per_dimension.size());
}

std::string build_llm_prompt(std::string_view instruction, const Rubric& rubric) {
  std::string out = "Score the skill instruction below against each rubric dimension.\n";
  out += fmt::format("Each dimension is scored from 0 to {}.\n\n", rubric.scale_max);
  for (const auto& d : rubric.dimensions) {
    out += "## " + d.name + "\n";
    for (const auto& item : d.items) out += "- " + item.text + "\n";
  }
  out +=
      "\nReply with a JSON object of the form "
      "{\"dimensions\": [{\"name\": <dimension name>, \"score\": <number>, \"evidence\": <short quote or reason>}]} "
      "with one entry per dimension.\n\n<instruction>\n";
  out += instruction;
  out += "\n</instruction>\n";
  return out;
}

/// Validates a model reply; returns nullopt when the payload does not cover every dimension.
std::optional<DimensionScores> parse_llm_scores(std::string_view content, const Rubric& rubric) {
  auto j = llm::extract_json_object(content);
  if (!j || !j->contains("dimensions") || !(*j)["dimensions"].is_array()) return std::nullopt;
  DimensionScores out;
  out.mode = ScoringMode::Llm;
  for (const auto& dim : rubric.dimensions) {
    const nlohmann::json* found = nullptr;
    for (const auto& entry : (*j)["dimensions"]) {
      if (entry.is_object() && entry.contains("name") && entry["name"].is_string() &&
          text::to_lower(entry["name"].get<std::string>()) == text::to_lower(dim.name)) {
        found = &entry;
        break;
      }
    }
    if (found == nullptr || !found->contains("score") || !(*found)["score"].is_number()) return std::nullopt;
    double score = (*found)["score"].get<double>();
    if (!std::isfinite(score)) return std::nullopt;
    if (score > rubric.scale_max) {
      out.warnings.push_back(fmt::format("{}: score {} clamped to {}", dim.name, score, rubric.scale_max));
      score = rubric.scale_max;
    } else if (score < 0.0) {
      out.warnings.push_back(fmt::format("{}: score {} clamped to 0", dim.name, score));
      score = 0.0;
    }
    std::string evidence;
    if (found->contains("evidence") && (*found)["evidence"].is_string()) evidence = (*found)["evidence"].get<std::string>();
    out.per_dimension.push_back({dim.name, score, text::cap_with_marker(evidence, kEvidenceCap)});
  }
  finalize_overall(out);
  return out;
}

template <class J>
J optional_number(const std::optional<double>& v) {
  return v ? J(*v) : J(nullptr);
}

std::optional<double> number_or_null(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

bool meets_threshold(double normalized, double threshold) noexcept {
  // Tolerate representation error from points / max_points.
  return normalized + 1e-12 >= threshold;
}

void finalize_score(TaskScore& score, double threshold) {
  score.points = static_cast<std::size_t>(
      std::count_if(score.per_criterion.begin(), score.per_criterion.end(), [](const CriterionResult& r) { return r.satisfied; }));
  score.max_points = std::max<std::size_t>(1, score.per_criterion.size());
  score.normalized = static_cast<double>(score.points) / static_cast<double>(score.max_points);
  score.passed = meets_threshold(score.normalized, threshold);
}

TaskScore evaluate_task(const ExecutionRecord& record, const Task& task, const Rubric& rubric) {
  TaskScore score;
  score.task_id = task.id;
  score.version = record.version;
  score.tier = task.tier;
  score.rubric_digest = rubric_digest(rubric);
  for (std::size_t i = 0; i < task.criteria.size(); ++i) {
    CriterionResult r;
    r.index = i;
    if (record.task_id != task.id) {
      r.evidence = fmt::format("record belongs to {}", record.task_id);
    } else if (record.mode == Mode::Virtual) {
      const CriterionDraw* draw = nullptr;
      if (record.virtual_outcome) {
        for (const auto& d : record.virtual_outcome->per_criterion) {
          if (d.criterion_index == i) draw = &d;
        }
      }
      if (draw == nullptr) {
        r.evidence = "no virtual outcome";
      } else {
        r.satisfied = draw->passed;
        r.evidence = fmt::format("virtual draw {:.6f}, keyword coverage {:.4f}: {}", draw->draw, draw->keyword_coverage,
                                 draw->passed ? "pass" : "fail");
      }
    } else {
      r = check_real(record, task.criteria[i], i);
    }
    r.evidence = text::cap_with_marker(r.evidence, kEvidenceCap);
    score.per_criterion.push_back(std::move(r));
  }
  finalize_score(score, rubric.pass_threshold);
  return score;
}

MetricsSummary compute_metrics(const std::vector<TaskScore>& scores, const std::vector<ExecutionRecord>& records) {
  MetricsSummary m;
  m.task_count = scores.size();
  if (!scores.empty()) {
    double sum = 0.0, standard = 0.0, advanced = 0.0;
    std::size_t passed = 0, n_standard = 0, n_advanced = 0;
    for (const auto& s : scores) {
      sum += s.normalized;
      if (s.passed) ++passed;
      if (s.tier == Tier::Standard) {
        standard += s.normalized;
        ++n_standard;
      } else {
        advanced += s.normalized;
        ++n_advanced;
      }
    }
    const auto n = static_cast<double>(scores.size());
    m.pass_rate = static_cast<double>(passed) / n;
    m.average_score = sum / n;
    if (n_standard > 0) m.standard_score = standard / static_cast<double>(n_standard);
    if (n_advanced > 0) m.advanced_score = advanced / static_cast<double>(n_advanced);
  }
  if (!records.empty()) {
    const auto errors = std::count_if(records.begin(), records.end(), [](const ExecutionRecord& r) { return r.error.has_value(); });
    m.error_rate = static_cast<double>(errors) / static_cast<double>(records.size());
  }
  return m;
}

std::string_view to_string(Verdict v) noexcept { return v == Verdict::Retain ? "Retain" : "Discard"; }

Decision decide_retention(const MetricsSummary& original, const MetricsSummary& optimized,
                          std::span<const std::pair<std::string, double>> deltas) {
  const bool avg_up = optimized.average_score > original.average_score;
  const bool pass_held = optimized.pass_rate >= original.pass_rate;
  Decision d;
  d.verdict = avg_up && pass_held ? Verdict::Retain : Verdict::Discard;
  d.justification = fmt::format(
      "{}: average_score {} -> {} (optimized > original: {}); pass_rate {} -> {} (optimized >= original: {}); "
      "retain requires both",
      to_string(d.verdict), original.average_score, optimized.average_score, avg_up, original.pass_rate,
      optimized.pass_rate, pass_held);
  for (const auto& [task_id, delta] : deltas) {
    if (delta != 0.0) d.evidence_refs.push_back(task_id);
  }
  return d;
}

std::string_view to_string(ScoringMode m) noexcept { return m == ScoringMode::Llm ? "llm" : "heuristic"; }

bool check_item(const CriterionItem& item, std::string_view instruction) { return check_item_in(item, view_of(instruction)); }

DimensionScores evaluate_instruction_heuristic(std::string_view instruction, const Rubric& rubric) {
  const DocView v = view_of(instruction);
  DimensionScores out;
  out.mode = ScoringMode::Heuristic;
  for (const auto& dim : rubric.dimensions) {
    std::size_t satisfied = 0;
    std::vector<std::string> missed;
    for (const auto& item : dim.items) {
      if (check_item_in(item, v)) {
        ++satisfied;
      } else {
        missed.push_back(describe_check(item.check));
      }
    }
    const double score = dim.items.empty() ? 0.0 : rubric.scale_max * static_cast<double>(satisfied) / static_cast<double>(dim.items.size());
    std::string evidence = fmt::format("{}/{} items satisfied", satisfied, dim.items.size());
    if (!missed.empty()) evidence += "; unmet: " + text::join(missed, "; ");
    out.per_dimension.push_back({dim.name, score, text::cap_with_marker(evidence, kEvidenceCap)});
  }
  finalize_overall(out);
  return out;
}

DimensionScores evaluate_instruction_llm(std::string_view instruction, const Rubric& rubric, const llm::Gateway& gateway) {
  llm::CompletionRequest req;
  req.system = "You are a strict reviewer of agent skill documentation. Answer with JSON only.";
  req.user = build_llm_prompt(instruction, rubric);
  req.schema = llm::SchemaHint{{"dimensions"}};
  std::string last_problem;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto result = gateway.complete(req);
    if (const auto* u = std::get_if<llm::Unavailable>(&result)) {
      last_problem = fmt::format("model unavailable ({}): {}", llm::to_string(u->reason), u->detail);
      break;
    }
    if (auto parsed = parse_llm_scores(std::get<llm::Text>(result).content, rubric)) {
      for (const auto& w : parsed->warnings) spdlog::warn("instruction scoring: {}", w);
      return *parsed;
    }
    last_problem = "model reply did not cover every rubric dimension";
  }
  auto fallback = evaluate_instruction_heuristic(instruction, rubric);
  fallback.warnings.push_back(last_problem);
  return fallback;
}

nlohmann::ordered_json to_json(const TaskScore& s) {
  nlohmann::ordered_json j;
  j["task_id"] = s.task_id;
  j["version"] = s.version.label();
  j["tier"] = to_string(s.tier);
  j["points"] = s.points;
  j["max_points"] = s.max_points;
  j["normalized"] = s.normalized;
  j["passed"] = s.passed;
  j["rubric_digest"] = s.rubric_digest;
  j["per_criterion"] = nlohmann::ordered_json::array();
  for (const auto& r : s.per_criterion) {
    j["per_criterion"].push_back({{"index", r.index}, {"satisfied", r.satisfied}, {"evidence", r.evidence}});
  }
  return j;
}

TaskScore task_score_from_json(const nlohmann::json& j) {
  TaskScore s;
  s.task_id = j.at("task_id").get<std::string>();
  s.version = SkillVersion::parse(j.at("version").get<std::string>());
  const auto tier = j.at("tier").get<std::string>();
  s.tier = tier == "Advanced" ? Tier::Advanced : tier == "Boundary" ? Tier::Boundary : Tier::Standard;
  s.points = j.at("points").get<std::size_t>();
  s.max_points = j.at("max_points").get<std::size_t>();
  s.normalized = j.at("normalized").get<double>();
  s.passed = j.at("passed").get<bool>();
  s.rubric_digest = j.at("rubric_digest").get<std::string>();
  for (const auto& r : j.at("per_criterion")) {
    s.per_criterion.push_back({r.at("index").get<std::size_t>(), r.at("satisfied").get<bool>(), r.at("evidence").get<std::string>()});
  }
  return s;
}

nlohmann::ordered_json to_json(const MetricsSummary& m) {
  nlohmann::ordered_json j;
  j["task_count"] = m.task_count;
  j["pass_rate"] = m.pass_rate;
  j["average_score"] = m.average_score;
  j["standard_score"] = optional_number<nlohmann::ordered_json>(m.standard_score);
  j["advanced_score"] = optional_number<nlohmann::ordered_json>(m.advanced_score);
  j["error_rate"] = m.error_rate;
  return j;
}

MetricsSummary metrics_from_json(const nlohmann::json& j) {
  MetricsSummary m;
  m.task_count = j.at("task_count").get<std::size_t>();
  m.pass_rate = j.at("pass_rate").get<double>();
  m.average_score = j.at("average_score").get<double>();
  m.standard_score = number_or_null(j, "standard_score");
  m.advanced_score = number_or_null(j, "advanced_score");
  m.error_rate = j.at("error_rate").get<double>();
  return m;
}

nlohmann::ordered_json to_json(const Decision& d) {
  nlohmann::ordered_json j;
  j["verdict"] = to_string(d.verdict);
  j["justification"] = d.justification;
  j["evidence_refs"] = d.evidence_refs;
  return j;
}

Decision decision_from_json(const nlohmann::json& j) {
  Decision d;
  d.verdict = j.at("verdict").get<std::string>() == "Retain" ? Verdict::Retain : Verdict::Discard;
  d.justification = j.at("justification").get<std::string>();
  d.evidence_refs = j.at("evidence_refs").get<std::vector<std::string>>();
  return d;
}

nlohmann::ordered_json to_json(const DimensionScores& d) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(d.mode);
  j["overall"] = d.overall;
  j["per_dimension"] = nlohmann::ordered_json::array();
  for (const auto& s : d.per_dimension) {
    j["per_dimension"].push_back({{"name", s.name}, {"score", s.score}, {"evidence", s.evidence}});
  }
  j["warnings"] = d.warnings;
  return j;
}

DimensionScores dimension_scores_from_json(const nlohmann::json& j) {
  DimensionScores d;
  d.mode = j.at("mode").get<std::string>() == "llm" ? ScoringMode::Llm : ScoringMode::Heuristic;
  d.overall = j.at("overall").get<double>();
  for (const auto& s : j.at("per_dimension")) {
    d.per_dimension.push_back({s.at("name").get<std::string>(), s.at("score").get<double>(), s.at("evidence").get<std::string>()});
  }
  d.warnings = j.at("warnings").get<std::vector<std::string>>();
  return d;
}

}  // namespace skilltune
