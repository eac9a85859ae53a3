#include "skilltune/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <regex>
#include <set>

#include "skilltune/error.hpp"
#include "skilltune/hash.hpp"
#include "skilltune/markdown.hpp"
#include "skilltune/text.hpp"

namespace fs = std::filesystem;

namespace skilltune {
namespace {

std::string marker(std::string_view rule) { return fmt::format("skilltune:rule={}", rule); }

// ---- fallback variant sections ----

struct SectionTemplate {
  std::string_view title;
  std::string_view body;
};

constexpr SectionTemplate kSections[] = {
    {"Error Handling",
     "Error handling: the skill rejects invalid input (missing arguments, unreadable or empty files, malformed rows) "
     "with an error message on stderr that names the offending value, and exits with a non-zero status.\n"
     "Validate inputs before a long run and check the exit status afterwards.\n"},
    {"Usage Examples",
     "Usage: pass every argument explicitly and name the output file you expect.\n"
     "- Example: save the result to an output file, then open it to confirm the format.\n"
     "- JSON output is a single object; CSV output starts with a header row followed by one record per line.\n"},
    {"Troubleshooting",
     "- Output file missing: make sure the target directory exists and is writable.\n"
     "- Validation failures: compare the input format with the documented schema.\n"
     "- Unexpected results: rerun with verbose logging and compare with the usage example.\n"},
};
constexpr std::size_t kSectionCount = std::size(kSections);

std::string section_text(std::size_t index, std::size_t part) {
  const auto& s = kSections[index];
  const std::string title = part <= 1 ? std::string(s.title) : fmt::format("{} (part {})", s.title, part);
  return fmt::format("## {}\n\n{}", title, s.body);
}

std::string append_section(std::string_view base, std::string_view section) {
  std::string out(base);
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  out += "\n\n";
  out += section;
  return out;
}

std::vector<std::string> fallback_variants(std::string_view base, std::size_t count, const std::set<std::string>& taken) {
  std::vector<std::string> out;
  std::set<std::string> seen = taken;
  for (std::size_t k = 0; out.size() < count; ++k) {
    const std::size_t part = k / kSectionCount + 1;
    const std::string section = section_text(k % kSectionCount, part);
    if (base.find(section) != std::string_view::npos) continue;
    std::string candidate = append_section(base, section);
    if (seen.insert(candidate).second) out.push_back(std::move(candidate));
  }
  return out;
}

std::string lessons_summary(const LessonLedger& lessons, std::size_t cap) {
  std::string out;
  for (const auto& l : lessons.recent_negative(cap)) {
    out += fmt::format("- epoch {} variant {} (advantage {:.3f}) missed: {}\n", l.epoch, l.variant_id, l.advantage,
                       l.failed_criteria.empty() ? std::string("nothing recorded") : text::join(l.failed_criteria, "; "));
  }
  return out;
}

struct Proposal {
  std::vector<std::string> texts;
  std::string source = "fallback";
};

Proposal propose(std::string_view base, const LessonLedger& lessons, std::size_t count, const llm::Gateway* gateway,
                 const OptimizerProbe& probe, std::size_t lesson_cap) {
  if (text::trim(base).empty()) throw DegenerateBase();
  Proposal p;
  if (count == 0) return p;
  const std::string summary = lessons_summary(lessons, lesson_cap);
  const std::string prompt = fmt::format(
      "Rewrite the skill instruction below into {} distinct improved versions. Keep every command, path and flag "
      "working; add missing usage examples, output format details and error handling guidance.\n\n"
      "Lessons from low-scoring attempts:\n{}\n"
      "Reply with a JSON object {{\"variants\": [\"<full instruction>\", ...]}}.\n\n<instruction>\n{}\n</instruction>\n",
      count, summary.empty() ? "- none yet\n" : summary, base);
  if (probe) probe("propose_variants", prompt);

  std::set<std::string> seen{std::string(base)};
  if (gateway != nullptr && gateway->enabled()) {
    llm::CompletionRequest req{"You improve agent skill instructions. Answer with JSON only.", prompt,
                               llm::SchemaHint{{"variants"}}};
    auto result = gateway->complete(req);
    if (const auto* t = std::get_if<llm::Text>(&result)) {
      if (auto j = llm::extract_json_object(t->content); j && (*j)["variants"].is_array()) {
        for (const auto& v : (*j)["variants"]) {
          if (!v.is_string() || p.texts.size() >= count) continue;
          auto s = v.get<std::string>();
          if (text::trim(s).empty() || !seen.insert(s).second) continue;
          p.texts.push_back(std::move(s));
        }
      }
    }
    if (!p.texts.empty()) p.source = p.texts.size() == count ? "llm" : "llm+fallback";
  }
  if (p.texts.size() < count) {
    for (auto& s : fallback_variants(base, count - p.texts.size(), seen)) p.texts.push_back(std::move(s));
  }
  return p;
}

// ---- rule transforms ----

std::vector<std::string> lines_of(std::string_view s) {
  std::vector<std::string> out;
  for (auto l : text::split_lines(s)) out.emplace_back(l);
  return out;
}

std::string unlines(const std::vector<std::string>& lines, bool trailing_newline) {
  std::string out = text::join(lines, "\n");
  if (trailing_newline) out.push_back('\n');
  return out;
}

std::string leading_ws(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return std::string(line.substr(0, n));
}

/// Index after shebang, encoding and leading comment lines.
std::size_t header_end(const std::vector<std::string>& lines) {
  std::size_t i = 0;
  while (i < lines.size() && (lines[i].starts_with("#!") || lines[i].starts_with("# -*-"))) ++i;
  return i;
}

bool is_python(const SourceFile& f) { return fs::path(f.path).extension() == ".py"; }
bool is_shell(const SourceFile& f) { return fs::path(f.path).extension() == ".sh"; }

std::size_t ensure_python_import(std::vector<std::string>& lines, std::string_view module) {
  const std::regex has(fmt::format(R"(^\s*import\s+([\w.]+\s*,\s*)*{}\b)", module));
  for (const auto& l : lines) {
    if (std::regex_search(l, has)) return 0;
  }
  lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(header_end(lines)), fmt::format("import {}", module));
  return 1;
}

std::size_t last_top_level_import(const std::vector<std::string>& lines) {
  std::size_t pos = header_end(lines);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].starts_with("import ") || lines[i].starts_with("from ")) pos = i + 1;
  }
  return pos;
}

std::optional<std::string> py_arg_validation(const std::string& src, std::string_view file) {
  if (src.find("sys.argv[") == std::string::npos || src.find("len(sys.argv)") != std::string::npos) return std::nullopt;
  static const std::regex idx(R"(sys\.argv\[(\d+)\])");
  int needed = 0;
  for (auto it = std::sregex_iterator(src.begin(), src.end(), idx); it != std::sregex_iterator(); ++it) {
    needed = std::max(needed, std::stoi((*it)[1].str()));
  }
  if (needed == 0) return std::nullopt;
  auto lines = lines_of(src);
  auto first = std::find_if(lines.begin(), lines.end(), [](const std::string& l) { return l.find("sys.argv[") != std::string::npos; });
  const std::string ind = leading_ws(*first);
  std::string usage = fmt::format("usage: {}", fs::path(file).filename().string());
  for (int i = 1; i <= needed; ++i) usage += fmt::format(" <arg{}>", i);
  const std::vector<std::string> guard{
      fmt::format("{}if len(sys.argv) < {}:  # {}", ind, needed + 1, marker("arg-validation")),
      fmt::format("{}    print(\"{}\", file=sys.stderr)", ind, usage),
      fmt::format("{}    sys.exit(2)", ind),
  };
  const auto at = first - lines.begin();
  lines.insert(lines.begin() + at, guard.begin(), guard.end());
  ensure_python_import(lines, "sys");
  return unlines(lines, src.ends_with('\n'));
}

std::optional<std::string> py_entry_guard(const std::string& src) {
  static const std::regex main_re(R"(^if\s+__name__\s*==\s*['"]__main__['"]\s*:\s*$)");
  auto lines = lines_of(src);
  auto head = std::find_if(lines.begin(), lines.end(), [](const std::string& l) { return std::regex_match(l, main_re); });
  if (head == lines.end()) return std::nullopt;
  std::size_t begin = static_cast<std::size_t>(head - lines.begin()) + 1;
  std::size_t end = begin;
  while (end < lines.size() && (text::trim(lines[end]).empty() || lines[end].starts_with(" ") || lines[end].starts_with("\t"))) ++end;
  while (end > begin && text::trim(lines[end - 1]).empty()) --end;
  if (end == begin) return std::nullopt;
  if (text::trim(lines[begin]).starts_with("try:")) return std::nullopt;
  const std::string ind = leading_ws(lines[begin]);
  std::vector<std::string> body;
  body.push_back(fmt::format("{}try:  # {}", ind, marker("entry-guard")));
  for (std::size_t i = begin; i < end; ++i) body.push_back(text::trim(lines[i]).empty() ? std::string() : "    " + lines[i]);
  body.push_back(ind + "except Exception as exc:");
  body.push_back(ind + "    print(f\"error: {exc}\", file=sys.stderr)");
  body.push_back(ind + "    sys.exit(1)");
  lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(begin), lines.begin() + static_cast<std::ptrdiff_t>(end));
  lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(begin), body.begin(), body.end());
  ensure_python_import(lines, "sys");
  return unlines(lines, src.ends_with('\n'));
}

std::optional<std::string> py_memoize_reads(const std::string& src) {
  static const std::regex read_re(R"(open\(([^()]*)\)\.read\(\))");
  std::map<std::string, int> counts;
  for (auto it = std::sregex_iterator(src.begin(), src.end(), read_re); it != std::sregex_iterator(); ++it) {
    ++counts[text::to_lower(std::string(text::trim((*it)[1].str())))];
  }
  std::set<std::string> repeated;
  for (auto it = std::sregex_iterator(src.begin(), src.end(), read_re); it != std::sregex_iterator(); ++it) {
    const std::string arg(text::trim((*it)[1].str()));
    if (counts[text::to_lower(arg)] >= 2 && arg.find(',') == std::string::npos) repeated.insert((*it)[0].str());
  }
  if (repeated.empty()) return std::nullopt;
  std::string out = src;
  for (const auto& call : repeated) {
    std::smatch m;
    std::regex_search(call, m, read_re);
    out = text::replace_all(out, call, fmt::format("_skilltune_read({})", text::trim(m[1].str())));
  }
  auto lines = lines_of(out);
  const std::vector<std::string> helper{
      "",
      fmt::format("import functools  # {}", marker("memoize-reads")),
      "",
      "",
      "@functools.lru_cache(maxsize=None)",
      "def _skilltune_read(path):",
      "    with open(path) as handle:",
      "        return handle.read()",
      "",
  };
  const auto at = static_cast<std::ptrdiff_t>(last_top_level_import(lines));
  lines.insert(lines.begin() + at, helper.begin(), helper.end());
  return unlines(lines, src.ends_with('\n'));
}

std::size_t shell_preamble_end(const std::vector<std::string>& lines) {
  std::size_t i = header_end(lines);
  while (i < lines.size()) {
    auto t = text::trim(lines[i]);
    if (t.starts_with("set -") || t.find(marker("entry-guard")) != std::string_view::npos) {
      ++i;
    } else {
      break;
    }
  }
  return i;
}

/// Shell source with single-quoted spans and comments blanked out, so awk
/// programs and the like do not look like positional parameters.
std::string shell_code_only(std::string_view src) {
  std::string out;
  bool quoted = false;
  bool comment = false;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const char c = src[i];
    if (c == '\n') {
      comment = false;
      out.push_back(c);
      continue;
    }
    if (comment) continue;
    if (c == '\'') {
      quoted = !quoted;
      continue;
    }
    if (!quoted && c == '#' && (i == 0 || src[i - 1] == ' ' || src[i - 1] == '\t' || src[i - 1] == '\n')) {
      comment = true;
      continue;
    }
    if (!quoted) out.push_back(c);
  }
  return out;
}

std::optional<std::string> sh_arg_validation(const std::string& src) {
  const std::string code = shell_code_only(src);
  if (code.find("$#") != std::string::npos) return std::nullopt;
  static const std::regex pos_re(R"(\$([1-9])|\$\{([1-9])\})");
  int needed = 0;
  for (auto it = std::sregex_iterator(code.begin(), code.end(), pos_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    needed = std::max(needed, std::stoi(m[1].matched ? m[1].str() : m[2].str()));
  }
  if (needed == 0) return std::nullopt;
  auto lines = lines_of(src);
  std::string usage = "usage: $0";
  for (int i = 1; i <= needed; ++i) usage += fmt::format(" <arg{}>", i);
  const std::vector<std::string> guard{
      fmt::format("if [ \"$#\" -lt {} ]; then  # {}", needed, marker("arg-validation")),
      fmt::format("  echo \"{}\" >&2", usage),
      "  exit 2",
      "fi",
  };
  const auto at = static_cast<std::ptrdiff_t>(shell_preamble_end(lines));
  lines.insert(lines.begin() + at, guard.begin(), guard.end());
  return unlines(lines, src.ends_with('\n'));
}

std::optional<std::string> sh_entry_guard(const std::string& src) {
  // ERR traps are a bash feature.
  if (!src.starts_with("#!") || src.substr(0, src.find('\n')).find("bash") == std::string::npos) return std::nullopt;
  if (src.find("trap ") != std::string::npos) return std::nullopt;
  auto lines = lines_of(src);
  lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(header_end(lines)),
               fmt::format("trap 'echo \"error: command failed at line $LINENO\" >&2' ERR  # {}", marker("entry-guard")));
  return unlines(lines, src.ends_with('\n'));
}

// ---- command refinement ----

std::set<std::string> package_files(const SkillPackage& pkg) {
  std::set<std::string> files;
  files.insert(pkg.instruction_path);
  for (const auto& f : pkg.code_files) files.insert(f.path);
  for (const auto& f : pkg.auxiliary_docs) files.insert(f.path);
  std::error_code ec;
  if (!pkg.root.empty() && fs::is_directory(pkg.root, ec)) {
    for (auto it = fs::recursive_directory_iterator(pkg.root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      if (it->path().filename().string().starts_with(".")) {
        if (it->is_directory()) it.disable_recursion_pending();
        continue;
      }
      if (it->is_regular_file()) files.insert(it->path().lexically_relative(pkg.root).generic_string());
    }
  }
  return files;
}

bool looks_like_path(std::string_view token) {
  if (token.empty() || token.front() == '-' || token.find_first_of("=$*?<>|&;`\"'") != std::string_view::npos) return false;
  if (token.find("://") != std::string_view::npos) return false;
  return token.find('/') != std::string_view::npos || fs::path(std::string(token)).has_extension();
}

/// Replaces the first whitespace-delimited occurrence of `token` in `raw`.
std::string replace_token(std::string_view raw, std::string_view token, std::string_view replacement) {
  std::size_t pos = 0;
  while ((pos = raw.find(token, pos)) != std::string_view::npos) {
    const bool left = pos == 0 || raw[pos - 1] == ' ' || raw[pos - 1] == '\t';
    const std::size_t end = pos + token.size();
    const bool right = end == raw.size() || raw[end] == ' ' || raw[end] == '\t';
    if (left && right) {
      std::string out(raw.substr(0, pos));
      out.append(replacement);
      out.append(raw.substr(end));
      return out;
    }
    pos = end;
  }
  return std::string(raw);
}

std::optional<std::string> normalized_path(std::string_view token, const std::set<std::string>& files) {
  if (!looks_like_path(token)) return std::nullopt;
  const bool dot = token.starts_with("./");
  const std::string bare(dot ? token.substr(2) : token);
  if (files.contains(bare)) return std::nullopt;
  std::vector<std::string> hits;
  for (const auto& f : files) {
    if (f.size() > bare.size() && f.ends_with(bare) && f[f.size() - bare.size() - 1] == '/') hits.push_back(f);
  }
  if (hits.size() != 1) return std::nullopt;
  return dot ? "./" + hits.front() : hits.front();
}

CommandSpec normalize_command(const CommandSpec& cmd, const std::set<std::string>& files) {
  std::string raw = cmd.raw;
  std::vector<std::string> tokens{cmd.program};
  tokens.insert(tokens.end(), cmd.args.begin(), cmd.args.end());
  for (const auto& t : tokens) {
    if (auto fixed = normalized_path(t, files)) raw = replace_token(raw, t, *fixed);
  }
  return make_command(raw, cmd.source_block_index);
}

// ---- auto-fix ----

struct PatternTable {
  IssueClass cls;
  std::vector<std::string_view> patterns;
};

const std::vector<PatternTable>& pattern_tables() {
  static const std::vector<PatternTable> tables{
      {IssueClass::ParameterMisconfiguration,
       {"unrecognized argument", "the following arguments are required", "missing required", "required argument",
        "invalid option", "unknown option", "invalid choice", "expected one argument", "usage:"}},
      {IssueClass::DependencyConflict,
       {"modulenotfounderror", "no module named", "importerror", "cannot import name", "command not found", ": not found",
        "version conflict", "incompatible version", "requires python", "dependency conflict"}},
      {IssueClass::PathError,
       {"no such file or directory", "can't open file", "cannot open", "filenotfounderror", "directory nonexistent",
        "cannot create", "not a directory", "path not found"}},
  };
  return tables;
}

std::string failure_text(const ExecutionRecord& r) {
  std::string t = r.stderr_text;
  if (!r.stdout_text.empty()) t += "\n" + r.stdout_text;
  if (r.error) t += "\n" + r.error->message;
  return t;
}

std::string strip_workspace(std::string path) {
  const auto ws = path.find("skilltune-ws-");
  if (ws != std::string::npos) {
    const auto slash = path.find('/', ws);
    path = slash == std::string::npos ? std::string() : path.substr(slash + 1);
  }
  while (path.starts_with("./")) path.erase(0, 2);
  return path;
}

std::vector<std::string> missing_paths(std::string_view failure) {
  static const std::vector<std::regex> res{
      std::regex(R"(No such file or directory: '([^']+)')"),
      std::regex(R"(can't open file '([^']+)')"),
      std::regex(R"(cannot create ([^:\n]+): Directory nonexistent)"),
      std::regex(R"(No such file or directory: ([^\s'"]+))"),
      std::regex(R"(([^\s:'"]+): No such file or directory)"),
  };
  std::vector<std::string> out;
  const std::string s(failure);
  for (const auto& re : res) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      auto p = strip_workspace((*it)[1].str());
      if (!p.empty() && std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    }
  }
  return out;
}

struct Patch {
  SkillPackage pkg;
  std::string description;
};

SkillPackage insert_leading_command(const SkillPackage& pkg, const std::string& line) {
  SkillPackage out = pkg;
  const std::size_t block = pkg.commands.empty() ? 0 : pkg.commands.front().source_block_index;
  out.commands.insert(out.commands.begin(), make_command(line, block));
  if (!pkg.commands.empty()) {
    const auto& first = pkg.commands.front().raw;
    std::size_t pos = 0;
    while ((pos = out.instruction.find(first, pos)) != std::string::npos) {
      const std::size_t ls = out.instruction.rfind('\n', pos == 0 ? 0 : pos - 1);
      const std::size_t line_start = ls == std::string::npos ? 0 : ls + 1;
      const std::string prefix = out.instruction.substr(line_start, pos - line_start);
      if (text::trim(prefix).empty() || text::trim(prefix) == "$") {
        out.instruction.insert(line_start, prefix + line + "\n");
        break;
      }
      pos += first.size();
    }
  }
  return out;
}

std::optional<Patch> patch_path_error(const SkillPackage& pkg, const std::vector<std::string>& failures) {
  const auto files = package_files(pkg);
  auto refined = pkg.commands;
  for (auto& c : refined) c = normalize_command(c, files);
  if (refined != pkg.commands) return Patch{with_commands(pkg, refined), "normalized command paths to package files"};

  for (const auto& f : failures) {
    for (const auto& path : missing_paths(f)) {
      if (path.starts_with("/") || path.find("..") != std::string::npos) continue;
      std::string dir = path.ends_with('/') ? path.substr(0, path.size() - 1) : fs::path(path).parent_path().generic_string();
      if (dir.empty() || dir == ".") continue;
      const std::string mkdir = "mkdir -p " + dir;
      const bool present = std::any_of(pkg.commands.begin(), pkg.commands.end(), [&](const CommandSpec& c) { return c.raw == mkdir; });
      if (present) continue;
      return Patch{insert_leading_command(pkg, mkdir), fmt::format("create missing directory {} before running", dir)};
    }
  }
  return std::nullopt;
}

std::optional<Patch> patch_dependency(const SkillPackage& pkg) {
  static const std::vector<std::pair<std::string, std::string>> swaps{{"python", "python3"}, {"pip", "pip3"}};
  auto refined = pkg.commands;
  std::vector<std::string> notes;
  for (const auto& [from, to] : swaps) {
    if (program_on_path(from) || !program_on_path(to)) continue;
    for (auto& c : refined) {
      if (c.program == from) {
        c = make_command(to + c.raw.substr(from.size()), c.source_block_index);
        if (std::find(notes.begin(), notes.end(), from) == notes.end()) notes.push_back(from);
      }
    }
  }
  if (notes.empty()) return std::nullopt;
  return Patch{with_commands(pkg, refined), fmt::format("switched {} to the available interpreter", text::join(notes, ", "))};
}

/// Value documented for `flag` in code blocks or inline code spans of the
/// instruction; empty optional when the flag is documented as a bare switch.
std::optional<std::optional<std::string>> documented_flag(std::string_view instruction, const std::string& flag) {
  std::vector<std::string> samples;
  const auto doc = markdown::scan(markdown::split_frontmatter(instruction).body);
  for (const auto& b : doc.code_blocks) samples.push_back(b.content);
  static const std::regex span_re("`([^`\\n]+)`");
  const std::string s(instruction);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), span_re); it != std::sregex_iterator(); ++it) samples.push_back((*it)[1].str());
  std::optional<std::optional<std::string>> found;
  for (const auto& sample : samples) {
    const auto tokens = text::split_whitespace(sample);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& t = tokens[i];
      if (t.starts_with(flag + "=")) return std::optional<std::string>(t.substr(flag.size() + 1));
      if (t != flag) continue;
      if (i + 1 < tokens.size() && !tokens[i + 1].starts_with("-")) return std::optional<std::string>(tokens[i + 1]);
      found = std::optional<std::string>();
    }
  }
  return found;
}

std::optional<Patch> patch_parameters(const SkillPackage& pkg, const std::vector<std::string>& failures) {
  static const std::regex flag_re(R"(--[A-Za-z][A-Za-z0-9_-]*)");
  if (pkg.commands.empty()) return std::nullopt;
  auto refined = pkg.commands;
  std::vector<std::string> added;
  for (const auto& f : failures) {
    // Target the command whose script the failure mentions, else the last one.
    std::size_t target = refined.size() - 1;
    for (std::size_t i = 0; i < refined.size(); ++i) {
      for (const auto& a : refined[i].args) {
        if (looks_like_path(a) && f.find(fs::path(a).filename().string()) != std::string::npos) target = i;
      }
    }
    for (auto it = std::sregex_iterator(f.begin(), f.end(), flag_re); it != std::sregex_iterator(); ++it) {
      const std::string flag = (*it)[0].str();
      if (flag == "--help" || refined[target].raw.find(flag) != std::string::npos) continue;
      auto doc = documented_flag(pkg.instruction, flag);
      if (!doc) continue;
      const std::string addition = *doc ? flag + " " + **doc : flag;
      refined[target] = make_command(refined[target].raw + " " + addition, refined[target].source_block_index);
      added.push_back(addition);
    }
  }
  if (added.empty()) return std::nullopt;
  return Patch{with_commands(pkg, refined), fmt::format("added documented flag(s): {}", text::join(added, ", "))};
}

IssueClass dominant_class(const std::vector<std::string>& failures) {
  std::map<IssueClass, int> counts;
  for (const auto& f : failures) ++counts[classify_failure(f)];
  IssueClass best = IssueClass::Other;
  int best_n = 0;
  for (auto cls : {IssueClass::PathError, IssueClass::DependencyConflict, IssueClass::ParameterMisconfiguration}) {
    if (counts[cls] > best_n) {
      best = cls;
      best_n = counts[cls];
    }
  }
  return best;
}

std::vector<std::string> failing_texts(const TrainEval& ev) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ev.records.size(); ++i) {
    const bool failed = ev.records[i].error.has_value() || (i < ev.scores.size() && !ev.scores[i].passed);
    if (failed) out.push_back(failure_text(ev.records[i]));
  }
  return out;
}

std::vector<std::string> failed_criteria(const TrainEval& ev, const std::vector<Task>& train) {
  std::vector<std::string> out;
  for (const auto& s : ev.scores) {
    auto task = std::find_if(train.begin(), train.end(), [&](const Task& t) { return t.id == s.task_id; });
    if (task == train.end()) continue;
    for (const auto& r : s.per_criterion) {
      if (r.satisfied || r.index >= task->criteria.size()) continue;
      auto d = describe(task->criteria[r.index]);
      if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(std::move(d));
    }
  }
  if (out.size() > 12) out.resize(12);
  return out;
}

nlohmann::ordered_json to_json(const FixAttempt& a) {
  nlohmann::ordered_json j;
  j["iteration"] = a.iteration;
  j["issue_class"] = to_string(a.issue_class);
  j["patch_description"] = a.patch_description;
  j["resulting_train_score"] = a.resulting_train_score;
  return j;
}

}  // namespace

std::vector<Lesson> LessonLedger::recent_negative(std::size_t cap) const {
  std::vector<Lesson> out;
  for (auto it = entries_.rbegin(); it != entries_.rend() && out.size() < cap; ++it) {
    if (it->advantage < 0.0) out.push_back(*it);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string_view to_string(IssueClass c) noexcept {
  switch (c) {
    case IssueClass::DependencyConflict: return "DependencyConflict";
    case IssueClass::ParameterMisconfiguration: return "ParameterMisconfiguration";
    case IssueClass::PathError: return "PathError";
    case IssueClass::Other: return "Other";
  }
  return "Other";
}

IssueClass classify_failure(std::string_view failure) {
  const std::string lower = text::to_lower(failure);
  for (const auto& table : pattern_tables()) {
    for (auto p : table.patterns) {
      if (lower.find(p) != std::string::npos) return table.cls;
    }
  }
  return IssueClass::Other;
}

std::vector<std::string> propose_variants(std::string_view base, const LessonLedger& lessons, std::size_t count,
                                          const llm::Gateway* gateway, const OptimizerProbe& probe) {
  return propose(base, lessons, count, gateway, probe, 10).texts;
}

std::vector<double> group_relative_advantages(const std::vector<double>& rewards) {
  std::vector<double> out(rewards.size(), 0.0);
  if (rewards.size() < 2) return out;
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  const double scale = std::max(1.0, std::abs(mean));
  if (!(sd > 1e-15 * scale)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

std::size_t select_variant(VariantGroup& group) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < group.rewards.size(); ++i) {
    if (group.rewards[i] > group.rewards[best]) best = i;
  }
  group.selected = best;
  return best;
}

const std::vector<std::string>& rule_catalog() {
  static const std::vector<std::string> rules{"entry-guard", "arg-validation", "memoize-reads"};
  return rules;
}

RuleResult apply_rule_optimizations(const std::vector<SourceFile>& code_files) {
  RuleResult result;
  for (const auto& file : code_files) {
    SourceFile current = file;
    const bool py = is_python(file);
    const bool sh = is_shell(file);
    for (const auto& rule : rule_catalog()) {
      if (current.text.find(marker(rule)) != std::string::npos) {
        result.skipped.push_back({file.path, rule, "marker present"});
        continue;
      }
      if (!py && !sh) {
        result.skipped.push_back({file.path, rule, "unsupported language"});
        continue;
      }
      std::optional<std::string> changed;
      if (rule == "entry-guard") {
        changed = py ? py_entry_guard(current.text) : sh_entry_guard(current.text);
      } else if (rule == "arg-validation") {
        changed = py ? py_arg_validation(current.text, file.path) : sh_arg_validation(current.text);
      } else if (rule == "memoize-reads" && py) {
        changed = py_memoize_reads(current.text);
      }
      if (changed) {
        current.text = std::move(*changed);
        result.applied.push_back({file.path, rule, "applied"});
      } else {
        result.skipped.push_back({file.path, rule, "not applicable"});
      }
    }
    result.files.push_back(std::move(current));
  }
  return result;
}

std::vector<CommandSpec> refine_commands(const SkillPackage& pkg, const llm::Gateway* gateway, const OptimizerProbe& probe) {
  if (pkg.commands.empty()) return {};
  const auto files = package_files(pkg);
  std::string listing;
  for (const auto& c : pkg.commands) listing += "- " + c.raw + "\n";
  std::string file_list;
  for (const auto& f : files) file_list += "- " + f + "\n";
  const std::string prompt = fmt::format(
      "The commands below were extracted from a skill instruction and run from the package root. Rewrite each so it "
      "runs as-is: fix paths relative to the package root and add required flags the instruction documents. Keep the "
      "same number of commands, in order.\n\nCommands:\n{}\nPackage files:\n{}\n"
      "Reply with a JSON object {{\"commands\": [\"...\"]}}.\n\n<instruction>\n{}\n</instruction>\n",
      listing, file_list, pkg.instruction);
  if (probe) probe("refine_commands", prompt);

  std::vector<CommandSpec> out = pkg.commands;
  if (gateway != nullptr && gateway->enabled()) {
    llm::CompletionRequest req{"You repair shell commands. Answer with JSON only.", prompt, llm::SchemaHint{{"commands"}}};
    auto result = gateway->complete(req);
    if (const auto* t = std::get_if<llm::Text>(&result)) {
      auto j = llm::extract_json_object(t->content);
      if (j && (*j)["commands"].is_array() && (*j)["commands"].size() == pkg.commands.size()) {
        std::vector<CommandSpec> proposed;
        for (std::size_t i = 0; i < pkg.commands.size(); ++i) {
          const auto& v = (*j)["commands"][i];
          if (!v.is_string()) break;
          auto s = v.get<std::string>();
          if (text::trim(s).empty() || s.find('\n') != std::string::npos) break;
          proposed.push_back(make_command(s, pkg.commands[i].source_block_index));
        }
        if (proposed.size() == pkg.commands.size()) out = std::move(proposed);
      }
    }
  }
  for (auto& c : out) c = normalize_command(c, files);
  return out;
}

SkillPackage with_commands(const SkillPackage& pkg, const std::vector<CommandSpec>& commands) {
  SkillPackage out = pkg;
  if (commands.size() == pkg.commands.size()) {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (commands[i].raw != pkg.commands[i].raw) out.instruction = text::replace_all(out.instruction, pkg.commands[i].raw, commands[i].raw);
    }
  }
  out.commands = commands;
  return out;
}

AutoFixResult auto_fix(const SkillPackage& pkg, const std::vector<ExecutionRecord>& failures, int max_iterations,
                       const TrainEvaluator& evaluate, const OptimizerProbe& probe) {
  AutoFixResult res;
  res.package = pkg;
  const TrainEval initial = evaluate(pkg);
  res.initial_score = res.final_score = initial.score;
  if (failures.empty() || max_iterations < 1) return res;

  std::vector<std::string> failing;
  for (const auto& r : failures) failing.push_back(failure_text(r));
  SkillPackage current = pkg;
  double current_score = initial.score;
  for (int iter = 1; iter <= max_iterations; ++iter) {
    if (probe) {
      for (const auto& f : failing) probe("auto_fix", f);
    }
    const IssueClass cls = dominant_class(failing);
    std::optional<Patch> patch;
    switch (cls) {
      case IssueClass::PathError: patch = patch_path_error(current, failing); break;
      case IssueClass::DependencyConflict: patch = patch_dependency(current); break;
      case IssueClass::ParameterMisconfiguration: patch = patch_parameters(current, failing); break;
      case IssueClass::Other: break;
    }
    if (!patch) {
      res.attempts.push_back({iter, cls, "no patch applied", current_score});
      break;
    }
    const TrainEval ev = evaluate(patch->pkg);
    res.attempts.push_back({iter, cls, patch->description, ev.score});
    current = std::move(patch->pkg);
    current_score = ev.score;
    if (ev.score > res.final_score) {
      res.package = current;
      res.final_score = ev.score;
    }
    failing = failing_texts(ev);
    if (failing.empty()) break;
  }
  return res;
}

std::size_t OptimizationHistory::instruction_evaluations() const noexcept {
  std::size_t n = 0;
  for (const auto& e : epochs) n += e.group.rewards.size();
  return n;
}

std::size_t OptimizationHistory::code_pathway_entries() const noexcept {
  std::size_t n = 0;
  for (const auto& e : epochs) n += e.code_steps.size() + e.fix_attempts.size();
  return n;
}

nlohmann::ordered_json to_json(const OptimizationHistory& h) {
  nlohmann::ordered_json j;
  j["config"] = {{"num_epochs", h.config.num_epochs},
                 {"group_size", h.config.group_size},
                 {"max_iterations", h.config.max_iterations},
                 {"lesson_cap", h.config.lesson_cap}};
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : h.epochs) {
    nlohmann::ordered_json ej;
    ej["epoch"] = e.epoch;
    ej["baseline_before"] = e.baseline_before;
    ej["proposal_source"] = e.group.proposal_source;
    ej["variants"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < e.group.variants.size(); ++i) {
      nlohmann::ordered_json vj;
      vj["variant_id"] = e.group.variants[i].id;
      vj["instruction_digest"] = hex_digest(fnv1a64(e.group.variants[i].instruction));
      vj["reward"] = i < e.group.rewards.size() ? e.group.rewards[i] : 0.0;
      vj["advantage"] = i < e.group.advantages.size() ? e.group.advantages[i] : 0.0;
      vj["selected"] = i == e.group.selected;
      ej["variants"].push_back(vj);
    }
    ej["selected"] = e.group.selected;
    ej["code_pathway"] = nlohmann::ordered_json::array();
    for (const auto& s : e.code_steps) {
      ej["code_pathway"].push_back({{"step", s.step},
                                    {"score_before", s.score_before},
                                    {"score_after", s.score_after},
                                    {"kept", s.kept},
                                    {"changes", s.changes}});
    }
    ej["fix_attempts"] = nlohmann::ordered_json::array();
    for (const auto& a : e.fix_attempts) ej["fix_attempts"].push_back(to_json(a));
    ej["baseline_after"] = e.baseline_after;
    j["epochs"].push_back(ej);
  }
  j["lessons"] = nlohmann::ordered_json::array();
  for (const auto& l : h.lessons.entries()) {
    j["lessons"].push_back({{"epoch", l.epoch},
                            {"variant_id", l.variant_id},
                            {"advantage", l.advantage},
                            {"failed_criteria", l.failed_criteria}});
  }
  return j;
}

TrainEvaluator make_train_evaluator(const std::vector<Task>& train, const ExecContext& ctx, const Rubric& rubric,
                                    std::size_t parallelism) {
  return [train, ctx, rubric, parallelism](const SkillPackage& pkg) {
    TrainEval ev;
    ev.records = execute_all(pkg, train, SkillVersion::variant("train"), ctx, parallelism);
    double sum = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      ev.scores.push_back(evaluate_task(ev.records[i], train[i], rubric));
      sum += ev.scores.back().normalized;
    }
    ev.score = train.empty() ? 0.0 : sum / static_cast<double>(train.size());
    return ev;
  };
}

OptimizeResult optimize_skill(const SkillPackage& pkg, const TaskSuite& suite, const OptimizerConfig& cfg,
                              const ExecContext& ctx_in, const Rubric& rubric, const llm::Gateway* gateway,
                              const OptimizerProbe& probe) {
  if (text::trim(pkg.instruction).empty()) throw DegenerateBase();
  if (suite.train.empty()) throw InvalidConfig("optimizer needs at least one train task");
  if (cfg.group_size < 2 || cfg.num_epochs < 1 || cfg.max_iterations < 1) {
    throw InvalidConfig("optimizer needs group_size >= 2, num_epochs >= 1 and max_iterations >= 1");
  }
  ExecContext ctx = ctx_in;
  if (ctx.frozen_seed.empty()) ctx.frozen_seed = frozen_seed_for(pkg.instruction);
  const TrainEvaluator evaluate = make_train_evaluator(suite.train, ctx, rubric, cfg.parallelism);

  OptimizeResult result;
  result.history.config = cfg;
  SkillPackage current = pkg;
  for (int epoch = 1; epoch <= cfg.num_epochs; ++epoch) {
    EpochHistory eh;
    eh.epoch = epoch;
    auto& group = eh.group;
    group.epoch = epoch;
    group.base_instruction = current.instruction;

    auto proposal = propose(current.instruction, result.history.lessons, static_cast<std::size_t>(cfg.group_size - 1),
                            gateway, probe, cfg.lesson_cap);
    group.proposal_source = proposal.source;
    group.variants.push_back({fmt::format("e{}-v0", epoch), current.instruction});
    for (std::size_t k = 0; k < proposal.texts.size(); ++k) {
      group.variants.push_back({fmt::format("e{}-v{}", epoch, k + 1), std::move(proposal.texts[k])});
    }

    std::vector<TrainEval> evals;
    for (const auto& v : group.variants) {
      SkillPackage candidate = current;
      candidate.instruction = v.instruction;
      try {
        evals.push_back(evaluate(candidate));
      } catch (const std::exception&) {
        evals.push_back(TrainEval{});
      }
      group.rewards.push_back(evals.back().score);
    }
    group.advantages = group_relative_advantages(group.rewards);
    const std::size_t chosen = select_variant(group);
    for (std::size_t i = 0; i < group.variants.size(); ++i) {
      if (group.advantages[i] < 0.0) {
        result.history.lessons.append({epoch, group.variants[i].id, failed_criteria(evals[i], suite.train), group.advantages[i]});
      }
    }
    eh.baseline_before = group.rewards.front();
    current.instruction = group.variants[chosen].instruction;
    TrainEval current_eval = evals[chosen];

    if (current.skill_type == SkillType::CodeInclusive) {
      auto try_step = [&](std::string name, SkillPackage candidate, std::vector<std::string> changes) {
        CodeStep step{std::move(name), current_eval.score, current_eval.score, false, std::move(changes)};
        TrainEval ev = evaluate(candidate);
        step.score_after = ev.score;
        step.kept = ev.score >= current_eval.score;
        if (step.kept) {
          current = std::move(candidate);
          current_eval = std::move(ev);
        }
        eh.code_steps.push_back(std::move(step));
      };

      RuleResult rr = apply_rule_optimizations(current.code_files);
      if (rr.applied.empty()) {
        eh.code_steps.push_back({"rule_transforms", current_eval.score, current_eval.score, false, {"no applicable rule"}});
      } else {
        std::vector<std::string> changes;
        for (const auto& c : rr.applied) changes.push_back(c.file + ": " + c.rule);
        SkillPackage candidate = current;
        candidate.code_files = std::move(rr.files);
        try_step("rule_transforms", std::move(candidate), std::move(changes));
      }

      auto refined = refine_commands(current, gateway, probe);
      if (refined == current.commands) {
        eh.code_steps.push_back({"refine_commands", current_eval.score, current_eval.score, false, {"commands unchanged"}});
      } else {
        std::vector<std::string> changes;
        for (std::size_t i = 0; i < refined.size() && i < current.commands.size(); ++i) {
          if (refined[i].raw != current.commands[i].raw) changes.push_back(current.commands[i].raw + " -> " + refined[i].raw);
        }
        try_step("refine_commands", with_commands(current, refined), std::move(changes));
      }

      std::vector<ExecutionRecord> failures;
      for (const auto& r : current_eval.records) {
        if (r.error) failures.push_back(r);
      }
      if (failures.empty()) {
        eh.code_steps.push_back({"auto_fix", current_eval.score, current_eval.score, false, {"no execution errors"}});
      } else {
        AutoFixResult fix = auto_fix(current, failures, cfg.max_iterations, evaluate, probe);
        eh.fix_attempts = fix.attempts;
        std::vector<std::string> changes;
        for (const auto& a : fix.attempts) changes.push_back(fmt::format("{}: {}", to_string(a.issue_class), a.patch_description));
        CodeStep step{"auto_fix", current_eval.score, fix.final_score, false, std::move(changes)};
        if (!(fix.package == current) && fix.final_score >= current_eval.score) {
          step.kept = true;
          current = std::move(fix.package);
          current_eval = evaluate(current);
          step.score_after = current_eval.score;
        }
        eh.code_steps.push_back(std::move(step));
      }
    }
    eh.baseline_after = current_eval.score;
    result.history.epochs.push_back(std::move(eh));
  }
  result.package = std::move(current);
  return result;
}

}  // namespace skilltune
