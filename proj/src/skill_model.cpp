#include "skilltune/skill_model.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "skilltune/embedded_data.hpp"
#include "skilltune/error.hpp"
#include "skilltune/hash.hpp"
#include "skilltune/markdown.hpp"
#include "skilltune/text.hpp"

namespace fs = std::filesystem;

namespace skilltune {
namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFile(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw UnreadableFile(path);
  return text::normalize_newlines(ss.str());
}

std::string unquote(std::string_view v) {
  v = text::trim(v);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    v = v.substr(1, v.size() - 2);
  }
  return std::string(v);
}

bool valid_name(std::string_view name) {
  return !name.empty() && name.find('/') == std::string_view::npos && name.find('\\') == std::string_view::npos;
}

const std::set<std::string>& shell_langs() {
  static const std::set<std::string> langs{"bash", "sh", "shell", "console"};
  return langs;
}

void add_unique(std::vector<std::string>& bucket, std::string entry) {
  if (entry.empty()) return;
  if (std::find(bucket.begin(), bucket.end(), entry) == bucket.end()) bucket.push_back(std::move(entry));
}

std::vector<std::string>& mutable_area(CapabilityProfile& p, std::string_view area) {
  if (area == "core_functions") return p.core_functions;
  if (area == "optional_features") return p.optional_features;
  if (area == "boundary_conditions") return p.boundary_conditions;
  if (area == "failure_scenarios") return p.failure_scenarios;
  if (area == "io_formats") return p.io_formats;
  return p.constraints;
}

bool matches_any(std::string_view line, const std::vector<std::string>& keywords) {
  return std::any_of(keywords.begin(), keywords.end(),
                     [&](const std::string& k) { return text::contains_word_prefix_ci(line, k); });
}

}  // namespace

std::string_view to_string(SkillType t) noexcept {
  return t == SkillType::CodeInclusive ? "CodeInclusive" : "InstructionOnly";
}

CommandSpec make_command(std::string raw, std::size_t block_index) {
  CommandSpec cmd;
  cmd.raw = std::string(text::trim(raw));
  auto tokens = text::split_whitespace(cmd.raw);
  if (!tokens.empty()) {
    cmd.program = tokens.front();
    cmd.args.assign(tokens.begin() + 1, tokens.end());
  }
  cmd.source_block_index = block_index;
  return cmd;
}

std::vector<CommandSpec> extract_commands(std::string_view instruction) {
  auto fm = markdown::split_frontmatter(instruction);
  auto doc = markdown::scan(fm.body);
  std::vector<CommandSpec> out;
  for (std::size_t b = 0; b < doc.code_blocks.size(); ++b) {
    const auto& block = doc.code_blocks[b];
    if (!block.closed || !shell_langs().contains(block.lang)) continue;
    const bool console = block.lang == "console";
    std::string pending;
    for (std::string_view line : text::split_lines(block.content)) {
      std::string_view t = text::trim(line);
      if (pending.empty()) {
        if (t.empty() || t.front() == '#') continue;
        if (t.starts_with("$ ")) {
          t = text::trim(t.substr(2));
        } else if (console) {
          continue;  // console output line
        }
      }
      if (t.ends_with("\\")) {
        pending.append(text::trim(t.substr(0, t.size() - 1)));
        pending.push_back(' ');
        continue;
      }
      pending.append(t);
      if (!text::trim(pending).empty()) out.push_back(make_command(pending, b));
      pending.clear();
    }
    if (!text::trim(pending).empty()) out.push_back(make_command(pending, b));
  }
  return out;
}

void classify(SkillPackage& pkg) noexcept {
  pkg.skill_type = pkg.code_files.empty() ? SkillType::InstructionOnly : SkillType::CodeInclusive;
}

SkillPackage parse_skill_package(const fs::path& root, const ParseOptions& opts) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw MissingInstructionDoc(root);

  SkillPackage pkg;
  pkg.root = root;
  fs::path primary;
  if (fs::is_regular_file(root / "SKILL.md", ec)) {
    primary = root / "SKILL.md";
    pkg.instruction_path = "SKILL.md";
  } else if (fs::is_regular_file(root / "README.md", ec)) {
    primary = root / "README.md";
    pkg.instruction_path = "README.md";
  } else {
    throw MissingInstructionDoc(root);
  }
  pkg.instruction = read_file(primary);

  std::string dir_name = fs::absolute(root).lexically_normal().filename().string();
  if (dir_name.empty()) dir_name = fs::absolute(root).lexically_normal().parent_path().filename().string();
  pkg.name = dir_name;

  auto fm = markdown::split_frontmatter(pkg.instruction);
  if (fm.malformed) {
    pkg.warnings.push_back("MalformedFrontmatter: opening '---' without closing fence");
  } else if (fm.block) {
    bool bad = false;
    for (std::string_view line : text::split_lines(*fm.block)) {
      std::string_view t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      auto colon = t.find(':');
      if (colon == std::string_view::npos || colon == 0) {
        // continuation of a multi-line value; only a problem before any key
        if (line.empty() || (line.front() != ' ' && line.front() != '\t')) bad = true;
        continue;
      }
      std::string key(text::trim(t.substr(0, colon)));
      std::string value = unquote(t.substr(colon + 1));
      if (key == "name") {
        if (valid_name(value)) {
          pkg.name = value;
        } else {
          pkg.warnings.push_back("MalformedFrontmatter: invalid name '" + value + "'");
        }
      } else if (key == "description") {
        pkg.description = value;
      }
    }
    if (bad) pkg.warnings.push_back("MalformedFrontmatter: unparseable line in frontmatter");
  }

  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw UnreadableFile(it->path());
    const auto name = it->path().filename().string();
    if (!name.empty() && name.front() == '.') {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file()) files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());

  for (const auto& file : files) {
    std::string rel = file.lexically_relative(root).generic_string();
    if (rel == pkg.instruction_path) continue;
    std::string ext = file.extension().string();
    if (ext == ".md") {
      pkg.auxiliary_docs.push_back({rel, read_file(file)});
    } else if (opts.executable_extensions.contains(ext)) {
      pkg.code_files.push_back({rel, read_file(file)});
    }
  }

  pkg.commands = extract_commands(pkg.instruction);
  classify(pkg);
  return pkg;
}

std::string package_digest(const SkillPackage& pkg) {
  DigestBuilder d;
  d.add(pkg.instruction);
  for (const auto& f : pkg.code_files) d.add(f.path).add(f.text);
  for (const auto& c : pkg.commands) d.add(c.raw);
  return d.hex();
}

const std::vector<std::string>& capability_areas() {
  static const std::vector<std::string> areas{"core_functions",    "optional_features", "boundary_conditions",
                                              "failure_scenarios", "io_formats",        "constraints"};
  return areas;
}

const std::vector<std::string>& profile_area(const CapabilityProfile& p, std::string_view area) {
  return mutable_area(const_cast<CapabilityProfile&>(p), area);
}

ProfileKeywords ProfileKeywords::from_json(std::string_view json_text) {
  auto j = nlohmann::json::parse(json_text);
  ProfileKeywords kw;
  auto read = [](const nlohmann::json& arr) {
    std::vector<Bucket> out;
    for (const auto& b : arr) out.push_back({b.at("bucket").get<std::string>(), b.at("keywords").get<std::vector<std::string>>()});
    return out;
  };
  kw.heading_buckets = read(j.at("heading_buckets"));
  kw.line_buckets = read(j.at("line_buckets"));
  return kw;
}

const ProfileKeywords& ProfileKeywords::builtin() {
  static const ProfileKeywords kw = from_json(embedded::profile_keywords_json);
  return kw;
}

CapabilityProfile extract_capability_profile(const SkillPackage& pkg, const ProfileKeywords& keywords) {
  CapabilityProfile profile;
  auto fm = markdown::split_frontmatter(pkg.instruction);

  struct Open {
    int level;
    std::string area;  // empty = unmatched
  };
  std::vector<Open> stack;
  std::string first_paragraph;
  bool paragraph_done = false;
  bool in_fence = false;

  for (std::string_view line : text::split_lines(fm.body)) {
    std::string_view t = text::trim(line);
    if (t.starts_with("```") || t.starts_with("~~~")) {
      in_fence = !in_fence;
      if (!first_paragraph.empty()) paragraph_done = true;
      continue;
    }
    if (in_fence) continue;
    if (t.empty()) {
      if (!first_paragraph.empty()) paragraph_done = true;
      continue;
    }
    if (auto h = markdown::parse_heading(line)) {
      if (!first_paragraph.empty()) paragraph_done = true;
      while (!stack.empty() && stack.back().level >= h->level) stack.pop_back();
      std::string area;
      for (const auto& b : keywords.heading_buckets) {
        if (matches_any(h->text, b.keywords)) {
          area = b.area;
          break;
        }
      }
      if (area.empty() && !stack.empty()) area = stack.back().area;
      stack.push_back({h->level, area});
      continue;
    }

    std::string entry = markdown::parse_list_item(line).value_or(std::string(t));
    entry = std::string(text::trim(entry));
    if (entry.empty()) continue;
    if (!paragraph_done) {
      if (!first_paragraph.empty()) first_paragraph.push_back(' ');
      first_paragraph.append(entry);
    }
    if (!stack.empty() && !stack.back().area.empty()) add_unique(mutable_area(profile, stack.back().area), entry);
    for (const auto& b : keywords.line_buckets) {
      if (matches_any(entry, b.keywords)) add_unique(mutable_area(profile, b.area), entry);
    }
  }

  if (profile.core_functions.empty() && !first_paragraph.empty()) profile.core_functions.push_back(first_paragraph);
  return profile;
}

}  // namespace skilltune
