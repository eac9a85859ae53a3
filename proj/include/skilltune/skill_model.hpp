#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace skilltune {

enum class SkillType { InstructionOnly, CodeInclusive };

std::string_view to_string(SkillType t) noexcept;

struct CommandSpec {
  std::string raw;
  std::string program;
  std::vector<std::string> args;
  std::size_t source_block_index = 0;

  bool operator==(const CommandSpec&) const = default;
};

/// Builds a CommandSpec from a single command line; program is the first token.
CommandSpec make_command(std::string raw, std::size_t block_index);

struct SourceFile {
  std::string path;  // relative, '/'-separated
  std::string text;

  bool operator==(const SourceFile&) const = default;
};

struct SkillPackage {
  std::string name;
  std::string description;
  std::string instruction;
  std::string instruction_path = "SKILL.md";
  std::vector<SourceFile> auxiliary_docs;
  std::vector<SourceFile> code_files;
  std::vector<CommandSpec> commands;
  SkillType skill_type = SkillType::InstructionOnly;
  std::filesystem::path root;
  std::vector<std::string> warnings;

  bool operator==(const SkillPackage&) const = default;
};

struct ParseOptions {
  std::set<std::string> executable_extensions{".py", ".sh", ".js", ".ts", ".rb"};
};

/// Loads a skill directory. Throws MissingInstructionDoc or UnreadableFile.
SkillPackage parse_skill_package(const std::filesystem::path& root, const ParseOptions& opts = {});

/// One command per non-blank, non-comment line of bash/sh/shell/console fences.
std::vector<CommandSpec> extract_commands(std::string_view instruction);

/// Recomputes skill_type from code_files.
void classify(SkillPackage& pkg) noexcept;

/// Stable digest over instruction, code files and commands.
std::string package_digest(const SkillPackage& pkg);

struct CapabilityProfile {
  std::vector<std::string> core_functions;
  std::vector<std::string> optional_features;
  std::vector<std::string> boundary_conditions;
  std::vector<std::string> failure_scenarios;
  std::vector<std::string> io_formats;
  std::vector<std::string> constraints;

  bool operator==(const CapabilityProfile&) const = default;
};

/// Names of the profile areas, in declaration order.
const std::vector<std::string>& capability_areas();
const std::vector<std::string>& profile_area(const CapabilityProfile& p, std::string_view area);

/// Heading/keyword lists for profile bucketing. Defaults come from the bundled data file.
struct ProfileKeywords {
  struct Bucket {
    std::string area;
    std::vector<std::string> keywords;
  };
  std::vector<Bucket> heading_buckets;
  std::vector<Bucket> line_buckets;

  static const ProfileKeywords& builtin();
  static ProfileKeywords from_json(std::string_view json_text);
};

CapabilityProfile extract_capability_profile(const SkillPackage& pkg,
                                             const ProfileKeywords& keywords = ProfileKeywords::builtin());

}  // namespace skilltune
