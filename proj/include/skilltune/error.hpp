#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace skilltune {

/// Base for every fatal error the pipeline reports to the user.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingInstructionDoc : public Error {
 public:
  explicit MissingInstructionDoc(const std::filesystem::path& root)
      : Error("MissingInstructionDoc: no SKILL.md or README.md in " + root.string()) {}
};

class UnreadableFile : public Error {
 public:
  explicit UnreadableFile(std::filesystem::path path)
      : Error("UnreadableFile: " + path.string()), path_(std::move(path)) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

class InsufficientProfile : public Error {
 public:
  InsufficientProfile() : Error("InsufficientProfile: no core functions and no commands to seed tasks") {}
};

class EmptyRubric : public Error {
 public:
  EmptyRubric() : Error("EmptyRubric: no headings with list items found") {}
};

class InvalidRubric : public Error {
 public:
  using Error::Error;
};

class DegenerateBase : public Error {
 public:
  DegenerateBase() : Error("DegenerateBase: base instruction is empty") {}
};

class WriteFailure : public Error {
 public:
  explicit WriteFailure(std::filesystem::path path)
      : Error("WriteFailure: " + path.string()), path_(std::move(path)) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

}  // namespace skilltune
