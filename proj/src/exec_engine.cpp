#include "skilltune/exec_engine.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "skilltune/hash.hpp"
#include "skilltune/parallel.hpp"
#include "skilltune/text.hpp"

extern char** environ;

namespace fs = std::filesystem;

namespace skilltune {
namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ms(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    reset();
    fd_ = std::exchange(o.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }
  int get() const noexcept { return fd_; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

/// Exclusive temporary directory, removed on destruction.
class Workspace {
 public:
  explicit Workspace(const fs::path& temp_root) {
    fs::path base = temp_root.empty() ? fs::temp_directory_path() : temp_root;
    fs::create_directories(base);
    std::string templ = (base / "skilltune-ws-XXXXXX").string();
    if (::mkdtemp(templ.data()) == nullptr) {
      throw std::runtime_error(fmt::format("mkdtemp failed: {}", std::strerror(errno)));
    }
    path_ = templ;
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& path, std::string_view content, bool executable) {
  fs::create_directories(path.parent_path());
  const bool existed = fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (executable && !existed) {
    fs::permissions(path, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec |
                              fs::perms::others_read | fs::perms::others_exec);
  }
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void materialize(const SkillPackage& pkg, const Task& task, const fs::path& ws) {
  std::error_code ec;
  if (!pkg.root.empty() && fs::is_directory(pkg.root, ec)) {
    for (auto it = fs::recursive_directory_iterator(pkg.root, fs::directory_options::skip_permission_denied, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      const auto name = it->path().filename().string();
      if (!name.empty() && name.front() == '.') {
        if (it->is_directory()) it.disable_recursion_pending();
        continue;
      }
      const auto rel = it->path().lexically_relative(pkg.root);
      if (it->is_directory()) {
        fs::create_directories(ws / rel);
      } else if (it->is_regular_file()) {
        fs::create_directories((ws / rel).parent_path());
        fs::copy_file(it->path(), ws / rel, fs::copy_options::overwrite_existing);
      }
    }
  }
  write_file(ws / pkg.instruction_path, pkg.instruction, false);
  for (const auto& doc : pkg.auxiliary_docs) write_file(ws / doc.path, doc.text, false);
  for (const auto& code : pkg.code_files) write_file(ws / code.path, code.text, true);
  for (const auto& fixture : task.context) write_file(ws / fixture.path, fixture.text, false);
}

using Snapshot = std::map<std::string, std::pair<std::uint64_t, std::string>>;

Snapshot snapshot(const fs::path& ws) {
  Snapshot snap;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(ws, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (!it->is_regular_file(ec)) continue;
    std::string bytes = read_bytes(it->path());
    snap[it->path().lexically_relative(ws).generic_string()] = {bytes.size(), hex_digest(fnv1a64(bytes))};
  }
  return snap;
}

struct ProcessResult {
  std::optional<int> exit_code;
  int signal = 0;
  bool timed_out = false;
  bool spawn_failed = false;
  std::string spawn_error;
};

/// Appends to `sink` up to `cap` total bytes; excess is dropped and flagged.
void append_capped(std::string& sink, const char* data, std::size_t n, std::size_t cap, bool& truncated) {
  if (sink.size() >= cap) {
    if (n) truncated = true;
    return;
  }
  const std::size_t room = cap - sink.size();
  if (n > room) {
    truncated = true;
    n = room;
  }
  sink.append(data, n);
}

ProcessResult run_shell(const std::string& command, const fs::path& cwd, const std::vector<std::string>& extra_env,
                        int timeout_ms, std::size_t cap, std::string& out, std::string& err, bool& truncated) {
  ProcessResult result;
  int out_pipe[2];
  int err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    result.spawn_failed = true;
    result.spawn_error = std::strerror(errno);
    return result;
  }
  Fd out_r(out_pipe[0]), out_w(out_pipe[1]);
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    result.spawn_failed = true;
    result.spawn_error = std::strerror(errno);
    return result;
  }
  Fd err_r(err_pipe[0]), err_w(err_pipe[1]);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, out_w.get(), 1);
  posix_spawn_file_actions_adddup2(&actions, err_w.get(), 2);
  const std::string cwd_str = cwd.string();
  posix_spawn_file_actions_addchdir_np(&actions, cwd_str.c_str());

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  sigset_t defaults;
  sigemptyset(&defaults);
  sigaddset(&defaults, SIGPIPE);
  sigset_t empty;
  sigemptyset(&empty);
  posix_spawnattr_setsigdefault(&attr, &defaults);
  posix_spawnattr_setsigmask(&attr, &empty);
  posix_spawnattr_setpgroup(&attr, 0);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGDEF | POSIX_SPAWN_SETSIGMASK);

  std::vector<std::string> env_storage;
  for (char** e = environ; e && *e; ++e) env_storage.emplace_back(*e);
  for (const auto& kv : extra_env) env_storage.push_back(kv);
  std::vector<char*> envp;
  for (auto& s : env_storage) envp.push_back(s.data());
  envp.push_back(nullptr);

  std::string sh = "/bin/sh", dash_c = "-c", cmd = command;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};

  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, "/bin/sh", &actions, &attr, argv, envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  out_w.reset();
  err_w.reset();
  if (rc != 0) {
    result.spawn_failed = true;
    result.spawn_error = std::strerror(rc);
    return result;
  }

  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  pollfd fds[2] = {{out_r.get(), POLLIN, 0}, {err_r.get(), POLLIN, 0}};
  bool open[2] = {true, true};
  char buf[8192];
  while (open[0] || open[1]) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      result.timed_out = true;
      break;
    }
    for (int i = 0; i < 2; ++i) fds[i].fd = open[i] ? (i == 0 ? out_r.get() : err_r.get()) : -1;
    int n = ::poll(fds, 2, static_cast<int>(std::min<long long>(remaining, 1000)));
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (!open[i] || fds[i].revents == 0) continue;
      ssize_t got = ::read(fds[i].fd, buf, sizeof buf);
      if (got > 0) {
        append_capped(i == 0 ? out : err, buf, static_cast<std::size_t>(got), cap, truncated);
      } else if (got == 0 || (errno != EINTR && errno != EAGAIN)) {
        open[i] = false;
      }
    }
  }

  if (result.timed_out) ::kill(-pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  // Reap stragglers left in the process group.
  ::kill(-pid, SIGKILL);
  if (!result.timed_out) {
    if (WIFEXITED(status)) {
      result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
      result.signal = WTERMSIG(status);
      result.exit_code = 128 + result.signal;
    }
  }
  return result;
}

}  // namespace

std::string_view to_string(Mode m) noexcept { return m == Mode::Real ? "Real" : "Virtual"; }

std::optional<Mode> parse_mode(std::string_view s) {
  const auto lower = text::to_lower(s);
  if (lower == "real") return Mode::Real;
  if (lower == "virtual") return Mode::Virtual;
  return std::nullopt;
}

std::string SkillVersion::label() const {
  switch (kind) {
    case Kind::Original: return "Original";
    case Kind::Optimized: return "Optimized";
    case Kind::Variant: return "Variant(" + variant_id + ")";
  }
  return "Original";
}

SkillVersion SkillVersion::parse(std::string_view label) {
  if (label == "Optimized") return optimized();
  if (label.starts_with("Variant(") && label.ends_with(")")) return variant(std::string(label.substr(8, label.size() - 9)));
  return original();
}

std::string frozen_seed_for(std::string_view original_instruction) { return hex_digest(fnv1a64(original_instruction)); }

bool program_on_path(std::string_view program) {
  if (program.empty()) return false;
  if (program.find('/') != std::string_view::npos) return ::access(std::string(program).c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (!path) return false;
  std::string_view dirs(path);
  std::size_t start = 0;
  while (start <= dirs.size()) {
    auto colon = dirs.find(':', start);
    auto dir = dirs.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start);
    fs::path candidate = fs::path(dir.empty() ? "." : std::string(dir)) / std::string(program);
    if (::access(candidate.c_str(), X_OK) == 0 && !fs::is_directory(candidate)) return true;
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  return false;
}

EnvReport check_environment(const SkillPackage& pkg) {
  static const std::set<std::string> builtins{"cd", "export", "source", ".", "set", "unset", "alias", "exit", "eval", "true", "false"};
  static const std::map<std::string, std::string> interpreters{
      {".py", "python"}, {".sh", "sh"}, {".js", "node"}, {".ts", "ts-node"}, {".rb", "ruby"}};
  EnvReport report;
  auto require = [&](const std::string& program) {
    if (std::find(report.required.begin(), report.required.end(), program) == report.required.end()) {
      report.required.push_back(program);
    }
  };
  for (const auto& cmd : pkg.commands) {
    const auto& prog = cmd.program;
    if (prog.empty() || builtins.contains(prog) || prog.find('=') != std::string::npos) continue;
    if (prog.find('/') != std::string::npos) continue;  // a path inside the package
    require(prog);
  }
  for (const auto& code : pkg.code_files) {
    auto ext = fs::path(code.path).extension().string();
    if (auto it = interpreters.find(ext); it != interpreters.end()) require(it->second);
  }
  for (const auto& prog : report.required) {
    (program_on_path(prog) ? report.present : report.missing).push_back(prog);
  }
  return report;
}

ExecutionRecord execute_task_real(const SkillPackage& pkg, const Task& task, const ExecLimits& limits,
                                  const SkillVersion& version) {
  ExecutionRecord rec;
  rec.task_id = task.id;
  rec.version = version;
  rec.mode = Mode::Real;
  const auto start = Clock::now();

  if (pkg.skill_type == SkillType::InstructionOnly) {
    // Instruction-only skills are judged on their document.
    rec.exit_code = 0;
    append_capped(rec.stdout_text, pkg.instruction.data(), pkg.instruction.size(), limits.max_output_bytes, rec.truncated);
    rec.duration_ms = elapsed_ms(start);
    return rec;
  }
  if (pkg.commands.empty()) {
    rec.error = ExecError{"NoCommand", "code-inclusive skill exposes no runnable command", false};
    rec.duration_ms = elapsed_ms(start);
    return rec;
  }

  try {
    Workspace ws(limits.temp_root);
    materialize(pkg, task, ws.path());
    const Snapshot before = snapshot(ws.path());
    const std::vector<std::string> env{"SKILL_TASK_ID=" + task.id, "SKILL_TASK_DESCRIPTION=" + task.description,
                                       "SKILL_WORKSPACE=" + ws.path().string()};
    for (const auto& cmd : pkg.commands) {
      auto res = run_shell(cmd.raw, ws.path(), env, limits.timeout_ms, limits.max_output_bytes, rec.stdout_text,
                           rec.stderr_text, rec.truncated);
      if (res.spawn_failed) {
        rec.error = ExecError{"SpawnFailure", fmt::format("cannot spawn '{}': {}", cmd.raw, res.spawn_error), true};
        break;
      }
      if (res.timed_out) {
        rec.error = ExecError{"Timeout", fmt::format("'{}' exceeded {} ms", cmd.raw, limits.timeout_ms), true};
        break;
      }
      rec.exit_code = res.exit_code;
      if (res.signal != 0) {
        rec.error = ExecError{"Crash", fmt::format("'{}' killed by signal {}", cmd.raw, res.signal), true};
        break;
      }
      if (res.exit_code.value_or(1) != 0) {
        rec.error = ExecError{"NonZeroExit", fmt::format("'{}' exited with status {}", cmd.raw, *res.exit_code), true};
        break;
      }
    }
    const Snapshot after = snapshot(ws.path());
    for (const auto& [path, info] : after) {
      auto it = before.find(path);
      if (it != before.end() && it->second == info) continue;
      Artifact a{path, info.first, info.second, std::nullopt};
      if (info.first <= limits.max_output_bytes) a.content = read_bytes(ws.path() / path);
      rec.artifacts.push_back(std::move(a));
    }
  } catch (const std::exception& e) {
    rec.error = ExecError{"Io", e.what(), !rec.stdout_text.empty() || !rec.stderr_text.empty()};
  }
  rec.duration_ms = elapsed_ms(start);
  return rec;
}

double keyword_coverage(std::string_view instruction, const std::vector<std::string>& keywords) {
  if (keywords.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& k : keywords) {
    if (text::contains_ci(instruction, k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(keywords.size());
}

double criterion_draw(std::string_view frozen_seed, std::string_view task_id, std::size_t criterion_index) {
  std::string bytes;
  bytes.reserve(frozen_seed.size() + task_id.size() + 24);
  bytes.append(frozen_seed);
  bytes.push_back('\x1f');
  bytes.append(task_id);
  bytes.push_back('\x1f');
  bytes.append(std::to_string(criterion_index));
  return hash_unit(bytes);
}

std::pair<ExecutionRecord, VirtualOutcome> execute_task_virtual(std::string_view frozen_seed, std::string_view instruction,
                                                                const Task& task, const VirtualModel& model,
                                                                const SkillVersion& version) {
  VirtualOutcome outcome;
  outcome.task_id = task.id;
  ExecutionRecord rec;
  rec.task_id = task.id;
  rec.version = version;
  rec.mode = Mode::Virtual;
  for (std::size_t i = 0; i < task.criteria.size(); ++i) {
    CriterionDraw d;
    d.criterion_index = i;
    d.keyword_coverage = keyword_coverage(instruction, task.criteria[i].keywords);
    d.draw = criterion_draw(frozen_seed, task.id, i);
    d.passed = d.draw < model.pass_probability(d.keyword_coverage);
    rec.stdout_text += fmt::format("criterion {} {}: coverage={:.4f} draw={:.6f} {}\n", i, describe(task.criteria[i]),
                                   d.keyword_coverage, d.draw, d.passed ? "pass" : "fail");
    outcome.per_criterion.push_back(d);
  }
  rec.virtual_outcome = outcome;
  return {std::move(rec), std::move(outcome)};
}

ExecutionRecord execute(const SkillPackage& pkg, const Task& task, const SkillVersion& version, const ExecContext& ctx) {
  try {
    if (ctx.mode == Mode::Virtual) return execute_task_virtual(ctx.frozen_seed, pkg.instruction, task, ctx.model, version).first;
    return execute_task_real(pkg, task, ctx.limits, version);
  } catch (const std::exception& e) {
    ExecutionRecord rec;
    rec.task_id = task.id;
    rec.version = version;
    rec.mode = ctx.mode;
    rec.error = ExecError{"Internal", e.what(), false};
    return rec;
  }
}

std::vector<ExecutionRecord> execute_all(const SkillPackage& pkg, const std::vector<Task>& tasks,
                                         const SkillVersion& version, const ExecContext& ctx, std::size_t parallelism) {
  std::vector<ExecutionRecord> out(tasks.size());
  const std::size_t workers = ctx.mode == Mode::Virtual ? 1 : parallelism;
  parallel_for(tasks.size(), workers, [&](std::size_t i) { out[i] = execute(pkg, tasks[i], version, ctx); });
  return out;
}

ComparativeRunLog run_comparative(const SkillPackage& original, const SkillPackage& optimized, const std::vector<Task>& tests,
                                  const ExecContext& ctx, std::size_t parallelism) {
  ComparativeRunLog log;
  log.mode = ctx.mode;
  std::vector<std::pair<ExecutionRecord, ExecutionRecord>> slots(tests.size());
  parallel_for(tests.size(), parallelism, [&](std::size_t i) {
    // Original strictly before Optimized within a task.
    slots[i].first = execute(original, tests[i], SkillVersion::original(), ctx);
    slots[i].second = execute(optimized, tests[i], SkillVersion::optimized(), ctx);
  });
  for (auto& [orig, opt] : slots) {
    ++log.original.total;
    ++log.optimized.total;
    if (!orig.error) ++log.original.succeeded;
    if (!opt.error) ++log.optimized.succeeded;
    log.records.push_back(std::move(orig));
    log.records.push_back(std::move(opt));
  }
  return log;
}

nlohmann::ordered_json to_json(const ExecutionRecord& r) {
  nlohmann::ordered_json j;
  j["task_id"] = r.task_id;
  j["skill_version"] = r.version.label();
  j["mode"] = to_string(r.mode);
  j["exit_code"] = r.exit_code ? nlohmann::ordered_json(*r.exit_code) : nlohmann::ordered_json(nullptr);
  j["stdout"] = r.stdout_text;
  j["stderr"] = r.stderr_text;
  j["truncated"] = r.truncated;
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : r.artifacts) {
    nlohmann::ordered_json aj;
    aj["path"] = a.path;
    aj["size"] = a.size;
    aj["digest"] = a.digest;
    if (a.content) aj["content"] = *a.content;
    j["artifacts"].push_back(aj);
  }
  j["duration_ms"] = r.duration_ms;
  if (r.error) {
    j["error"] = {{"class", r.error->error_class},
                  {"message", r.error->message},
                  {"partial_output_preserved", r.error->partial_output_preserved}};
  } else {
    j["error"] = nullptr;
  }
  if (r.virtual_outcome) {
    nlohmann::ordered_json v = nlohmann::ordered_json::array();
    for (const auto& d : r.virtual_outcome->per_criterion) {
      v.push_back({{"criterion_index", d.criterion_index},
                   {"keyword_coverage", d.keyword_coverage},
                   {"draw", d.draw},
                   {"passed", d.passed}});
    }
    j["virtual_outcome"] = v;
  }
  return j;
}

ExecutionRecord record_from_json(const nlohmann::json& j) {
  ExecutionRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  r.version = SkillVersion::parse(j.at("skill_version").get<std::string>());
  r.mode = parse_mode(j.at("mode").get<std::string>()).value_or(Mode::Real);
  if (!j.at("exit_code").is_null()) r.exit_code = j.at("exit_code").get<int>();
  r.stdout_text = j.value("stdout", std::string());
  r.stderr_text = j.value("stderr", std::string());
  r.truncated = j.value("truncated", false);
  for (const auto& a : j.value("artifacts", nlohmann::json::array())) {
    Artifact art{a.at("path").get<std::string>(), a.at("size").get<std::uint64_t>(), a.at("digest").get<std::string>(),
                 std::nullopt};
    if (a.contains("content")) art.content = a.at("content").get<std::string>();
    r.artifacts.push_back(std::move(art));
  }
  r.duration_ms = j.value("duration_ms", std::int64_t{0});
  if (j.contains("error") && !j.at("error").is_null()) {
    const auto& e = j.at("error");
    r.error = ExecError{e.at("class").get<std::string>(), e.at("message").get<std::string>(),
                        e.value("partial_output_preserved", false)};
  }
  if (j.contains("virtual_outcome")) {
    VirtualOutcome v;
    v.task_id = r.task_id;
    for (const auto& d : j.at("virtual_outcome")) {
      v.per_criterion.push_back({d.at("criterion_index").get<std::size_t>(), d.at("keyword_coverage").get<double>(),
                                 d.at("draw").get<double>(), d.at("passed").get<bool>()});
    }
    r.virtual_outcome = std::move(v);
  }
  return r;
}

std::string serialize_execution_log(const ComparativeRunLog& log) {
  nlohmann::ordered_json header;
  header["log_header"] = {{"mode", to_string(log.mode)},
                          {"environment", log.environment_policy},
                          {"original", {{"total", log.original.total}, {"succeeded", log.original.succeeded}}},
                          {"optimized", {{"total", log.optimized.total}, {"succeeded", log.optimized.succeeded}}}};
  std::string out = header.dump() + "\n";
  for (const auto& r : log.records) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<ExecutionRecord> parse_execution_log(std::string_view jsonl) {
  std::vector<ExecutionRecord> out;
  for (std::string_view line : text::split_lines(jsonl)) {
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (j.contains("log_header")) continue;
    out.push_back(record_from_json(j));
  }
  return out;
}

}  // namespace skilltune
