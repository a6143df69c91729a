#include "rulesynth/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "rulesynth/error.hpp"

extern char** environ;

namespace rulesynth {
namespace fs = std::filesystem;

namespace {

std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += '\'';
  return out;
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

class WorkDir {
public:
  WorkDir(const fs::path& root, bool keep) : keep_(keep) {
    fs::path base = root.empty() ? fs::temp_directory_path() : root;
    fs::create_directories(base);
    std::string templ = (base / "rulesynth-XXXXXX").string();
    if (mkdtemp(templ.data()) == nullptr) {
      throw Error(ErrorCode::IoError, "mkdtemp failed: " + std::string(std::strerror(errno)));
    }
    path_ = templ;
  }
  ~WorkDir() {
    if (!keep_) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  WorkDir(const WorkDir&) = delete;
  WorkDir& operator=(const WorkDir&) = delete;

  [[nodiscard]] const fs::path& path() const { return path_; }

private:
  fs::path path_;
  bool keep_;
};

struct ChildResult {
  int exit_code = -1;
  std::string output;
  bool timed_out = false;
};

ChildResult run_child(const std::string& command, const fs::path& cwd,
                      const std::vector<std::string>& env, double timeout_seconds,
                      std::size_t output_limit) {
  int pipefd[2];
  if (pipe2(pipefd, O_CLOEXEC) != 0) throw Error(ErrorCode::IoError, "pipe failed");

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addchdir_np(&actions, cwd.c_str());
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDERR_FILENO);

  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);

  std::vector<char*> argv = {const_cast<char*>("/bin/sh"), const_cast<char*>("-c"),
                             const_cast<char*>(command.c_str()), nullptr};
  std::vector<char*> envp;
  for (const auto& e : env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);

  pid_t pid = 0;
  int rc = posix_spawn(&pid, "/bin/sh", &actions, &attr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  posix_spawnattr_destroy(&attr);
  close(pipefd[1]);
  if (rc != 0) {
    close(pipefd[0]);
    throw Error(ErrorCode::RunnerNotFound, "cannot spawn /bin/sh: " + std::string(std::strerror(rc)));
  }

  ChildResult result;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(static_cast<long>(timeout_seconds * 1000));
  char buf[4096];
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                    deadline - std::chrono::steady_clock::now())
                    .count();
    if (left <= 0) {
      result.timed_out = true;
      break;
    }
    pollfd pfd{pipefd[0], POLLIN, 0};
    int pr = poll(&pfd, 1, static_cast<int>(std::min<long>(left, 1000)));
    if (pr < 0 && errno == EINTR) continue;
    if (pr == 0) continue;
    ssize_t n = read(pipefd[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    const auto room = output_limit - std::min(output_limit, result.output.size());
    result.output.append(buf, std::min<std::size_t>(room, static_cast<std::size_t>(n)));
  }
  if (result.timed_out) kill(-pid, SIGKILL);
  close(pipefd[0]);

  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (result.timed_out) {
    result.exit_code = 124;
    if (!result.output.empty() && result.output.back() != '\n') result.output += '\n';
    result.output += kTimeoutMarker;
    result.output += '\n';
  } else if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  // Descendants that outlived the shell must not leak.
  kill(-pid, SIGKILL);
  return result;
}

std::vector<std::string> child_env(const SandboxConfig& config) {
  std::vector<std::string> env;
  for (const auto& name : config.env_allowlist) {
    if (const char* v = std::getenv(name.c_str())) env.push_back(name + "=" + v);
  }
  env.emplace_back("PYTHONDONTWRITEBYTECODE=1");
  return env;
}

}  // namespace

SandboxConfig SandboxConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, "sandbox config must be an object");
  SandboxConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "runner") {
        c.runner = value.get<std::string>();
      } else if (key == "container") {
        if (!value.is_null()) c.container = value.get<std::string>();
      } else if (key == "timeout_seconds") {
        c.timeout_seconds = value.get<double>();
      } else if (key == "coverage_file") {
        c.coverage_file = value.get<std::string>();
      } else if (key == "output_limit") {
        c.output_limit = value.get<std::size_t>();
      } else if (key == "implementation_file") {
        c.implementation_file = value.get<std::string>();
      } else if (key == "test_file") {
        c.test_file = value.get<std::string>();
      } else if (key == "env_allowlist") {
        c.env_allowlist = value.get<std::vector<std::string>>();
      } else if (key == "temp_root") {
        c.temp_root = value.get<std::string>();
      } else if (key == "keep_workdirs") {
        c.keep_workdirs = value.get<bool>();
      } else {
        throw Error(ErrorCode::ConfigError, "unknown sandbox key '" + key + "'", key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("sandbox config: ") + e.what());
  }
  if (c.timeout_seconds <= 0) throw Error(ErrorCode::ConfigError, "timeout_seconds must be > 0");
  return c;
}

nlohmann::json SandboxConfig::to_json() const {
  nlohmann::json j = {{"runner", runner},
                      {"timeout_seconds", timeout_seconds},
                      {"coverage_file", coverage_file},
                      {"output_limit", output_limit},
                      {"implementation_file", implementation_file},
                      {"test_file", test_file},
                      {"env_allowlist", env_allowlist},
                      {"temp_root", temp_root.string()},
                      {"keep_workdirs", keep_workdirs}};
  j["container"] = container ? nlohmann::json(*container) : nlohmann::json(nullptr);
  return j;
}

std::optional<double> parse_coverage_report(const nlohmann::json& report,
                                            const std::string& file_name) {
  if (!report.is_object() || !report.contains("files") || !report["files"].is_object()) {
    return std::nullopt;
  }
  const auto want = fs::path(file_name).filename();
  for (const auto& [name, entry] : report["files"].items()) {
    if (name != file_name && fs::path(name).filename() != want) continue;
    const auto& summary = entry.value("summary", nlohmann::json::object());
    const auto statements = summary.value("num_statements", 0.0);
    const auto covered = summary.value("covered_lines", 0.0);
    if (statements <= 0) return std::nullopt;
    return std::clamp(covered / statements, 0.0, 1.0);
  }
  return std::nullopt;
}

TestReport run_tests(const std::string& implementation, const std::string& tests,
                     const SandboxConfig& config) {
  WorkDir dir(config.temp_root, config.keep_workdirs);
  write_file(dir.path() / config.implementation_file, implementation);
  write_file(dir.path() / config.test_file, tests);

  std::string command = config.runner;
  command = replace_all(command, "{impl}", shell_quote(config.implementation_file));
  command = replace_all(command, "{tests}", shell_quote(config.test_file));
  command = replace_all(command, "{module}",
                        shell_quote(fs::path(config.implementation_file).stem().string()));
  command = replace_all(command, "{coverage}", shell_quote(config.coverage_file));
  command = replace_all(command, "{workdir}", shell_quote(dir.path().string()));
  if (config.container) {
    command = replace_all(replace_all(*config.container, "{workdir}", shell_quote(dir.path().string())),
                          "{command}", shell_quote(command));
  }

  const auto start = std::chrono::steady_clock::now();
  auto child =
      run_child(command, dir.path(), child_env(config), config.timeout_seconds, config.output_limit);
  TestReport report;
  report.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  report.exit_code = child.exit_code;
  report.passed = child.exit_code == 0;
  report.output = std::move(child.output);
  report.timed_out = child.timed_out;
  if (child.exit_code == 127) {
    throw Error(ErrorCode::RunnerNotFound, "runner command not found: " + config.runner + "\n" +
                                               report.output);
  }

  // Coverage is only expected from runners that are told where to write it.
  if (config.runner.find("{coverage}") != std::string::npos && !report.timed_out) {
    std::ifstream in(dir.path() / config.coverage_file, std::ios::binary);
    if (!in) {
      report.error = "CoverageArtifactMissing: runner wrote no " + config.coverage_file;
    } else {
      try {
        report.coverage =
            parse_coverage_report(nlohmann::json::parse(in), config.implementation_file);
        if (!report.coverage) {
          report.error = "CoverageArtifactMissing: no entry for " + config.implementation_file;
        }
      } catch (const nlohmann::json::exception& e) {
        report.error = std::string("CoverageArtifactMissing: unreadable report: ") + e.what();
      }
    }
  }
  return report;
}

std::vector<TestReport> run_tests_batch(const std::vector<TestJob>& jobs,
                                        const SandboxConfig& config, std::size_t parallelism) {
  std::vector<TestReport> reports(jobs.size());
  if (jobs.empty()) return reports;
  parallelism = std::clamp<std::size_t>(parallelism, 1, jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        reports[i] = run_tests(jobs[i].implementation, jobs[i].tests, config);
      } catch (const std::exception& e) {
        reports[i].passed = false;
        reports[i].error = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < parallelism; ++t) pool.emplace_back(worker);
  }
  return reports;
}

}  // namespace rulesynth
