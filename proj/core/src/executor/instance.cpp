#include "iterforge/executor/instance.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>
#include <thread>

#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"

extern char** environ;

namespace iterforge {

namespace fs = std::filesystem;

std::string_view to_string(OutcomeStatus status) {
  switch (status) {
    case OutcomeStatus::kSuccess: return "success";
    case OutcomeStatus::kFailure: return "failure";
    case OutcomeStatus::kBroken: return "broken";
  }
  return "failure";
}

namespace {

std::string resolve_command(const ExecutorManifest& manifest) {
  const std::string& cmd = manifest.entry.front();
  fs::path p(cmd);
  if (p.is_relative() && !manifest.package_path.empty() && fs::exists(manifest.package_path / p)) {
    return (manifest.package_path / p).string();
  }
  return cmd;
}

}  // namespace

ExecutorInstance::ExecutorInstance(Workspace workspace, InstanceOptions options)
    : workspace_(std::move(workspace)), options_(std::move(options)) {}

ExecutorInstance::~ExecutorInstance() {
  std::lock_guard lock(mu_);
  if (pid_ > 0 && !exit_) {
    ::kill(-pid_, SIGKILL);
    reap_locked(true);
  }
}

std::shared_ptr<ExecutorInstance> ExecutorInstance::launch(const ExecutorManifest& manifest,
                                                           const Workspace& workspace,
                                                           std::span<const int> gpu_ids,
                                                           InstanceOptions options) {
  std::shared_ptr<ExecutorInstance> inst(new ExecutorInstance(workspace, std::move(options)));
  write_launch_config(workspace, gpu_ids);

  // Everything the child needs is built before fork(); the child only makes
  // async-signal-safe calls.
  std::vector<std::string> args = manifest.entry;
  args.front() = resolve_command(manifest);
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_storage;
  for (char** e = environ; *e != nullptr; ++e) {
    if (std::strncmp(*e, "ITERFORGE_", 10) != 0) env_storage.emplace_back(*e);
  }
  env_storage.push_back("ITERFORGE_WORKSPACE=" + workspace.root.string());
  env_storage.push_back("ITERFORGE_TASK_ID=" + workspace.task_id);
  std::vector<char*> envp;
  for (auto& e : env_storage) envp.push_back(e.data());
  envp.push_back(nullptr);

  const std::string root = workspace.root.string();
  const std::string log = workspace.log_file().string();

  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) {
    inst->spawn_errno_ = errno;
    inst->exit_ = ExitStatus{ExitStatus::Kind::kSpawnFailed, errno, false};
    return inst;
  }
  pid_t pid = ::fork();
  if (pid < 0) {
    inst->spawn_errno_ = errno;
    inst->exit_ = ExitStatus{ExitStatus::Kind::kSpawnFailed, errno, false};
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    return inst;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    int err = 0;
    if (::chdir(root.c_str()) != 0) {
      err = errno;
    } else {
      int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
      if (fd < 0) {
        err = errno;
      } else {
        ::dup2(fd, STDOUT_FILENO);
        ::dup2(fd, STDERR_FILENO);
        ::close(fd);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) {
          ::dup2(devnull, STDIN_FILENO);
          ::close(devnull);
        }
        ::execvpe(argv[0], argv.data(), envp.data());
        err = errno;
      }
    }
    ssize_t ignored = ::write(pipefd[1], &err, sizeof err);
    (void)ignored;
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(pipefd[1]);
  int child_err = 0;
  ssize_t n;
  do {
    n = ::read(pipefd[0], &child_err, sizeof child_err);
  } while (n < 0 && errno == EINTR);
  ::close(pipefd[0]);
  inst->pid_ = pid;
  if (n == static_cast<ssize_t>(sizeof child_err)) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    inst->spawn_errno_ = child_err;
    inst->exit_ = ExitStatus{ExitStatus::Kind::kSpawnFailed, child_err, false};
  }
  return inst;
}

std::optional<ExitStatus> ExecutorInstance::reap_locked(bool block) {
  if (exit_) return exit_;
  if (pid_ <= 0) return std::nullopt;
  int status = 0;
  pid_t r;
  do {
    r = ::waitpid(pid_, &status, block ? 0 : WNOHANG);
  } while (r < 0 && errno == EINTR);
  if (r == 0) return std::nullopt;
  if (r < 0) {
    exit_ = ExitStatus{ExitStatus::Kind::kSignaled, 0, false};
  } else if (WIFEXITED(status)) {
    exit_ = ExitStatus{ExitStatus::Kind::kExited, WEXITSTATUS(status), false};
  } else {
    exit_ = ExitStatus{ExitStatus::Kind::kSignaled, WIFSIGNALED(status) ? WTERMSIG(status) : 0, false};
  }
  return exit_;
}

std::optional<ExitStatus> ExecutorInstance::poll() {
  std::lock_guard lock(mu_);
  return reap_locked(false);
}

ExitStatus ExecutorInstance::wait() {
  for (;;) {
    if (auto st = poll()) return *st;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

std::optional<TaskOutcome> ExecutorInstance::outcome() const {
  std::lock_guard lock(mu_);
  return outcome_;
}

TaskOutcome ExecutorInstance::finalize(const ExitStatus& status) {
  std::lock_guard lock(mu_);
  return finalize_locked(status);
}

TaskOutcome ExecutorInstance::stop() {
  std::unique_lock lock(mu_);
  if (outcome_) return *outcome_;
  if (auto st = reap_locked(false)) return finalize_locked(*st);
  ::kill(-pid_, SIGTERM);
  auto deadline = std::chrono::steady_clock::now() + options_.stop_grace;
  std::optional<ExitStatus> st;
  while (!(st = reap_locked(false)) && std::chrono::steady_clock::now() < deadline) {
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    lock.lock();
  }
  if (!st) {
    ::kill(-pid_, SIGKILL);
    st = reap_locked(true);
  }
  // Anything still alive in the group after the leader exited is cleaned up too.
  ::kill(-pid_, SIGKILL);
  ExitStatus stopped = *st;
  stopped.stop_requested = true;
  return finalize_locked(stopped);
}

TaskOutcome ExecutorInstance::finalize_locked(const ExitStatus& status) {
  if (outcome_) return *outcome_;
  TaskOutcome out;
  const fs::path log = workspace_.log_file();
  if (!options_.log_root.empty() && fs::exists(log)) {
    std::error_code ec;
    fs::create_directories(options_.log_root, ec);
    fs::path stored = options_.log_root / (workspace_.task_id + ".log");
    fs::copy_file(log, stored, fs::copy_options::overwrite_existing, ec);
    if (!ec) out.stored_log = stored;
  }
  auto archive = [&] {
    if (options_.archive_root.empty()) return;
    fs::path dst = options_.archive_root / workspace_.task_id;
    try {
      copy_tree(workspace_.out(), dst);
      out.archived_intermediates = dst;
    } catch (const Error&) {
    }
  };

  if (status.kind == ExitStatus::Kind::kSpawnFailed) {
    out.status = OutcomeStatus::kFailure;
    out.exit_detail = "spawn failed: " + std::string(std::strerror(status.code));
  } else if (status.stop_requested) {
    out.status = OutcomeStatus::kBroken;
    out.exit_detail = "stopped by user";
    archive();
  } else if (status.kind == ExitStatus::Kind::kExited && status.code == 0) {
    if (auto problem = collect_outputs(workspace_, out)) {
      out.status = OutcomeStatus::kFailure;
      out.exit_detail = "clean exit but outputs invalid: " + *problem;
      out.artifacts.clear();
      archive();
    } else {
      out.status = OutcomeStatus::kSuccess;
      out.exit_detail = "exit code 0";
    }
  } else {
    out.status = OutcomeStatus::kFailure;
    out.exit_detail = status.kind == ExitStatus::Kind::kExited
                          ? "exit code " + std::to_string(status.code)
                          : "killed by signal " + std::to_string(status.code);
    archive();
  }
  outcome_ = out;
  return out;
}

std::vector<std::pair<std::string, double>> read_mining_result(const fs::path& file) {
  std::vector<std::pair<std::string, double>> out;
  std::istringstream in(read_file(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "result.tsv line without tab");
    std::string id = line.substr(0, tab);
    if (!AssetId::is_valid_hex(id)) throw Error(ErrorCode::kInvalidArgument, "bad asset id " + id);
    std::size_t used = 0;
    double score = std::stod(line.substr(tab + 1), &used);
    if (used != line.size() - tab - 1) throw Error(ErrorCode::kInvalidArgument, "bad score: " + line);
    out.emplace_back(std::move(id), score);
  }
  return out;
}

std::optional<std::string> collect_outputs(const Workspace& ws, TaskOutcome& outcome) {
  try {
    switch (ws.kind) {
      case ExecutorKind::kTrain: {
        fs::path result = ws.out() / "result.json";
        if (!fs::exists(result)) return "out/result.json missing";
        auto j = nlohmann::json::parse(read_file(result));
        if (!j.contains("accuracy") || !j["accuracy"].is_number()) return "result.json has no numeric accuracy";
        outcome.accuracy = j["accuracy"].get<double>();
        fs::path models = ws.out() / "models";
        if (!fs::is_directory(models)) return "out/models missing";
        for (const auto& de : fs::recursive_directory_iterator(models)) {
          if (de.is_regular_file()) outcome.artifacts.push_back(de.path());
        }
        if (outcome.artifacts.empty()) return "out/models is empty";
        outcome.artifacts.push_back(result);
        return std::nullopt;
      }
      case ExecutorKind::kMine: {
        fs::path result = ws.out() / "result.tsv";
        if (!fs::exists(result)) return "out/result.tsv missing";
        read_mining_result(result);
        outcome.artifacts.push_back(result);
        return std::nullopt;
      }
      case ExecutorKind::kInfer: {
        fs::path dir = ws.out() / "infer";
        if (!fs::is_directory(dir)) return "out/infer missing";
        for (const auto& de : fs::directory_iterator(dir)) {
          if (de.path().extension() != ".ann") continue;
          parse_annotations(read_file(de.path()));
          outcome.artifacts.push_back(de.path());
        }
        return std::nullopt;
      }
    }
  } catch (const std::exception& e) {
    return std::string(e.what());
  }
  return "unknown kind";
}

}  // namespace iterforge
