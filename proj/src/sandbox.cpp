#include "budgeteval/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "budgeteval/errors.hpp"
#include "budgeteval/jsonl.hpp"

namespace budgeteval::sandbox {

using jsonl::json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail_assertion: return "fail_assertion";
    case Verdict::fail_runtime: return "fail_runtime";
    case Verdict::fail_timeout: return "fail_timeout";
    case Verdict::fail_setup: return "fail_setup";
  }
  return "?";
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "pass") return Verdict::pass;
  if (s == "fail_assertion") return Verdict::fail_assertion;
  if (s == "fail_runtime") return Verdict::fail_runtime;
  if (s == "fail_timeout") return Verdict::fail_timeout;
  if (s == "fail_setup") return Verdict::fail_setup;
  throw ValidationError("unknown verdict \"" + s + "\"");
}

namespace {

constexpr char kAssertSentinel[] = "__HARNESS_ASSERTION_FAILURE__";
constexpr std::size_t kStderrExcerptCap = 2048;

// Uncaught AssertionError prints a sentinel before the normal traceback so
// the classifier can tell test failures from other crashes.
const std::string kAssertPrelude =
    "import sys as _hsys\n"
    "def _h_excepthook(t, v, tb):\n"
    "    if issubclass(t, AssertionError):\n"
    "        print(\"__HARNESS_ASSERTION_FAILURE__\", file=_hsys.stderr, flush=True)\n"
    "    _hsys.__excepthook__(t, v, tb)\n"
    "_hsys.excepthook = _h_excepthook\n";

std::string base64_encode(const std::string& data) {
  static const char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= data.size()) {
    const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                       (static_cast<unsigned char>(data[i + 1]) << 8) |
                       static_cast<unsigned char>(data[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
    i += 3;
  }
  const std::size_t rest = data.size() - i;
  if (rest == 1) {
    const unsigned v = static_cast<unsigned char>(data[i]) << 16;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                       (static_cast<unsigned char>(data[i + 1]) << 8);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

// Concatenates parts in order, inserting a newline only where the previous
// part does not already end with one.
std::string join_program_parts(std::initializer_list<const std::string*> parts) {
  std::string out;
  for (const std::string* part : parts) {
    if (part->empty()) continue;
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += *part;
  }
  return out;
}

struct StdioFixture {
  std::string input;
  std::string expected_stdout;
};

std::optional<std::vector<StdioFixture>> parse_stdio_fixtures(const std::string& payload) {
  json doc = json::parse(payload, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  auto it = doc.find("fixtures");
  if (it == doc.end() || !it->is_array()) return std::nullopt;
  std::vector<StdioFixture> fixtures;
  for (const json& entry : *it) {
    if (!entry.is_object()) return std::nullopt;
    StdioFixture f;
    if (entry.contains("stdin")) f.input = entry["stdin"].get<std::string>();
    if (entry.contains("stdout")) f.expected_stdout = entry["stdout"].get<std::string>();
    fixtures.push_back(std::move(f));
  }
  return fixtures;
}

std::string make_stdio_wrapper(const std::string& candidate,
                               const std::vector<StdioFixture>& fixtures) {
  json fj = json::array();
  for (const StdioFixture& f : fixtures)
    fj.push_back(json{{"stdin", f.input}, {"stdout", f.expected_stdout}});
  std::ostringstream out;
  out << "import base64 as _b64, json as _json, subprocess as _sp, sys as _sys\n"
      << "_CANDIDATE = _b64.b64decode(\"" << base64_encode(candidate)
      << "\").decode(\"utf-8\")\n"
      << "_FIXTURES = _json.loads(_b64.b64decode(\"" << base64_encode(fj.dump())
      << "\").decode(\"utf-8\"))\n"
      << "def _normalize(text):\n"
      << "    lines = [ln.rstrip() for ln in text.splitlines()]\n"
      << "    while lines and not lines[-1]:\n"
      << "        lines.pop()\n"
      << "    return \"\\n\".join(lines)\n"
      << "def _main():\n"
      << "    with open(\"__candidate__.py\", \"w\", encoding=\"utf-8\") as fh:\n"
      << "        fh.write(_CANDIDATE)\n"
      << "    for _case in _FIXTURES:\n"
      << "        _proc = _sp.run([_sys.executable, \"__candidate__.py\"],\n"
      << "                        input=_case.get(\"stdin\", \"\"),\n"
      << "                        capture_output=True, text=True)\n"
      << "        if _proc.returncode != 0:\n"
      << "            _sys.stderr.write(_proc.stderr)\n"
      << "            _sys.exit(1)\n"
      << "        if _normalize(_proc.stdout) != _normalize(_case.get(\"stdout\", \"\")):\n"
      << "            print(\"" << kAssertSentinel << "\", file=_sys.stderr, flush=True)\n"
      << "            _sys.stderr.write(\"stdout mismatch\\n\")\n"
      << "            _sys.exit(1)\n"
      << "    _sys.exit(0)\n"
      << "_main()\n";
  return out.str();
}

}  // namespace

std::string assemble_program(const corpus::Problem& problem, const corpus::Generation& gen) {
  switch (problem.benchmark) {
    case corpus::Benchmark::function_completion:
      return join_program_parts({&kAssertPrelude, &problem.prompt, &gen.text,
                                 &problem.test_payload});
    case corpus::Benchmark::instruction_function:
      return join_program_parts({&kAssertPrelude, &gen.text, &problem.test_payload});
    case corpus::Benchmark::full_program: {
      if (auto fixtures = parse_stdio_fixtures(problem.test_payload))
        return make_stdio_wrapper(gen.text, *fixtures);
      return join_program_parts({&kAssertPrelude, &gen.text, &problem.test_payload});
    }
  }
  throw std::logic_error("unreachable benchmark kind");
}

std::optional<std::string> find_executable(const std::string& command) {
  if (command.empty()) return std::nullopt;
  auto runnable = [](const std::string& p) {
    struct stat st{};
    return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
  };
  if (command.find('/') != std::string::npos)
    return runnable(command) ? std::optional<std::string>(command) : std::nullopt;
  const char* path_env = ::getenv("PATH");
  std::string path = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  std::size_t begin = 0;
  while (begin <= path.size()) {
    std::size_t end = path.find(':', begin);
    if (end == std::string::npos) end = path.size();
    std::string dir = path.substr(begin, end - begin);
    if (dir.empty()) dir = ".";
    std::string candidate = dir + "/" + command;
    if (runnable(candidate)) return candidate;
    begin = end + 1;
  }
  return std::nullopt;
}

namespace {

// Unique scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "budgeteval-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (::mkdtemp(buf.data()) == nullptr)
      throw InfraError(std::string("mkdtemp failed: ") + std::strerror(errno));
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

ExecutionResult setup_failure(const std::string& why) {
  ExecutionResult r;
  r.verdict = Verdict::fail_setup;
  r.stderr_excerpt = why;
  return r;
}

void append_capped(std::string& sink, const char* data, std::size_t len, bool& truncated) {
  if (sink.size() >= kStderrExcerptCap) {
    truncated = true;
    return;
  }
  const std::size_t room = kStderrExcerptCap - sink.size();
  if (len > room) {
    truncated = true;
    len = room;
  }
  sink.append(data, len);
}

// Reads whatever is available without blocking; returns false on EOF.
bool drain_fd(int fd, std::string& sink, bool& truncated) {
  char buf[4096];
  while (true) {
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n > 0) {
      append_capped(sink, buf, static_cast<std::size_t>(n), truncated);
      continue;
    }
    if (n == 0) return false;
    if (errno == EAGAIN || errno == EWOULDBLOCK) return true;
    if (errno == EINTR) continue;
    return false;
  }
}

}  // namespace

ExecutionResult execute_one(const std::string& source, const ExecutionLimits& limits) {
  if (!(limits.timeout_seconds > 0.0)) throw std::domain_error("timeout must be > 0");
  if (limits.interpreter_command.empty())
    return setup_failure("empty interpreter command");
  const auto exe = find_executable(limits.interpreter_command.front());
  if (!exe)
    return setup_failure("interpreter not found: " + limits.interpreter_command.front());

  std::unique_ptr<TempDir> dir;
  try {
    dir = std::make_unique<TempDir>();
  } catch (const std::exception& e) {
    return setup_failure(e.what());
  }
  const std::filesystem::path script = dir->path() / "main.py";
  {
    std::ofstream out(script, std::ios::trunc | std::ios::binary);
    out << source;
    if (!out) return setup_failure("cannot write " + script.string());
  }

  // argv / envp assembled before fork: the child must not allocate.
  std::vector<std::string> argv_storage;
  argv_storage.push_back(*exe);
  for (std::size_t i = 1; i < limits.interpreter_command.size(); ++i)
    argv_storage.push_back(limits.interpreter_command[i]);
  argv_storage.push_back(script.string());
  std::vector<char*> argv;
  for (std::string& s : argv_storage) argv.push_back(s.data());
  argv.push_back(nullptr);

  static const char* kEnvAllowlist[] = {"PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"};
  std::vector<std::string> env_storage;
  for (const char* name : kEnvAllowlist)
    if (const char* value = ::getenv(name)) env_storage.push_back(std::string(name) + "=" + value);
  std::vector<char*> envp;
  for (std::string& s : env_storage) envp.push_back(s.data());
  envp.push_back(nullptr);

  const std::string workdir = dir->path().string();

  int stderr_pipe[2];
  int exec_pipe[2];
  if (::pipe2(stderr_pipe, O_CLOEXEC) != 0) return setup_failure("pipe2 failed");
  if (::pipe2(exec_pipe, O_CLOEXEC) != 0) {
    ::close(stderr_pipe[0]);
    ::close(stderr_pipe[1]);
    return setup_failure("pipe2 failed");
  }

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {stderr_pipe[0], stderr_pipe[1], exec_pipe[0], exec_pipe[1]}) ::close(fd);
    return setup_failure(std::string("fork failed: ") + std::strerror(errno));
  }

  if (pid == 0) {
    // Child. Async-signal-safe calls only.
    ::setpgid(0, 0);
    if (::chdir(workdir.c_str()) != 0) _exit(125);
    const int devnull_r = ::open("/dev/null", O_RDONLY);
    const int devnull_w = ::open("/dev/null", O_WRONLY);
    if (devnull_r < 0 || devnull_w < 0) _exit(125);
    ::dup2(devnull_r, STDIN_FILENO);
    ::dup2(devnull_w, STDOUT_FILENO);
    ::dup2(stderr_pipe[1], STDERR_FILENO);
    if (limits.memory_cap_bytes) {
      struct rlimit rl;
      rl.rlim_cur = static_cast<rlim_t>(*limits.memory_cap_bytes);
      rl.rlim_max = static_cast<rlim_t>(*limits.memory_cap_bytes);
      ::setrlimit(RLIMIT_AS, &rl);
    }
    ::execve(argv[0], argv.data(), envp.data());
    const int err = errno;
    (void)!::write(exec_pipe[1], &err, sizeof(err));
    _exit(127);
  }

  // Parent.
  ::close(stderr_pipe[1]);
  ::close(exec_pipe[1]);
  const int err_fd = stderr_pipe[0];
  ::fcntl(err_fd, F_SETFL, O_NONBLOCK);

  const auto deadline =
      start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                  std::chrono::duration<double>(limits.timeout_seconds));
  std::string stderr_data;
  bool truncated = false;
  bool timed_out = false;
  bool stderr_open = true;
  int status = 0;

  while (true) {
    const pid_t reaped = ::waitpid(pid, &status, WNOHANG);
    if (reaped == pid) break;
    if (reaped < 0 && errno != EINTR) break;
    const auto now = std::chrono::steady_clock::now();
    if (!timed_out && now >= deadline) {
      ::kill(-pid, SIGKILL);
      timed_out = true;
    }
    if (stderr_open) {
      struct pollfd pfd{err_fd, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, 20);
      if (pr > 0) stderr_open = drain_fd(err_fd, stderr_data, truncated);
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  const double duration =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  // Collect remaining stderr briefly; a grandchild holding the pipe open
  // must not stall the harness.
  const auto drain_deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(200);
  while (stderr_open && std::chrono::steady_clock::now() < drain_deadline) {
    struct pollfd pfd{err_fd, POLLIN, 0};
    if (::poll(&pfd, 1, 20) <= 0) break;
    stderr_open = drain_fd(err_fd, stderr_data, truncated);
  }
  ::close(err_fd);
  ::kill(-pid, SIGKILL);  // sweep any stragglers in the group

  int exec_errno = 0;
  const ssize_t exec_err_len = ::read(exec_pipe[0], &exec_errno, sizeof(exec_errno));
  ::close(exec_pipe[0]);

  ExecutionResult result;
  result.duration_seconds = duration;
  if (truncated) stderr_data += "\n...[truncated]";
  result.stderr_excerpt = stderr_data;

  if (exec_err_len == static_cast<ssize_t>(sizeof(exec_errno))) {
    result.verdict = Verdict::fail_setup;
    result.stderr_excerpt = std::string("cannot execute interpreter: ") +
                            std::strerror(exec_errno);
  } else if (timed_out) {
    result.verdict = Verdict::fail_timeout;
  } else if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
    result.verdict = Verdict::pass;
  } else if (stderr_data.find(kAssertSentinel) != std::string::npos) {
    result.verdict = Verdict::fail_assertion;
  } else {
    result.verdict = Verdict::fail_runtime;
  }
  return result;
}

ResultMatrix::ResultMatrix(std::vector<ExecutionResult> results)
    : results_(std::move(results)) {
  std::sort(results_.begin(), results_.end(),
            [](const ExecutionResult& a, const ExecutionResult& b) {
              return std::tie(a.problem_id, a.mode, a.candidate_index) <
                     std::tie(b.problem_id, b.mode, b.candidate_index);
            });
}

std::map<std::string, ProblemCounts> summarize(const ResultMatrix& matrix) {
  std::map<std::string, ProblemCounts> counts;
  for (const ExecutionResult& r : matrix.results()) {
    ProblemCounts& pc = counts[r.problem_id];
    if (r.mode == corpus::Mode::greedy) {
      pc.greedy_pass = r.verdict == Verdict::pass;
    } else {
      ++pc.n;
      if (r.verdict == Verdict::pass) ++pc.c;
    }
  }
  for (const auto& [problem_id, pc] : counts) {
    if (pc.c < 0 || pc.c > pc.n)
      throw std::logic_error("summarize broke 0 <= c <= n for " + problem_id);
  }
  return counts;
}

namespace {

json result_to_json(const ExecutionResult& r) {
  return json{{"problem_id", r.problem_id},
              {"candidate_index", r.candidate_index},
              {"mode", corpus::to_string(r.mode)},
              {"verdict", to_string(r.verdict)},
              {"duration", r.duration_seconds},
              {"stderr_excerpt", r.stderr_excerpt}};
}

ExecutionResult result_from_json(const json& record, const std::string& where) {
  ExecutionResult r;
  try {
    r.problem_id = record.at("problem_id").get<std::string>();
    r.candidate_index = record.at("candidate_index").get<int>();
    r.mode = corpus::mode_from_string(record.value("mode", "sampled"));
    r.verdict = verdict_from_string(record.at("verdict").get<std::string>());
    r.duration_seconds = record.value("duration", 0.0);
    r.stderr_excerpt = record.value("stderr_excerpt", "");
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad result record: " + e.what());
  }
  return r;
}

}  // namespace

ResultMatrix load_results(const std::filesystem::path& path, bool lenient) {
  std::ifstream in(path);
  if (!in) throw InfraError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  std::vector<ExecutionResult> results;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(i + 1);
    json record = json::parse(lines[i], nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      if (lenient && i + 1 == lines.size()) break;  // checkpoint cut off mid-write
      throw ParseError(where + ": invalid JSON");
    }
    results.push_back(result_from_json(record, where));
  }
  return ResultMatrix(std::move(results));
}

void save_results(const ResultMatrix& matrix, const std::filesystem::path& path) {
  std::vector<json> records;
  records.reserve(matrix.size());
  for (const ExecutionResult& r : matrix.results()) records.push_back(result_to_json(r));
  jsonl::write_records(path, records);
}

ExecuteReport execute_corpus(const corpus::ProblemSet& problems,
                             const corpus::GenerationSet& gens, const ExecutionLimits& limits,
                             const ExecuteOptions& options) {
  if (options.parallelism < 1) throw std::domain_error("parallelism must be >= 1");

  struct Task {
    const corpus::Problem* problem;
    const corpus::Generation* gen;
  };
  std::vector<Task> tasks;
  tasks.reserve(gens.size());
  for (const corpus::Generation& g : gens.all()) {
    const corpus::Problem* p = problems.find(g.problem_id);
    if (p == nullptr)
      throw ValidationError("generation for unknown problem \"" + g.problem_id + "\"");
    tasks.push_back(Task{p, &g});
  }
  std::sort(tasks.begin(), tasks.end(), [](const Task& a, const Task& b) {
    return std::tie(a.gen->problem_id, a.gen->mode, a.gen->candidate_index) <
           std::tie(b.gen->problem_id, b.gen->mode, b.gen->candidate_index);
  });

  ExecuteReport report;
  std::vector<ExecutionResult> slots(tasks.size());
  std::vector<char> filled(tasks.size(), 0);

  // Resume: reuse any checkpointed result addressing a current task.
  using Key = std::tuple<std::string, int, corpus::Mode>;
  std::map<Key, ExecutionResult> checkpointed;
  if (!options.checkpoint_path.empty() && std::filesystem::exists(options.checkpoint_path)) {
    const ResultMatrix prior = load_results(options.checkpoint_path, /*lenient=*/true);
    for (const ExecutionResult& r : prior.results())
      checkpointed.insert_or_assign(Key{r.problem_id, r.candidate_index, r.mode}, r);
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const corpus::Generation& g = *tasks[i].gen;
    auto it = checkpointed.find(Key{g.problem_id, g.candidate_index, g.mode});
    if (it != checkpointed.end()) {
      slots[i] = it->second;
      filled[i] = 1;
      ++report.reused;
    } else {
      todo.push_back(i);
    }
  }

  std::ofstream checkpoint;
  if (!options.checkpoint_path.empty()) {
    checkpoint.open(options.checkpoint_path, std::ios::app);
    if (!checkpoint) throw InfraError("cannot open checkpoint " + options.checkpoint_path.string());
  }

  std::mutex collect_mutex;
  std::atomic<std::size_t> next{0};
  std::size_t done = report.reused;
  if (options.progress) options.progress(done, tasks.size());

  auto worker = [&]() {
    while (true) {
      if (options.cancel && options.cancel->load()) return;
      const std::size_t slot_pos = next.fetch_add(1);
      if (slot_pos >= todo.size()) return;
      const std::size_t i = todo[slot_pos];
      const Task& task = tasks[i];
      const std::string source = assemble_program(*task.problem, *task.gen);
      ExecutionResult r = execute_one(source, limits);
      r.problem_id = task.gen->problem_id;
      r.candidate_index = task.gen->candidate_index;
      r.mode = task.gen->mode;
      std::lock_guard<std::mutex> lock(collect_mutex);
      slots[i] = std::move(r);
      filled[i] = 1;
      ++report.executed;
      if (checkpoint.is_open()) {
        checkpoint << result_to_json(slots[i]).dump() << '\n';
        checkpoint.flush();
      }
      ++done;
      if (options.progress) options.progress(done, tasks.size());
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), todo.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<ExecutionResult> results;
  results.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (filled[i]) results.push_back(std::move(slots[i]));
  report.interrupted = results.size() < tasks.size();
  report.matrix = ResultMatrix(std::move(results));
  return report;
}

}  // namespace budgeteval::sandbox
