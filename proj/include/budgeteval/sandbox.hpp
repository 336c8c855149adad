#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "budgeteval/corpus.hpp"

namespace budgeteval::sandbox {

/// Resource limits for one candidate execution. The interpreter command is
/// the external program (plus args) the assembled source file is handed to.
struct ExecutionLimits {
  double timeout_seconds = 10.0;
  std::optional<long long> memory_cap_bytes;
  std::vector<std::string> interpreter_command = {"python3"};
};

enum class Verdict { pass, fail_assertion, fail_runtime, fail_timeout, fail_setup };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

/// Outcome of executing one candidate against its full test payload.
/// verdict == pass exactly when the process exited successfully in time.
struct ExecutionResult {
  std::string problem_id;
  int candidate_index = 0;
  corpus::Mode mode = corpus::Mode::sampled;
  Verdict verdict = Verdict::fail_setup;
  double duration_seconds = 0.0;
  std::string stderr_excerpt;
};

/// Builds one self-contained program whose successful exit means the
/// candidate passed every test:
///   function_completion  -> prompt + candidate + test_payload
///   instruction_function -> candidate + test_payload
///   full_program         -> stdin/stdout fixture wrapper around the
///                           candidate when test_payload is a JSON document
///                           {"fixtures": [{"stdin":..., "stdout":...}]},
///                           otherwise candidate + test_payload
/// A small prelude makes uncaught assertion failures print a sentinel so
/// they can be told apart from other crashes.
std::string assemble_program(const corpus::Problem& problem, const corpus::Generation& gen);

/// Runs the source in an isolated subprocess: temp working dir, stdin from
/// /dev/null, environment scrubbed to a small allowlist, whole process
/// group killed at the timeout. Duration is wall-clock. A missing
/// interpreter or spawn failure yields fail_setup. problem_id /
/// candidate_index / mode are left for the caller to stamp.
ExecutionResult execute_one(const std::string& source, const ExecutionLimits& limits);

/// Per-problem verdict counts over sampled generations, with the greedy
/// outcome carried separately.
struct ProblemCounts {
  int n = 0;
  int c = 0;
  std::optional<bool> greedy_pass;
};

/// All execution results, ordered by (problem_id, mode, candidate_index)
/// with sampled entries first. Immutable once built.
class ResultMatrix {
 public:
  ResultMatrix() = default;
  explicit ResultMatrix(std::vector<ExecutionResult> results);

  std::size_t size() const { return results_.size(); }
  const std::vector<ExecutionResult>& results() const { return results_; }

 private:
  std::vector<ExecutionResult> results_;
};

/// (n, c) per problem over sampled generations only; greedy entries are
/// reported via greedy_pass. Enforces 0 <= c <= n.
std::map<std::string, ProblemCounts> summarize(const ResultMatrix& matrix);

struct ExecuteOptions {
  int parallelism = 1;
  /// Append-only JSONL of results. When the file already exists its
  /// entries are reused and only the remaining (problem, candidate) pairs
  /// are executed. Empty path disables checkpointing.
  std::filesystem::path checkpoint_path;
  std::function<void(std::size_t done, std::size_t total)> progress;
  /// When set to true (e.g. from a signal handler), workers stop picking up
  /// new tasks; everything finished so far is already in the checkpoint.
  const std::atomic<bool>* cancel = nullptr;
};

struct ExecuteReport {
  ResultMatrix matrix;        // results available so far (complete unless interrupted)
  std::size_t executed = 0;   // freshly executed this run
  std::size_t reused = 0;     // taken from the checkpoint
  bool interrupted = false;
};

/// Executes every generation (sampled and greedy) exactly once against its
/// problem's tests with a fixed-size worker pool. Verdict content is
/// deterministic regardless of parallelism for deterministic candidates.
ExecuteReport execute_corpus(const corpus::ProblemSet& problems,
                             const corpus::GenerationSet& gens, const ExecutionLimits& limits,
                             const ExecuteOptions& options);

/// Verdict / checkpoint JSONL. `lenient` tolerates a trailing partial line
/// (a checkpoint cut off mid-write).
ResultMatrix load_results(const std::filesystem::path& path, bool lenient = false);
void save_results(const ResultMatrix& matrix, const std::filesystem::path& path);

/// Resolves a command the way the shell would; nullopt when not found.
std::optional<std::string> find_executable(const std::string& command);

}  // namespace budgeteval::sandbox
