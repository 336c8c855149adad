#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace budgeteval::corpus {

/// How a problem's prompt, the candidate text, and the test payload combine
/// into a runnable program.
enum class Benchmark { function_completion, instruction_function, full_program };

std::string to_string(Benchmark b);
Benchmark benchmark_from_string(const std::string& s);

/// One benchmark task. `test_payload` is executable test code (assert
/// statements or a scaffold), or, for full_program tasks, a JSON document of
/// stdin/expected-stdout fixtures.
struct Problem {
  std::string problem_id;
  Benchmark benchmark = Benchmark::function_completion;
  std::string prompt;
  std::string test_payload;
  std::optional<std::string> entry_point;
};

class ProblemSet {
 public:
  ProblemSet() = default;
  explicit ProblemSet(std::vector<Problem> problems);

  std::size_t size() const { return problems_.size(); }
  const std::vector<Problem>& problems() const { return problems_; }
  const Problem* find(const std::string& problem_id) const;
  bool contains(const std::string& problem_id) const { return find(problem_id) != nullptr; }

 private:
  std::vector<Problem> problems_;                  // input order preserved
  std::map<std::string, std::size_t> index_;
};

enum class Mode { sampled, greedy };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// One candidate solution. `completed` records whether generation produced
/// an end-of-sequence before the token cap; it comes from the data, never
/// from token counting here. `token_logprobs` maps a scoring-model id to the
/// per-token log-probabilities of the generated tokens (prompt excluded).
struct Generation {
  std::string problem_id;
  int candidate_index = 0;
  std::string text;
  bool completed = true;
  Mode mode = Mode::sampled;
  std::map<std::string, std::vector<double>> token_logprobs;
  std::map<std::string, double> external_scores;
};

class GenerationSet {
 public:
  GenerationSet() = default;

  /// Builds the per-problem index and sampled counts. `problem_ids` seeds
  /// n_per_problem with zeros so problems without generations stay visible.
  explicit GenerationSet(std::vector<Generation> generations,
                         const std::vector<std::string>& problem_ids = {});

  std::size_t size() const { return generations_.size(); }
  const std::vector<Generation>& all() const { return generations_; }
  std::vector<Generation>& all() { return generations_; }

  /// Generations of one problem in load order (sampled and greedy).
  std::vector<const Generation*> for_problem(const std::string& problem_id) const;

  const Generation* find(const std::string& problem_id, int candidate_index, Mode mode) const;
  Generation* find(const std::string& problem_id, int candidate_index, Mode mode);

  /// Count of sampled generations per problem. Contains a zero entry for
  /// every problem known at construction time that has no generations.
  const std::map<std::string, int>& n_per_problem() const { return n_per_problem_; }

 private:
  std::vector<Generation> generations_;
  std::map<std::string, std::vector<std::size_t>> by_problem_;
  std::map<std::string, int> n_per_problem_;
};

/// One sidecar line addressing a generation with a score.
struct ScoreRecord {
  std::string problem_id;
  int candidate_index = 0;
  Mode mode = Mode::sampled;
  double score = 0.0;
};

/// Loads problems from a JSONL file, one object per line, field names as in
/// Problem. Preserves input order. Throws ParseError on malformed lines and
/// ValidationError on duplicate ids (citing both lines) or empty payloads.
ProblemSet load_problems(const std::filesystem::path& path);
void save_problems(const ProblemSet& problems, const std::filesystem::path& path);

/// Loads generations, validating every record against `problems`: known
/// problem_id, unique (problem_id, candidate_index, mode), sampled indices
/// dense 0..n-1, token_logprobs finite and <= 0.
GenerationSet load_generations(const std::filesystem::path& path, const ProblemSet& problems);
void save_generations(const GenerationSet& gens, const std::filesystem::path& path);

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path);
void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);

/// Returns a set where every generation addressed by the sidecar carries
/// external_scores[score_name]. Unaddressed generations pass through
/// unchanged; an address that misses or repeats is an error.
GenerationSet attach_scores(GenerationSet gens, const std::filesystem::path& sidecar,
                            const std::string& score_name);

/// Keeps only generations with completed = true. Per-problem counts are
/// recomputed; candidate indices are not renumbered. Idempotent.
GenerationSet filter_complete(const GenerationSet& gens);

}  // namespace budgeteval::corpus
