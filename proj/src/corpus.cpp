#include "budgeteval/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "budgeteval/errors.hpp"
#include "budgeteval/jsonl.hpp"

namespace budgeteval::corpus {

using jsonl::json;

std::string to_string(Benchmark b) {
  switch (b) {
    case Benchmark::function_completion: return "function_completion";
    case Benchmark::instruction_function: return "instruction_function";
    case Benchmark::full_program: return "full_program";
  }
  return "?";
}

Benchmark benchmark_from_string(const std::string& s) {
  if (s == "function_completion") return Benchmark::function_completion;
  if (s == "instruction_function") return Benchmark::instruction_function;
  if (s == "full_program") return Benchmark::full_program;
  throw ValidationError("unknown benchmark \"" + s + "\"");
}

std::string to_string(Mode m) { return m == Mode::greedy ? "greedy" : "sampled"; }

Mode mode_from_string(const std::string& s) {
  if (s == "sampled") return Mode::sampled;
  if (s == "greedy") return Mode::greedy;
  throw ValidationError("unknown mode \"" + s + "\"");
}

ProblemSet::ProblemSet(std::vector<Problem> problems) : problems_(std::move(problems)) {
  for (std::size_t i = 0; i < problems_.size(); ++i) index_.emplace(problems_[i].problem_id, i);
}

const Problem* ProblemSet::find(const std::string& problem_id) const {
  auto it = index_.find(problem_id);
  return it == index_.end() ? nullptr : &problems_[it->second];
}

GenerationSet::GenerationSet(std::vector<Generation> generations,
                             const std::vector<std::string>& problem_ids)
    : generations_(std::move(generations)) {
  for (const std::string& id : problem_ids) n_per_problem_.emplace(id, 0);
  for (std::size_t i = 0; i < generations_.size(); ++i) {
    const Generation& g = generations_[i];
    by_problem_[g.problem_id].push_back(i);
    if (g.mode == Mode::sampled) ++n_per_problem_[g.problem_id];
    else n_per_problem_.try_emplace(g.problem_id, 0);
  }
}

std::vector<const Generation*> GenerationSet::for_problem(const std::string& problem_id) const {
  std::vector<const Generation*> out;
  auto it = by_problem_.find(problem_id);
  if (it == by_problem_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t i : it->second) out.push_back(&generations_[i]);
  return out;
}

const Generation* GenerationSet::find(const std::string& problem_id, int candidate_index,
                                      Mode mode) const {
  auto it = by_problem_.find(problem_id);
  if (it == by_problem_.end()) return nullptr;
  for (std::size_t i : it->second) {
    const Generation& g = generations_[i];
    if (g.candidate_index == candidate_index && g.mode == mode) return &g;
  }
  return nullptr;
}

Generation* GenerationSet::find(const std::string& problem_id, int candidate_index, Mode mode) {
  return const_cast<Generation*>(
      static_cast<const GenerationSet*>(this)->find(problem_id, candidate_index, mode));
}

namespace {

std::string at_line(const std::filesystem::path& path, std::size_t line_no) {
  return path.filename().string() + ":" + std::to_string(line_no);
}

template <typename T>
T require_field(const json& record, const char* name, const std::string& where) {
  auto it = record.find(name);
  if (it == record.end())
    throw ValidationError(where + ": missing field \"" + name + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field \"" + name + "\" has the wrong type");
  }
}

}  // namespace

ProblemSet load_problems(const std::filesystem::path& path) {
  std::vector<Problem> problems;
  std::map<std::string, std::size_t> first_line;
  jsonl::for_each_record(path, [&](std::size_t line_no, const json& record) {
    const std::string where = at_line(path, line_no);
    Problem p;
    p.problem_id = require_field<std::string>(record, "problem_id", where);
    p.benchmark = benchmark_from_string(require_field<std::string>(record, "benchmark", where));
    p.prompt = require_field<std::string>(record, "prompt", where);
    p.test_payload = require_field<std::string>(record, "test_payload", where);
    if (record.contains("entry_point") && !record["entry_point"].is_null())
      p.entry_point = require_field<std::string>(record, "entry_point", where);
    if (p.problem_id.empty()) throw ValidationError(where + ": empty problem_id");
    if (p.test_payload.empty())
      throw ValidationError(where + ": empty test_payload for \"" + p.problem_id + "\"");
    auto [it, inserted] = first_line.emplace(p.problem_id, line_no);
    if (!inserted)
      throw ValidationError(path.filename().string() + ": duplicate problem_id \"" +
                            p.problem_id + "\" on lines " + std::to_string(it->second) +
                            " and " + std::to_string(line_no));
    problems.push_back(std::move(p));
  });
  return ProblemSet(std::move(problems));
}

void save_problems(const ProblemSet& problems, const std::filesystem::path& path) {
  std::vector<json> records;
  records.reserve(problems.size());
  for (const Problem& p : problems.problems()) {
    json record{{"problem_id", p.problem_id},
                {"benchmark", to_string(p.benchmark)},
                {"prompt", p.prompt},
                {"test_payload", p.test_payload}};
    if (p.entry_point) record["entry_point"] = *p.entry_point;
    records.push_back(std::move(record));
  }
  jsonl::write_records(path, records);
}

GenerationSet load_generations(const std::filesystem::path& path, const ProblemSet& problems) {
  std::vector<Generation> generations;
  std::map<std::tuple<std::string, int, Mode>, std::size_t> seen;  // key -> line
  jsonl::for_each_record(path, [&](std::size_t line_no, const json& record) {
    const std::string where = at_line(path, line_no);
    Generation g;
    g.problem_id = require_field<std::string>(record, "problem_id", where);
    if (!problems.contains(g.problem_id))
      throw ValidationError(where + ": unknown problem_id \"" + g.problem_id + "\"");
    g.candidate_index = require_field<int>(record, "candidate_index", where);
    if (g.candidate_index < 0)
      throw ValidationError(where + ": negative candidate_index");
    g.text = require_field<std::string>(record, "text", where);
    if (record.contains("completed")) g.completed = require_field<bool>(record, "completed", where);
    if (record.contains("mode"))
      g.mode = mode_from_string(require_field<std::string>(record, "mode", where));
    if (record.contains("token_logprobs") && !record["token_logprobs"].is_null()) {
      const json& tl = record["token_logprobs"];
      if (!tl.is_object()) throw ValidationError(where + ": token_logprobs must be an object");
      for (const auto& [model, values] : tl.items()) {
        if (!values.is_array() || values.empty())
          throw ValidationError(where + ": token_logprobs[\"" + model +
                                "\"] must be a non-empty array");
        std::vector<double> lp;
        lp.reserve(values.size());
        for (const json& v : values) {
          if (!v.is_number())
            throw ValidationError(where + ": token_logprobs[\"" + model +
                                  "\"] has a non-numeric entry");
          const double x = v.get<double>();
          if (!std::isfinite(x) || x > 0.0)
            throw ValidationError(where + ": token_logprobs[\"" + model +
                                  "\"] must hold finite values <= 0");
          lp.push_back(x);
        }
        g.token_logprobs.emplace(model, std::move(lp));
      }
    }
    if (record.contains("external_scores") && !record["external_scores"].is_null()) {
      const json& es = record["external_scores"];
      if (!es.is_object()) throw ValidationError(where + ": external_scores must be an object");
      for (const auto& [name, v] : es.items()) {
        if (!v.is_number())
          throw ValidationError(where + ": external_scores[\"" + name + "\"] is not a number");
        g.external_scores.emplace(name, v.get<double>());
      }
    }
    auto key = std::make_tuple(g.problem_id, g.candidate_index, g.mode);
    auto [it, inserted] = seen.emplace(key, line_no);
    if (!inserted)
      throw ValidationError(path.filename().string() + ": duplicate generation (" +
                            g.problem_id + ", " + std::to_string(g.candidate_index) + ", " +
                            to_string(g.mode) + ") on lines " + std::to_string(it->second) +
                            " and " + std::to_string(line_no));
    generations.push_back(std::move(g));
  });

  // Sampled candidate indices must be dense 0..n-1 per problem.
  std::map<std::string, std::set<int>> sampled_indices;
  for (const Generation& g : generations)
    if (g.mode == Mode::sampled) sampled_indices[g.problem_id].insert(g.candidate_index);
  for (const auto& [problem_id, indices] : sampled_indices) {
    const int n = static_cast<int>(indices.size());
    std::vector<int> missing;
    for (int i = 0; i < n; ++i)
      if (!indices.count(i)) missing.push_back(i);
    if (!missing.empty()) {
      std::ostringstream msg;
      msg << path.filename().string() << ": problem \"" << problem_id
          << "\": sampled candidate indices are not dense, missing";
      for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg << ' ' << missing[i];
      if (missing.size() > 10) msg << " ...";
      throw ValidationError(msg.str());
    }
  }

  std::vector<std::string> ids;
  ids.reserve(problems.size());
  for (const Problem& p : problems.problems()) ids.push_back(p.problem_id);
  return GenerationSet(std::move(generations), ids);
}

void save_generations(const GenerationSet& gens, const std::filesystem::path& path) {
  std::vector<json> records;
  records.reserve(gens.size());
  for (const Generation& g : gens.all()) {
    json record{{"problem_id", g.problem_id},
                {"candidate_index", g.candidate_index},
                {"text", g.text},
                {"completed", g.completed},
                {"mode", to_string(g.mode)}};
    if (!g.token_logprobs.empty()) record["token_logprobs"] = g.token_logprobs;
    if (!g.external_scores.empty()) record["external_scores"] = g.external_scores;
    records.push_back(std::move(record));
  }
  jsonl::write_records(path, records);
}

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
  std::vector<ScoreRecord> records;
  jsonl::for_each_record(path, [&](std::size_t line_no, const json& record) {
    const std::string where = at_line(path, line_no);
    ScoreRecord r;
    r.problem_id = require_field<std::string>(record, "problem_id", where);
    r.candidate_index = require_field<int>(record, "candidate_index", where);
    r.mode = record.contains("mode")
                 ? mode_from_string(require_field<std::string>(record, "mode", where))
                 : Mode::sampled;
    r.score = require_field<double>(record, "score", where);
    if (!std::isfinite(r.score)) throw ValidationError(where + ": score is not finite");
    records.push_back(std::move(r));
  });
  return records;
}

void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const ScoreRecord& r : records)
    out.push_back(json{{"problem_id", r.problem_id},
                       {"candidate_index", r.candidate_index},
                       {"mode", to_string(r.mode)},
                       {"score", r.score}});
  jsonl::write_records(path, out);
}

GenerationSet attach_scores(GenerationSet gens, const std::filesystem::path& sidecar,
                            const std::string& score_name) {
  const std::vector<ScoreRecord> records = load_scores(sidecar);
  std::set<std::tuple<std::string, int, Mode>> seen;
  for (const ScoreRecord& r : records) {
    if (!seen.emplace(r.problem_id, r.candidate_index, r.mode).second)
      throw ValidationError(sidecar.filename().string() + ": duplicate address (" +
                            r.problem_id + ", " + std::to_string(r.candidate_index) + ", " +
                            to_string(r.mode) + ")");
    Generation* g = gens.find(r.problem_id, r.candidate_index, r.mode);
    if (g == nullptr)
      throw ValidationError(sidecar.filename().string() + ": address (" + r.problem_id + ", " +
                            std::to_string(r.candidate_index) + ", " + to_string(r.mode) +
                            ") matches no generation");
    g->external_scores[score_name] = r.score;
  }
  return gens;
}

GenerationSet filter_complete(const GenerationSet& gens) {
  std::vector<Generation> kept;
  kept.reserve(gens.size());
  for (const Generation& g : gens.all())
    if (g.completed) kept.push_back(g);
  std::vector<std::string> ids;
  for (const auto& [id, n] : gens.n_per_problem()) ids.push_back(id);
  return GenerationSet(std::move(kept), ids);
}

}  // namespace budgeteval::corpus
