// budgeteval: scores sets of pre-generated code solutions under fixed
// compute budgets. Subcommands: execute, score, curve, rank-curve, validate.

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "budgeteval/budget.hpp"
#include "budgeteval/corpus.hpp"
#include "budgeteval/errors.hpp"
#include "budgeteval/estimators.hpp"
#include "budgeteval/jsonl.hpp"
#include "budgeteval/ranking.hpp"
#include "budgeteval/sandbox.hpp"

namespace fs = std::filesystem;
using namespace budgeteval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInfra = 2;

std::atomic<bool> g_cancel{false};

void handle_signal(int) { g_cancel.store(true); }

void install_signal_handlers() {
  struct sigaction sa{};
  sa.sa_handler = handle_signal;
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

struct RunConfig {
  fs::path problems;
  fs::path generations;
  fs::path cost_model;
  fs::path out_dir;
  std::vector<std::string> verdict_specs;   // LABEL=PATH (or bare PATH)
  std::vector<std::string> score_specs;     // NAME=PATH sidecars
  std::string interpreter = "python3";
  double timeout = 10.0;
  int parallelism = 0;                      // 0 = hardware concurrency
  std::vector<int> k_list;
  std::vector<double> grid;
  std::string budget_kind = "flops";
  std::string budget_unit = "normalized";
  std::string policy = "index";
  std::uint64_t seed = 0;
  bool no_cap = false;
  long long cap_override = 0;
};

std::pair<std::string, fs::path> split_labeled_path(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos) {
    fs::path p(spec);
    return {p.stem().string(), p};
  }
  return {spec.substr(0, eq), fs::path(spec.substr(eq + 1))};
}

sandbox::ExecutionLimits make_limits(const RunConfig& cfg) {
  sandbox::ExecutionLimits limits;
  limits.timeout_seconds = cfg.timeout;
  std::istringstream in(cfg.interpreter);
  limits.interpreter_command.clear();
  std::string word;
  while (in >> word) limits.interpreter_command.push_back(word);
  if (limits.interpreter_command.empty())
    throw ValidationError("--interpreter must name a command");
  return limits;
}

int effective_parallelism(const RunConfig& cfg) {
  if (cfg.parallelism > 0) return cfg.parallelism;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

budget::BudgetKind parse_kind(const std::string& s) {
  if (s == "flops") return budget::BudgetKind::flops;
  if (s == "time") return budget::BudgetKind::time;
  throw ValidationError("--budget-kind must be flops or time");
}

budget::BudgetUnit parse_unit(const std::string& s) {
  if (s == "absolute") return budget::BudgetUnit::absolute;
  if (s == "normalized") return budget::BudgetUnit::normalized;
  throw ValidationError("--budget-unit must be absolute or normalized");
}

std::string sanitize_for_filename(std::string s) {
  for (char& c : s)
    if (c == ':' || c == '/' || c == ' ') c = '-';
  return s;
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

void warn_skipped(const std::vector<std::string>& skipped) {
  if (skipped.empty()) return;
  std::cerr << "warning: " << skipped.size()
            << " problem(s) without usable generations were skipped:";
  for (std::size_t i = 0; i < skipped.size() && i < 8; ++i) std::cerr << ' ' << skipped[i];
  if (skipped.size() > 8) std::cerr << " ...";
  std::cerr << '\n';
}

// --- execute ---------------------------------------------------------------

int cmd_execute(const RunConfig& cfg) {
  const corpus::ProblemSet problems = corpus::load_problems(cfg.problems);
  const corpus::GenerationSet gens = corpus::load_generations(cfg.generations, problems);

  sandbox::ExecutionLimits limits = make_limits(cfg);
  if (!sandbox::find_executable(limits.interpreter_command.front()))
    throw InfraError("fail_setup: interpreter not found: " + limits.interpreter_command.front());

  fs::create_directories(cfg.out_dir);
  sandbox::ExecuteOptions options;
  options.parallelism = effective_parallelism(cfg);
  options.checkpoint_path = cfg.out_dir / "checkpoint.jsonl";
  options.cancel = &g_cancel;
  std::size_t last_percent = 101;
  options.progress = [&](std::size_t done, std::size_t total) {
    const std::size_t percent = total == 0 ? 100 : done * 100 / total;
    if (percent != last_percent) {
      last_percent = percent;
      std::cerr << "\rexecuting: " << done << "/" << total << " (" << percent << "%)"
                << std::flush;
    }
  };
  install_signal_handlers();

  const sandbox::ExecuteReport report = sandbox::execute_corpus(problems, gens, limits, options);
  std::cerr << '\n';
  std::cerr << "executed " << report.executed << " candidate(s), reused " << report.reused
            << " from checkpoint\n";
  if (report.interrupted) {
    std::cerr << "interrupted; partial results remain in " << options.checkpoint_path
              << " and the run can be resumed\n";
    return kExitInfra;
  }

  sandbox::save_results(report.matrix, cfg.out_dir / "verdicts.jsonl");

  const auto counts = sandbox::summarize(report.matrix);
  std::vector<nlohmann::json> summary;
  for (const auto& [problem_id, pc] : counts) {
    nlohmann::json record{{"problem_id", problem_id}, {"n", pc.n}, {"c", pc.c}};
    if (pc.greedy_pass) record["greedy_pass"] = *pc.greedy_pass;
    summary.push_back(std::move(record));
  }
  jsonl::write_records(cfg.out_dir / "summary.jsonl", summary);
  std::cout << "wrote " << (cfg.out_dir / "verdicts.jsonl").string() << " ("
            << report.matrix.size() << " verdicts)\n";
  return kExitOk;
}

// --- score -----------------------------------------------------------------

struct ScoreRow {
  std::string label;
  std::map<int, std::optional<double>> by_k;  // nullopt -> not available at this n
  std::optional<double> greedy;
  std::vector<std::string> skipped;
};

std::map<std::string, estimators::PassCounts> to_pass_counts(
    const std::map<std::string, sandbox::ProblemCounts>& counts) {
  std::map<std::string, estimators::PassCounts> out;
  for (const auto& [problem_id, pc] : counts)
    out.emplace(problem_id, estimators::PassCounts{pc.n, pc.c});
  return out;
}

std::optional<double> greedy_pass_rate(const std::map<std::string, sandbox::ProblemCounts>& counts) {
  std::size_t with_greedy = 0;
  std::size_t passed = 0;
  for (const auto& [problem_id, pc] : counts) {
    if (pc.greedy_pass) {
      ++with_greedy;
      if (*pc.greedy_pass) ++passed;
    }
  }
  if (with_greedy == 0) return std::nullopt;
  return 100.0 * static_cast<double>(passed) / static_cast<double>(with_greedy);
}

long long uniform_n(const std::map<std::string, estimators::PassCounts>& counts) {
  long long n = -1;
  for (const auto& [problem_id, pc] : counts) {
    if (pc.n == 0) continue;
    if (n < 0) n = pc.n;
    else if (pc.n != n) return -1;
  }
  return n;
}

const std::vector<int> kDefaultKList = {1, 2, 4, 16, 64, 128, 256, 500, 1000};

int cmd_score(const RunConfig& cfg) {
  if (cfg.verdict_specs.empty()) throw ValidationError("score needs at least one --verdicts");
  fs::create_directories(cfg.out_dir);

  const bool explicit_k = !cfg.k_list.empty();
  std::vector<ScoreRow> rows;
  std::vector<int> all_k = explicit_k ? cfg.k_list : kDefaultKList;
  std::sort(all_k.begin(), all_k.end());
  all_k.erase(std::unique(all_k.begin(), all_k.end()), all_k.end());
  if (!all_k.empty() && all_k.front() < 1) throw ValidationError("--k values must be >= 1");

  for (const std::string& spec : cfg.verdict_specs) {
    auto [label, path] = split_labeled_path(spec);
    const sandbox::ResultMatrix matrix = sandbox::load_results(path);
    const auto counts = to_pass_counts(sandbox::summarize(matrix));
    const long long n = uniform_n(counts);
    if (n < 0) throw ValidationError(label + ": pass@k needs a uniform n across problems");
    if (n == 0) throw ValidationError(label + ": no sampled generations");
    const long long cap = cfg.no_cap ? n : std::max<long long>(1, n / 2);

    ScoreRow row;
    row.label = label;
    row.greedy = greedy_pass_rate(sandbox::summarize(matrix));
    for (int k : all_k) {
      if (k > n) {
        if (explicit_k)
          throw ValidationError(label + ": k=" + std::to_string(k) + " exceeds n=" +
                                std::to_string(n));
        row.by_k[k] = std::nullopt;
        continue;
      }
      if (k > cap) {
        if (explicit_k)
          throw ValidationError(label + ": k=" + std::to_string(k) + " exceeds the cap n/2=" +
                                std::to_string(n / 2) + " (use --no-cap to override)");
        row.by_k[k] = std::nullopt;
        continue;
      }
      const estimators::CorpusScore score = estimators::pass_at_k_corpus(counts, k);
      row.by_k[k] = score.value;
      row.skipped = score.skipped;
    }
    warn_skipped(row.skipped);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(),
            [](const ScoreRow& a, const ScoreRow& b) { return a.label < b.label; });

  const bool any_greedy =
      std::any_of(rows.begin(), rows.end(), [](const ScoreRow& r) { return r.greedy.has_value(); });

  // CSV
  {
    std::ofstream csv(cfg.out_dir / "pass_at_k.csv", std::ios::trunc);
    csv << "model";
    for (int k : all_k) csv << ",pass@" << k;
    if (any_greedy) csv << ",greedy@1";
    csv << '\n';
    for (const ScoreRow& row : rows) {
      csv << row.label;
      for (int k : all_k) {
        const auto& v = row.by_k.at(k);
        csv << ',' << (v ? format_score(*v) : "--.-");
      }
      if (any_greedy) csv << ',' << (row.greedy ? format_score(*row.greedy) : "--.-");
      csv << '\n';
    }
  }

  // Aligned text
  std::ostringstream table;
  {
    std::size_t label_width = 5;
    for (const ScoreRow& row : rows) label_width = std::max(label_width, row.label.size());
    table << std::left;
    table.width(static_cast<std::streamsize>(label_width + 2));
    table << "model";
    for (int k : all_k) {
      std::string head = "k=" + std::to_string(k);
      table << std::right;
      table.width(8);
      table << head;
    }
    if (any_greedy) {
      table << std::right;
      table.width(8);
      table << "greedy";
    }
    table << '\n';
    for (const ScoreRow& row : rows) {
      table << std::left;
      table.width(static_cast<std::streamsize>(label_width + 2));
      table << row.label;
      for (int k : all_k) {
        const auto& v = row.by_k.at(k);
        table << std::right;
        table.width(8);
        table << (v ? format_score(*v) : "--.-");
      }
      if (any_greedy) {
        table << std::right;
        table.width(8);
        table << (row.greedy ? format_score(*row.greedy) : "--.-");
      }
      table << '\n';
    }
  }
  {
    std::ofstream txt(cfg.out_dir / "pass_at_k.txt", std::ios::trunc);
    txt << table.str();
  }
  std::cout << table.str();
  return kExitOk;
}

// --- curve / rank-curve ------------------------------------------------------

std::vector<double> curve_grid(const RunConfig& cfg) {
  if (cfg.grid.empty()) return budget::default_grid();
  return cfg.grid;
}

long long curve_cap(const RunConfig& cfg, long long min_n) {
  if (cfg.no_cap) return min_n;
  if (cfg.cap_override > 0) return std::min<long long>(cfg.cap_override, min_n);
  return std::max<long long>(1, min_n / 2);
}

void write_axes_note(const RunConfig& cfg, const fs::path& dir) {
  std::ofstream axes(dir / "axes.txt", std::ios::trunc);
  axes << "x: budget (" << cfg.budget_kind << ", " << cfg.budget_unit
       << " units), exponential scale recommended\n"
       << "y: score (percent of problems solved)\n"
       << "greedy rows: single greedy decode plotted at the model's one-generation budget\n";
}

int cmd_curve(const RunConfig& cfg) {
  if (cfg.verdict_specs.empty()) throw ValidationError("curve needs at least one --verdicts MODEL=PATH");
  const budget::CostModel cm = budget::load_cost_model(cfg.cost_model);
  const budget::BudgetKind kind = parse_kind(cfg.budget_kind);
  const budget::BudgetUnit unit = parse_unit(cfg.budget_unit);
  const std::vector<double> grid = curve_grid(cfg);
  fs::create_directories(cfg.out_dir);

  for (const std::string& spec : cfg.verdict_specs) {
    auto [model, path] = split_labeled_path(spec);
    const sandbox::ResultMatrix matrix = sandbox::load_results(path);
    const auto summary = sandbox::summarize(matrix);
    const auto counts = to_pass_counts(summary);
    const long long n = uniform_n(counts);
    if (n <= 0) throw ValidationError(model + ": pass curves need a uniform n >= 1");
    const budget::BudgetCurve curve =
        budget::build_pass_curve(counts, cm, model, kind, unit, grid, curve_cap(cfg, n),
                                 greedy_pass_rate(summary));
    warn_skipped(curve.skipped);
    const fs::path out = cfg.out_dir / ("curve_" + sanitize_for_filename(model) +
                                        "_unit-test_" + cfg.budget_kind + ".csv");
    budget::save_curve_csv(curve, out);
    std::cout << "wrote " << out.string() << " (" << curve.points.size() << " points)\n";
  }
  write_axes_note(cfg, cfg.out_dir);
  return kExitOk;
}

int cmd_rank_curve(const RunConfig& cfg) {
  if (cfg.verdict_specs.size() != 1)
    throw ValidationError("rank-curve needs exactly one --verdicts MODEL=PATH");
  const corpus::ProblemSet problems = corpus::load_problems(cfg.problems);
  corpus::GenerationSet gens = corpus::load_generations(cfg.generations, problems);
  for (const std::string& spec : cfg.score_specs) {
    auto [name, path] = split_labeled_path(spec);
    gens = corpus::attach_scores(std::move(gens), path, name);
  }

  ranking::RankingPolicy policy = ranking::RankingPolicy::parse(cfg.policy);
  if (policy.kind == ranking::PolicyKind::random && cfg.seed != 0) policy.seed = cfg.seed;

  const budget::CostModel cm = budget::load_cost_model(cfg.cost_model);
  const budget::BudgetKind kind = parse_kind(cfg.budget_kind);
  const budget::BudgetUnit unit = parse_unit(cfg.budget_unit);
  const std::vector<double> grid = curve_grid(cfg);

  auto [model, verdict_path] = split_labeled_path(cfg.verdict_specs.front());
  const sandbox::ResultMatrix matrix = sandbox::load_results(verdict_path);
  const auto vectors = ranking::build_ranked_vectors(policy, gens, matrix);

  long long min_n = 0;
  for (const auto& [problem_id, vec] : vectors) {
    if (vec.empty()) continue;
    const long long n = static_cast<long long>(vec.size());
    min_n = min_n == 0 ? n : std::min(min_n, n);
  }
  if (min_n == 0) throw ValidationError("no problem has completed generations to rank");

  fs::create_directories(cfg.out_dir);
  const budget::BudgetCurve curve = budget::build_rank_curve(
      vectors, cm, model, policy.id, kind, unit, grid, curve_cap(cfg, min_n),
      greedy_pass_rate(sandbox::summarize(matrix)));
  warn_skipped(curve.skipped);
  const fs::path out =
      cfg.out_dir / ("curve_" + sanitize_for_filename(model) + "_" +
                     sanitize_for_filename(policy.id) + "_" + cfg.budget_kind + ".csv");
  budget::save_curve_csv(curve, out);
  write_axes_note(cfg, cfg.out_dir);
  std::cout << "wrote " << out.string() << " (" << curve.points.size() << " points)\n";
  return kExitOk;
}

// --- validate ----------------------------------------------------------------

struct CheckReport {
  bool ok = true;
  void check(const std::string& name, const std::function<void()>& body) {
    try {
      body();
      std::cout << "[ok]   " << name << '\n';
    } catch (const std::exception& e) {
      ok = false;
      std::cout << "[FAIL] " << name << ": " << e.what() << '\n';
    }
  }
};

void estimator_self_test() {
  std::mt19937_64 rng(271828);
  double max_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const int c = static_cast<int>(rng() % (n + 1));
    const int k = 1 + static_cast<int>(rng() % n);
    const estimators::PassCounts counts{n, c};
    max_err = std::max(max_err, std::abs(estimators::pass_at_k(counts, k) -
                                         estimators::oracle_pass_at_k(counts, k)));
    estimators::RankedPassVector v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = rng() % 2 == 0;
    max_err = std::max(max_err, std::abs(estimators::rank_score_at_k(v, k) -
                                         estimators::oracle_rank_score(v, k)));
  }
  if (max_err > 1e-12) {
    std::ostringstream msg;
    msg << "estimator disagrees with enumeration, max |err| = " << max_err;
    throw ValidationError(msg.str());
  }
}

int cmd_validate(const RunConfig& cfg) {
  CheckReport report;
  std::optional<corpus::ProblemSet> problems;
  if (!cfg.problems.empty())
    report.check("problems load and validate (" + cfg.problems.string() + ")",
                 [&]() { problems = corpus::load_problems(cfg.problems); });
  if (!cfg.generations.empty())
    report.check("generations load and validate (" + cfg.generations.string() + ")", [&]() {
      if (!problems) throw ValidationError("--generations needs --problems");
      corpus::load_generations(cfg.generations, *problems);
    });
  if (!cfg.cost_model.empty())
    report.check("cost model sanity (" + cfg.cost_model.string() + ")",
                 [&]() { budget::load_cost_model(cfg.cost_model); });
  report.check("estimator self-test (200 random instances vs enumeration)",
               estimator_self_test);
  std::cout << (report.ok ? "all checks passed\n" : "validation failed\n");
  return report.ok ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted evaluation of pre-generated code solutions"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_budget_flags = [&](CLI::App* cmd) {
    cmd->add_option("--cost-model", cfg.cost_model, "cost model JSON")->required();
    cmd->add_option("--budget-kind", cfg.budget_kind, "flops or time (default flops)");
    cmd->add_option("--budget-unit", cfg.budget_unit,
                    "normalized (reference-model generations) or absolute");
    cmd->add_option("--grid", cfg.grid,
                    "budget grid values (default: powers of two 1..1024)")
        ->delimiter(',');
    cmd->add_option("--cap", cfg.cap_override, "clamp k to this value instead of n/2");
    cmd->add_flag("--no-cap", cfg.no_cap, "lift the n/2 cap on k");
  };

  CLI::App* execute = app.add_subcommand("execute", "run candidates against unit tests");
  execute->add_option("--problems", cfg.problems, "problems JSONL")->required();
  execute->add_option("--generations", cfg.generations, "generations JSONL")->required();
  execute->add_option("--out", cfg.out_dir, "output directory")->required();
  execute->add_option("--parallelism", cfg.parallelism, "worker count (default: cores)");
  execute->add_option("--timeout", cfg.timeout, "per-candidate timeout seconds (default 10)");
  execute->add_option("--interpreter", cfg.interpreter,
                      "interpreter command (default python3)");

  CLI::App* score = app.add_subcommand("score", "pass@k tables from verdict files");
  score->add_option("--verdicts", cfg.verdict_specs, "LABEL=verdicts.jsonl (repeatable)")
      ->required();
  score->add_option("--k", cfg.k_list, "k values")->delimiter(',');
  score->add_flag("--no-cap", cfg.no_cap, "allow k beyond n/2");
  score->add_option("--out", cfg.out_dir, "output directory")->required();

  CLI::App* curve = app.add_subcommand("curve", "unit-test-policy budget curves");
  curve->add_option("--verdicts", cfg.verdict_specs, "MODEL=verdicts.jsonl (repeatable)")
      ->required();
  curve->add_option("--out", cfg.out_dir, "output directory")->required();
  add_budget_flags(curve);

  CLI::App* rank_curve = app.add_subcommand("rank-curve", "ranking-policy budget curves");
  rank_curve->add_option("--problems", cfg.problems, "problems JSONL")->required();
  rank_curve->add_option("--generations", cfg.generations, "generations JSONL")->required();
  rank_curve->add_option("--verdicts", cfg.verdict_specs, "MODEL=verdicts.jsonl")->required();
  rank_curve->add_option("--scores", cfg.score_specs, "NAME=sidecar.jsonl (repeatable)");
  rank_curve->add_option("--policy", cfg.policy,
                         "nll:<source> | external:<name>[:asc|desc] | oracle | anti-oracle | "
                         "random[:seed] | index");
  rank_curve->add_option("--seed", cfg.seed, "seed for the random policy");
  rank_curve->add_option("--out", cfg.out_dir, "output directory")->required();
  add_budget_flags(rank_curve);

  CLI::App* validate = app.add_subcommand("validate", "input and estimator sanity checks");
  validate->add_option("--problems", cfg.problems, "problems JSONL");
  validate->add_option("--generations", cfg.generations, "generations JSONL");
  validate->add_option("--cost-model", cfg.cost_model, "cost model JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(execute)) return cmd_execute(cfg);
    if (app.got_subcommand(score)) return cmd_score(cfg);
    if (app.got_subcommand(curve)) return cmd_curve(cfg);
    if (app.got_subcommand(rank_curve)) return cmd_rank_curve(cfg);
    if (app.got_subcommand(validate)) return cmd_validate(cfg);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInfra;
  }
  return kExitOk;
}
