#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "budgeteval/budget.hpp"
#include "budgeteval/corpus.hpp"
#include "budgeteval/errors.hpp"
#include "budgeteval/estimators.hpp"
#include "budgeteval/ranking.hpp"
#include "budgeteval/sandbox.hpp"

namespace py = pybind11;
using namespace budgeteval;

namespace {

budget::BudgetKind kind_from_string(const std::string& s) {
  if (s == "flops") return budget::BudgetKind::flops;
  if (s == "time") return budget::BudgetKind::time;
  throw std::domain_error("budget kind must be 'flops' or 'time'");
}

budget::BudgetUnit unit_from_string(const std::string& s) {
  if (s == "absolute") return budget::BudgetUnit::absolute;
  if (s == "normalized") return budget::BudgetUnit::normalized;
  throw std::domain_error("budget unit must be 'absolute' or 'normalized'");
}

std::map<std::string, estimators::PassCounts> counts_from_dict(
    const std::map<std::string, std::pair<int, int>>& per_problem) {
  std::map<std::string, estimators::PassCounts> out;
  for (const auto& [problem_id, nc] : per_problem)
    out.emplace(problem_id, estimators::PassCounts{nc.first, nc.second});
  return out;
}

py::dict curve_to_dict(const budget::BudgetCurve& curve) {
  py::dict out;
  out["model"] = curve.model;
  out["policy"] = curve.policy;
  out["budget_kind"] = budget::to_string(curve.kind);
  out["unit"] = budget::to_string(curve.unit);
  py::list points;
  for (const budget::CurvePoint& p : curve.points) {
    py::dict d;
    d["budget"] = p.budget_value;
    d["effective_k"] = p.effective_k;
    d["score"] = p.score;
    d["clamped"] = p.clamped;
    points.append(d);
  }
  out["points"] = points;
  if (curve.greedy_point) {
    py::dict d;
    d["budget"] = curve.greedy_point->budget_value;
    d["score"] = curve.greedy_point->score;
    out["greedy_point"] = d;
  } else {
    out["greedy_point"] = py::none();
  }
  out["skipped"] = curve.skipped;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Budgeted evaluation of pre-generated code solutions";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InfraError>(m, "InfraError", PyExc_RuntimeError);

  // estimators
  m.def(
      "pass_at_k",
      [](int n, int c, int k) { return estimators::pass_at_k({n, c}, k); },
      py::arg("n"), py::arg("c"), py::arg("k"),
      "Probability that at least one of k drawn candidates (of n, c passing) passes.");
  m.def(
      "rank_score_at_k",
      [](const std::vector<bool>& pass_sorted, int k) {
        return estimators::rank_score_at_k(pass_sorted, k);
      },
      py::arg("pass_sorted"), py::arg("k"),
      "Probability that the best-ranked member of a uniform k-subset passes.");
  m.def(
      "pass_at_k_corpus",
      [](const std::map<std::string, std::pair<int, int>>& per_problem, int k) {
        const auto score = estimators::pass_at_k_corpus(counts_from_dict(per_problem), k);
        return py::make_tuple(score.value, score.skipped);
      },
      py::arg("per_problem"), py::arg("k"),
      "Mean pass@k in percent over {problem_id: (n, c)}; returns (value, skipped).");
  m.def(
      "rank_score_corpus",
      [](const std::map<std::string, std::vector<bool>>& per_problem, int k) {
        std::map<std::string, estimators::RankedPassVector> vecs(per_problem.begin(),
                                                                 per_problem.end());
        const auto score = estimators::rank_score_corpus(vecs, k);
        return py::make_tuple(score.value, score.skipped);
      },
      py::arg("per_problem"), py::arg("k"));
  m.def(
      "oracle_pass_at_k",
      [](int n, int c, int k) { return estimators::oracle_pass_at_k({n, c}, k); },
      py::arg("n"), py::arg("c"), py::arg("k"), "Exact enumeration oracle (n <= 20).");
  m.def(
      "oracle_rank_score",
      [](const std::vector<bool>& pass_sorted, int k) {
        return estimators::oracle_rank_score(pass_sorted, k);
      },
      py::arg("pass_sorted"), py::arg("k"));
  m.def(
      "mc_pass_at_k",
      [](int n, int c, int k, int samples, std::uint64_t seed) {
        const auto est = estimators::mc_pass_at_k({n, c}, k, samples, seed);
        return py::make_tuple(est.value, est.standard_error);
      },
      py::arg("n"), py::arg("c"), py::arg("k"), py::arg("samples"), py::arg("seed"),
      "Monte Carlo oracle; returns (value, standard_error).");
  m.def(
      "mc_rank_score",
      [](const std::vector<bool>& pass_sorted, int k, int samples, std::uint64_t seed) {
        const auto est = estimators::mc_rank_score(pass_sorted, k, samples, seed);
        return py::make_tuple(est.value, est.standard_error);
      },
      py::arg("pass_sorted"), py::arg("k"), py::arg("samples"), py::arg("seed"));

  // ranking
  m.def("nll_from_token_logprobs", &ranking::nll_from_token_logprobs, py::arg("logprobs"),
        "Averaged negative log likelihood of one generation.");

  // budget
  py::class_<budget::CostModel>(m, "CostModel")
      .def(py::init([](const std::map<std::string, std::pair<double, double>>& models,
                       const std::string& reference_model) {
             budget::CostModel cm;
             for (const auto& [model, cost] : models)
               cm.entries[model] = budget::CostEntry{cost.first, cost.second};
             cm.reference_model = reference_model;
             cm.validate();
             return cm;
           }),
           py::arg("models"), py::arg("reference_model"),
           "models: {model_id: (flops_tera, time_seconds)}")
      .def_static("load", &budget::load_cost_model, py::arg("path"))
      .def_readonly("reference_model", &budget::CostModel::reference_model)
      .def("normalized_factors",
           [](const budget::CostModel& cm) {
             std::map<std::string, std::pair<double, double>> out;
             for (const auto& [model, f] : budget::normalized_factors(cm))
               out[model] = {f.flops, f.time};
             return out;
           })
      .def(
          "max_k_under_budget",
          [](const budget::CostModel& cm, const std::string& model, const std::string& kind,
             double value, const std::string& unit) {
            return budget::max_k_under_budget(
                cm, model, budget::Budget{kind_from_string(kind), value, unit_from_string(unit)});
          },
          py::arg("model"), py::arg("kind"), py::arg("value"), py::arg("unit") = "normalized");

  m.def(
      "build_pass_curve",
      [](const std::map<std::string, std::pair<int, int>>& per_problem,
         const budget::CostModel& cm, const std::string& model, const std::string& kind,
         const std::string& unit, const std::vector<double>& grid, long long cap,
         std::optional<double> greedy_score) {
        return curve_to_dict(budget::build_pass_curve(counts_from_dict(per_problem), cm, model,
                                                      kind_from_string(kind),
                                                      unit_from_string(unit), grid, cap,
                                                      greedy_score));
      },
      py::arg("per_problem"), py::arg("cost_model"), py::arg("model"), py::arg("kind") = "flops",
      py::arg("unit") = "normalized", py::arg("grid") = budget::default_grid(),
      py::arg("cap") = 0, py::arg("greedy_score") = std::nullopt);

  m.def("default_grid", &budget::default_grid);

  // sandbox
  m.def(
      "execute_program",
      [](const std::string& source, double timeout,
         const std::vector<std::string>& interpreter) {
        sandbox::ExecutionLimits limits;
        limits.timeout_seconds = timeout;
        limits.interpreter_command = interpreter;
        const sandbox::ExecutionResult r = sandbox::execute_one(source, limits);
        py::dict out;
        out["verdict"] = sandbox::to_string(r.verdict);
        out["duration"] = r.duration_seconds;
        out["stderr_excerpt"] = r.stderr_excerpt;
        return out;
      },
      py::arg("source"), py::arg("timeout") = 10.0,
      py::arg("interpreter") = std::vector<std::string>{"python3"},
      "Run one program in the sandbox and classify the outcome.");
  m.def(
      "assemble_program",
      [](const std::string& benchmark, const std::string& prompt, const std::string& text,
         const std::string& test_payload) {
        corpus::Problem p;
        p.problem_id = "adhoc";
        p.benchmark = corpus::benchmark_from_string(benchmark);
        p.prompt = prompt;
        p.test_payload = test_payload;
        corpus::Generation g;
        g.problem_id = "adhoc";
        g.text = text;
        return sandbox::assemble_program(p, g);
      },
      py::arg("benchmark"), py::arg("prompt"), py::arg("text"), py::arg("test_payload"),
      "Assemble one runnable program from its parts.");

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
