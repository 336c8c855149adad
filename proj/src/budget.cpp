#include "budgeteval/budget.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "budgeteval/errors.hpp"
#include "json.hpp"

namespace budgeteval::budget {

using nlohmann::json;

const CostEntry& CostModel::at(const std::string& model) const {
  auto it = entries.find(model);
  if (it == entries.end()) throw ValidationError("unknown model \"" + model + "\" in cost model");
  return it->second;
}

void CostModel::validate() const {
  if (entries.empty()) throw ValidationError("cost model has no entries");
  if (!entries.count(reference_model))
    throw ValidationError("reference_model \"" + reference_model + "\" missing from cost model");
  for (const auto& [model, e] : entries) {
    if (!(std::isfinite(e.flops_per_gen) && e.flops_per_gen > 0.0))
      throw ValidationError("cost model: flops_per_gen must be > 0 for \"" + model + "\"");
    if (!(std::isfinite(e.time_per_gen) && e.time_per_gen > 0.0))
      throw ValidationError("cost model: time_per_gen must be > 0 for \"" + model + "\"");
  }
}

CostModel load_cost_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InfraError("cannot open " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError(path.filename().string() + ": invalid JSON");
  if (!doc.is_object() || !doc.contains("models") || !doc["models"].is_object())
    throw ValidationError(path.filename().string() + ": expected {\"models\": {...}, \"reference_model\": ...}");
  CostModel cm;
  for (const auto& [model, entry] : doc["models"].items()) {
    if (!entry.is_object() || !entry.contains("flops_tera") || !entry.contains("time_seconds"))
      throw ValidationError(path.filename().string() + ": model \"" + model +
                            "\" needs flops_tera and time_seconds");
    cm.entries[model] = CostEntry{entry["flops_tera"].get<double>(),
                                  entry["time_seconds"].get<double>()};
  }
  if (!doc.contains("reference_model") || !doc["reference_model"].is_string())
    throw ValidationError(path.filename().string() + ": missing reference_model");
  cm.reference_model = doc["reference_model"].get<std::string>();
  cm.validate();
  return cm;
}

void save_cost_model(const CostModel& cm, const std::filesystem::path& path) {
  json models = json::object();
  for (const auto& [model, e] : cm.entries)
    models[model] = {{"flops_tera", e.flops_per_gen}, {"time_seconds", e.time_per_gen}};
  json doc{{"models", models}, {"reference_model", cm.reference_model}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InfraError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::map<std::string, NormalizedFactors> normalized_factors(const CostModel& cm) {
  cm.validate();
  const CostEntry& ref = cm.at(cm.reference_model);
  std::map<std::string, NormalizedFactors> out;
  for (const auto& [model, e] : cm.entries)
    out[model] = NormalizedFactors{e.flops_per_gen / ref.flops_per_gen,
                                   e.time_per_gen / ref.time_per_gen};
  return out;
}

std::string to_string(BudgetKind k) { return k == BudgetKind::flops ? "flops" : "time"; }
std::string to_string(BudgetUnit u) { return u == BudgetUnit::absolute ? "absolute" : "normalized"; }

namespace {

double per_gen_cost(const CostEntry& e, BudgetKind kind) {
  return kind == BudgetKind::flops ? e.flops_per_gen : e.time_per_gen;
}

}  // namespace

long long max_k_under_budget(const CostModel& cm, const std::string& model, const Budget& b) {
  if (!(std::isfinite(b.value) && b.value > 0.0))
    throw std::domain_error("budget value must be > 0");
  const double cost = per_gen_cost(cm.at(model), b.kind);
  double budget_abs = b.value;
  if (b.unit == BudgetUnit::normalized)
    budget_abs *= per_gen_cost(cm.at(cm.reference_model), b.kind);

  double ratio = budget_abs / cost;
  ratio = std::min(ratio, 1e15);  // keep the cast well-defined for absurd budgets
  long long k = static_cast<long long>(std::floor(ratio));
  // Snap so that k*cost <= budget < (k+1)*cost holds in double arithmetic.
  while (static_cast<double>(k + 1) * cost <= budget_abs) ++k;
  while (k > 0 && static_cast<double>(k) * cost > budget_abs) --k;
  return std::max<long long>(k, 0);
}

namespace {

struct EffectiveK {
  long long k = 0;
  bool clamped = false;
};

EffectiveK effective_k(const CostModel& cm, const std::string& model, const Budget& b,
                       long long cap) {
  EffectiveK out;
  out.k = max_k_under_budget(cm, model, b);
  if (cap > 0 && out.k > cap) {
    out.k = cap;
    out.clamped = true;
  }
  return out;
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("budget grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(std::isfinite(grid[i]) && grid[i] > 0.0))
      throw ValidationError("budget grid values must be positive");
    if (i > 0 && grid[i] <= grid[i - 1])
      throw ValidationError("budget grid must be strictly increasing");
  }
}

}  // namespace

std::optional<estimators::CorpusScore> pass_at_budget(
    const std::map<std::string, estimators::PassCounts>& per_problem, const CostModel& cm,
    const std::string& model, const Budget& b, long long cap) {
  const EffectiveK ek = effective_k(cm, model, b, cap);
  if (ek.k == 0) return std::nullopt;
  return estimators::pass_at_k_corpus(per_problem, static_cast<int>(ek.k));
}

std::optional<estimators::CorpusScore> rank_score_at_budget(
    const std::map<std::string, estimators::RankedPassVector>& per_problem, const CostModel& cm,
    const std::string& model, const Budget& b, long long cap) {
  const EffectiveK ek = effective_k(cm, model, b, cap);
  if (ek.k == 0) return std::nullopt;
  return estimators::rank_score_corpus(per_problem, static_cast<int>(ek.k));
}

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (double v = 1.0; v <= 1024.0; v *= 2.0) grid.push_back(v);
  return grid;
}

namespace {

template <typename Evaluate>
BudgetCurve build_curve(const CostModel& cm, const std::string& model,
                        const std::string& policy_id, BudgetKind kind, BudgetUnit unit,
                        const std::vector<double>& grid, long long cap,
                        std::optional<double> greedy_score, Evaluate&& evaluate) {
  check_grid(grid);
  cm.validate();
  BudgetCurve curve;
  curve.model = model;
  curve.policy = policy_id;
  curve.kind = kind;
  curve.unit = unit;
  for (double value : grid) {
    const Budget b{kind, value, unit};
    const EffectiveK ek = effective_k(cm, model, b, cap);
    if (ek.k == 0) continue;  // below one generation's cost: no point
    estimators::CorpusScore score = evaluate(static_cast<int>(ek.k));
    if (curve.points.empty()) curve.skipped = score.skipped;
    curve.points.push_back(CurvePoint{value, ek.k, score.value, ek.clamped});
  }
  if (greedy_score) {
    const double cost = per_gen_cost(cm.at(model), kind);
    const double ref = per_gen_cost(cm.at(cm.reference_model), kind);
    const double one_gen = unit == BudgetUnit::normalized ? cost / ref : cost;
    curve.greedy_point = GreedyPoint{one_gen, *greedy_score};
  }
  return curve;
}

}  // namespace

BudgetCurve build_pass_curve(const std::map<std::string, estimators::PassCounts>& per_problem,
                             const CostModel& cm, const std::string& model, BudgetKind kind,
                             BudgetUnit unit, const std::vector<double>& grid, long long cap,
                             std::optional<double> greedy_score) {
  return build_curve(cm, model, "unit-test", kind, unit, grid, cap, greedy_score,
                     [&](int k) { return estimators::pass_at_k_corpus(per_problem, k); });
}

BudgetCurve build_rank_curve(
    const std::map<std::string, estimators::RankedPassVector>& per_problem, const CostModel& cm,
    const std::string& model, const std::string& policy_id, BudgetKind kind, BudgetUnit unit,
    const std::vector<double>& grid, long long cap, std::optional<double> greedy_score) {
  return build_curve(cm, model, policy_id, kind, unit, grid, cap, greedy_score,
                     [&](int k) { return estimators::rank_score_corpus(per_problem, k); });
}

void save_curve_csv(const BudgetCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InfraError("cannot write " + path.string());
  out << "# model=" << curve.model << " policy=" << curve.policy
      << " budget_kind=" << to_string(curve.kind) << " unit=" << to_string(curve.unit) << '\n';
  out << "kind,budget,effective_k,score,clamped\n";
  char buf[160];
  for (const CurvePoint& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "point,%.17g,%lld,%.6f,%d\n", p.budget_value, p.effective_k,
                  p.score, p.clamped ? 1 : 0);
    out << buf;
  }
  if (curve.greedy_point) {
    std::snprintf(buf, sizeof(buf), "greedy,%.17g,1,%.6f,0\n", curve.greedy_point->budget_value,
                  curve.greedy_point->score);
    out << buf;
  }
}

}  // namespace budgeteval::budget
