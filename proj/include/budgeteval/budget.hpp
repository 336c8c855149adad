#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "budgeteval/estimators.hpp"

namespace budgeteval::budget {

/// Per-generation cost of one model: Tera-FLOPs and wall-clock seconds.
struct CostEntry {
  double flops_per_gen = 0.0;
  double time_per_gen = 0.0;
};

/// Cost table keyed by model id, with a reference model used for
/// normalized budget units. Total cost is linear in the generation count:
/// cost(k) = k * per-generation cost.
struct CostModel {
  std::map<std::string, CostEntry> entries;
  std::string reference_model;

  const CostEntry& at(const std::string& model) const;
  /// reference present, all costs finite and > 0; throws ValidationError.
  void validate() const;
};

/// Loads {"models": {id: {"flops_tera": x, "time_seconds": y}, ...},
///        "reference_model": id} and validates it.
CostModel load_cost_model(const std::filesystem::path& path);
void save_cost_model(const CostModel& cm, const std::filesystem::path& path);

struct NormalizedFactors {
  double flops = 0.0;
  double time = 0.0;
};

/// Each entry's costs divided by the reference model's costs.
std::map<std::string, NormalizedFactors> normalized_factors(const CostModel& cm);

enum class BudgetKind { flops, time };
enum class BudgetUnit { absolute, normalized };

std::string to_string(BudgetKind k);
std::string to_string(BudgetUnit u);

/// A compute allowance: `value` in Tera-FLOPs / seconds when absolute, or in
/// multiples of the reference model's per-generation cost when normalized.
struct Budget {
  BudgetKind kind = BudgetKind::flops;
  double value = 0.0;
  BudgetUnit unit = BudgetUnit::normalized;
};

/// Largest k with k * per_gen_cost <= budget; 0 when even one generation
/// does not fit. The result is snapped so that k*cost <= budget < (k+1)*cost
/// holds exactly in double arithmetic. Unknown model -> ValidationError.
long long max_k_under_budget(const CostModel& cm, const std::string& model, const Budget& b);

/// pass@k / rank-score@k at the largest k affordable under the budget,
/// clamped to `cap` when cap > 0. Returns nullopt when k = 0 (no point is
/// fabricated for an unaffordable budget).
std::optional<estimators::CorpusScore> pass_at_budget(
    const std::map<std::string, estimators::PassCounts>& per_problem, const CostModel& cm,
    const std::string& model, const Budget& b, long long cap);
std::optional<estimators::CorpusScore> rank_score_at_budget(
    const std::map<std::string, estimators::RankedPassVector>& per_problem, const CostModel& cm,
    const std::string& model, const Budget& b, long long cap);

struct CurvePoint {
  double budget_value = 0.0;
  long long effective_k = 0;
  double score = 0.0;   // percent
  bool clamped = false; // affordable k exceeded the cap and was clamped
};

struct GreedyPoint {
  double budget_value = 0.0;
  double score = 0.0;  // percent
};

/// Metric scores along a budget grid for one model and one selection policy
/// ("unit-test" for pass curves, the ranking policy id otherwise).
struct BudgetCurve {
  std::string model;
  std::string policy;
  BudgetKind kind = BudgetKind::flops;
  BudgetUnit unit = BudgetUnit::normalized;
  std::vector<CurvePoint> points;
  std::optional<GreedyPoint> greedy_point;
  std::vector<std::string> skipped;  // problems excluded from the expectation
};

/// Powers of two from 1 to 1024, the default normalized budget grid.
std::vector<double> default_grid();

/// Evaluates the metric at every affordable grid point (grid must be
/// strictly increasing and positive). `greedy_score` (percent), when given,
/// is attached at the model's one-generation budget.
BudgetCurve build_pass_curve(const std::map<std::string, estimators::PassCounts>& per_problem,
                             const CostModel& cm, const std::string& model, BudgetKind kind,
                             BudgetUnit unit, const std::vector<double>& grid, long long cap,
                             std::optional<double> greedy_score);
BudgetCurve build_rank_curve(
    const std::map<std::string, estimators::RankedPassVector>& per_problem, const CostModel& cm,
    const std::string& model, const std::string& policy_id, BudgetKind kind, BudgetUnit unit,
    const std::vector<double>& grid, long long cap, std::optional<double> greedy_score);

/// Plain-text curve dump: one CSV row per point, greedy star included as a
/// row of kind "greedy".
void save_curve_csv(const BudgetCurve& curve, const std::filesystem::path& path);

}  // namespace budgeteval::budget
