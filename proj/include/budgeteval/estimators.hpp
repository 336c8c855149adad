#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace budgeteval::estimators {

/// Per-problem outcome counts: n executed candidates, c of which passed.
/// Invariant: 0 <= c <= n.
struct PassCounts {
  int n = 0;
  int c = 0;
};

/// Pass flags of one problem's generations; position i holds the correctness
/// of the generation a ranking policy placed at rank i+1 (best first).
using RankedPassVector = std::vector<bool>;

/// Probability that at least one of k candidates drawn uniformly without
/// replacement (out of n, c of which pass) passes.
///
/// Evaluated as 1 - prod_{i=n-c+1}^{n} (1 - k/i), never through raw binomial
/// coefficients, so it stays exact-to-double for n in the thousands. Returns
/// exactly 1 when n - c < k and exactly 0 when c = 0. Throws
/// std::domain_error unless 1 <= k <= n and 0 <= c <= n.
double pass_at_k(const PassCounts& counts, int k);

/// Probability that the best-ranked member of a uniformly drawn k-subset
/// passes, given pass flags sorted by the ranking policy.
///
/// Position weights C(n-i, k-1)/C(n, k) follow the ratio recurrence
/// r_1 = k/n, r_{i+1} = r_i * (n-i-k+1)/(n-i). The score is accumulated as
/// 1 minus the weight mass on failing positions, so an all-pass vector
/// yields exactly 1. Throws std::domain_error on an empty vector or k
/// outside [1, n].
double rank_score_at_k(const RankedPassVector& pass_sorted, int k);

struct CorpusScore {
  double value = 0.0;                 // mean over problems, in percent
  std::vector<std::string> skipped;   // problems with n = 0, excluded from the mean
};

/// Mean pass@k over problems, scaled to percent. Problems with n = 0 are
/// excluded and reported in `skipped`; any other problem with n < k, or a
/// non-uniform n across the included problems, raises ValidationError
/// naming the offenders.
CorpusScore pass_at_k_corpus(const std::map<std::string, PassCounts>& per_problem, int k);

/// Mean rank-score@k over problems, in percent. Problems with n = 0 are
/// skipped; n may vary per problem but every included problem needs n >= k.
CorpusScore rank_score_corpus(const std::map<std::string, RankedPassVector>& per_problem,
                              int k);

/// Exact oracle: enumerates every k-subset and counts the favorable ones.
/// Restricted to n <= 20; throws std::domain_error beyond that.
double oracle_pass_at_k(const PassCounts& counts, int k);
double oracle_rank_score(const RankedPassVector& pass_sorted, int k);

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo oracle: empirical frequency over `samples` uniform k-subsets
/// drawn with a seeded generator. Works for any n.
MonteCarloEstimate mc_pass_at_k(const PassCounts& counts, int k, int samples,
                                std::uint64_t seed);
MonteCarloEstimate mc_rank_score(const RankedPassVector& pass_sorted, int k, int samples,
                                 std::uint64_t seed);

}  // namespace budgeteval::estimators
