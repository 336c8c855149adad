#include "budgeteval/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "budgeteval/errors.hpp"

namespace budgeteval::estimators {

namespace {

void check_counts(const PassCounts& counts) {
  if (counts.n < 1) throw std::domain_error("pass counts need n >= 1");
  if (counts.c < 0 || counts.c > counts.n)
    throw std::domain_error("pass counts need 0 <= c <= n, got c=" +
                            std::to_string(counts.c) + " n=" + std::to_string(counts.n));
}

void check_k(int k, int n) {
  if (k < 1 || k > n)
    throw std::domain_error("k must be in [1, n], got k=" + std::to_string(k) +
                            " n=" + std::to_string(n));
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size() && i < 10; ++i) {
    if (i) out << ", ";
    out << ids[i];
  }
  if (ids.size() > 10) out << ", ... (" << ids.size() << " total)";
  return out.str();
}

}  // namespace

double pass_at_k(const PassCounts& counts, int k) {
  check_counts(counts);
  check_k(k, counts.n);
  const int n = counts.n;
  const int c = counts.c;
  if (n - c < k) return 1.0;  // every k-subset contains a pass
  double miss = 1.0;          // probability that a k-subset avoids all passes
  for (int i = n - c + 1; i <= n; ++i) {
    miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  }
  return 1.0 - miss;
}

double rank_score_at_k(const RankedPassVector& pass_sorted, int k) {
  const int n = static_cast<int>(pass_sorted.size());
  if (n == 0) throw std::domain_error("rank_score_at_k on an empty pass vector");
  check_k(k, n);
  // Positions beyond n-k+1 can never be the top of a k-subset; the weights
  // of positions 1..n-k+1 sum to 1, so accumulating the failing mass keeps
  // the all-pass case exactly 1.
  const int last = n - k + 1;
  double weight = static_cast<double>(k) / static_cast<double>(n);
  double fail_mass = 0.0;
  for (int i = 1; i <= last; ++i) {
    if (!pass_sorted[static_cast<std::size_t>(i - 1)]) fail_mass += weight;
    if (i < last) {
      weight *= static_cast<double>(n - i - k + 1) / static_cast<double>(n - i);
    }
  }
  return std::clamp(1.0 - fail_mass, 0.0, 1.0);
}

CorpusScore pass_at_k_corpus(const std::map<std::string, PassCounts>& per_problem, int k) {
  if (k < 1) throw std::domain_error("k must be >= 1");
  CorpusScore out;
  std::vector<std::string> offenders;
  int uniform_n = -1;
  bool mixed_n = false;
  double sum = 0.0;
  std::size_t included = 0;
  for (const auto& [problem_id, counts] : per_problem) {
    if (counts.n == 0) {
      out.skipped.push_back(problem_id);
      continue;
    }
    if (counts.n < k) {
      offenders.push_back(problem_id + " (n=" + std::to_string(counts.n) + ")");
      continue;
    }
    if (uniform_n < 0) {
      uniform_n = counts.n;
    } else if (counts.n != uniform_n) {
      mixed_n = true;
    }
    sum += pass_at_k(counts, k);
    ++included;
  }
  if (!offenders.empty())
    throw ValidationError("pass@k with k=" + std::to_string(k) +
                          " needs n >= k for every problem; offenders: " + join_ids(offenders));
  if (mixed_n)
    throw ValidationError("pass@k needs a uniform n across problems; found differing counts");
  if (included == 0) throw ValidationError("pass@k over a corpus with no generations");
  out.value = 100.0 * sum / static_cast<double>(included);
  return out;
}

CorpusScore rank_score_corpus(const std::map<std::string, RankedPassVector>& per_problem,
                              int k) {
  if (k < 1) throw std::domain_error("k must be >= 1");
  CorpusScore out;
  std::vector<std::string> offenders;
  double sum = 0.0;
  std::size_t included = 0;
  for (const auto& [problem_id, vec] : per_problem) {
    if (vec.empty()) {
      out.skipped.push_back(problem_id);
      continue;
    }
    if (static_cast<int>(vec.size()) < k) {
      offenders.push_back(problem_id + " (n=" + std::to_string(vec.size()) + ")");
      continue;
    }
    sum += rank_score_at_k(vec, k);
    ++included;
  }
  if (!offenders.empty())
    throw ValidationError("rank-score@k with k=" + std::to_string(k) +
                          " needs n >= k for every problem; offenders: " + join_ids(offenders));
  if (included == 0) throw ValidationError("rank-score@k over a corpus with no generations");
  out.value = 100.0 * sum / static_cast<double>(included);
  return out;
}

namespace {

constexpr int kMaxEnumerationN = 20;

// Walks every k-subset of {0,...,n-1} in lexicographic order and calls
// visit with the selected indices (ascending).
template <typename Visit>
void for_each_subset(int n, int k, Visit&& visit) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    visit(idx);
    int pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < k; ++j)
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

void check_enumerable(int n) {
  if (n > kMaxEnumerationN)
    throw std::domain_error("exact oracle enumeration is limited to n <= " +
                            std::to_string(kMaxEnumerationN) + ", got n=" + std::to_string(n));
}

}  // namespace

double oracle_pass_at_k(const PassCounts& counts, int k) {
  check_counts(counts);
  check_k(k, counts.n);
  check_enumerable(counts.n);
  long long total = 0;
  long long favorable = 0;
  for_each_subset(counts.n, k, [&](const std::vector<int>& idx) {
    ++total;
    for (int i : idx) {
      if (i < counts.c) {
        ++favorable;
        break;
      }
    }
  });
  return static_cast<double>(favorable) / static_cast<double>(total);
}

double oracle_rank_score(const RankedPassVector& pass_sorted, int k) {
  const int n = static_cast<int>(pass_sorted.size());
  if (n == 0) throw std::domain_error("oracle_rank_score on an empty pass vector");
  check_k(k, n);
  check_enumerable(n);
  long long total = 0;
  long long favorable = 0;
  for_each_subset(n, k, [&](const std::vector<int>& idx) {
    ++total;
    // idx is ascending, so idx[0] is the best-ranked member of the subset.
    if (pass_sorted[static_cast<std::size_t>(idx[0])]) ++favorable;
  });
  return static_cast<double>(favorable) / static_cast<double>(total);
}

namespace {

struct SubsetSampler {
  // Partial Fisher-Yates over a persistent pool; starting from any
  // permutation keeps the draw uniform, so no reset between samples.
  std::vector<int> pool;
  std::mt19937_64 rng;

  SubsetSampler(int n, std::uint64_t seed) : pool(static_cast<std::size_t>(n)), rng(seed) {
    std::iota(pool.begin(), pool.end(), 0);
  }

  template <typename Consume>
  void sample(int k, Consume&& consume) {
    const std::size_t n = pool.size();
    for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
      const std::size_t t = j + static_cast<std::size_t>(rng() % (n - j));
      std::swap(pool[j], pool[t]);
      consume(pool[j]);
    }
  }
};

MonteCarloEstimate finish_estimate(long long hits, int samples) {
  MonteCarloEstimate est;
  est.value = static_cast<double>(hits) / static_cast<double>(samples);
  est.standard_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(samples));
  return est;
}

}  // namespace

MonteCarloEstimate mc_pass_at_k(const PassCounts& counts, int k, int samples,
                                std::uint64_t seed) {
  check_counts(counts);
  check_k(k, counts.n);
  if (samples < 1) throw std::domain_error("Monte Carlo needs samples >= 1");
  SubsetSampler sampler(counts.n, seed);
  long long hits = 0;
  for (int s = 0; s < samples; ++s) {
    bool hit = false;
    sampler.sample(k, [&](int original) { hit = hit || original < counts.c; });
    if (hit) ++hits;
  }
  return finish_estimate(hits, samples);
}

MonteCarloEstimate mc_rank_score(const RankedPassVector& pass_sorted, int k, int samples,
                                 std::uint64_t seed) {
  const int n = static_cast<int>(pass_sorted.size());
  if (n == 0) throw std::domain_error("mc_rank_score on an empty pass vector");
  check_k(k, n);
  if (samples < 1) throw std::domain_error("Monte Carlo needs samples >= 1");
  SubsetSampler sampler(n, seed);
  long long hits = 0;
  for (int s = 0; s < samples; ++s) {
    int best = n;
    sampler.sample(k, [&](int original) { best = std::min(best, original); });
    if (pass_sorted[static_cast<std::size_t>(best)]) ++hits;
  }
  return finish_estimate(hits, samples);
}

}  // namespace budgeteval::estimators
