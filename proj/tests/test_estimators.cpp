#include <cmath>
#include <random>

#include "doctest.h"

#include "budgeteval/errors.hpp"
#include "budgeteval/estimators.hpp"

using namespace budgeteval;
using estimators::PassCounts;
using estimators::RankedPassVector;

namespace {

// Log-space reference route for large n: exp(lgamma sums), summed per term.
double rank_score_log_space(const RankedPassVector& pass_sorted, int k) {
  const int n = static_cast<int>(pass_sorted.size());
  auto log_comb = [](int a, int b) {
    return std::lgamma(a + 1.0) - std::lgamma(b + 1.0) - std::lgamma(a - b + 1.0);
  };
  const double log_total = log_comb(n, k);
  double sum = 0.0;
  for (int i = 1; i <= n - k + 1; ++i) {
    if (!pass_sorted[static_cast<std::size_t>(i - 1)]) continue;
    sum += std::exp(log_comb(n - i, k - 1) - log_total);
  }
  return sum;
}

double anti_oracle_closed_form(int n, int c, int k) {
  if (k > c) return 0.0;
  double v = 1.0;
  for (int i = 0; i < k; ++i)
    v *= static_cast<double>(c - i) / static_cast<double>(n - i);
  return v;
}

RankedPassVector oracle_order(int n, int c) {
  RankedPassVector v(static_cast<std::size_t>(n), false);
  for (int i = 0; i < c; ++i) v[static_cast<std::size_t>(i)] = true;
  return v;
}

}  // namespace

TEST_CASE("pass_at_k known values") {
  // 5 of the C(4,2)=6 pairs contain a passing candidate.
  CHECK(estimators::pass_at_k({4, 2}, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(estimators::oracle_pass_at_k({4, 2}, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));

  CHECK(estimators::pass_at_k({10, 0}, 3) == 0.0);  // exactly
  CHECK(estimators::pass_at_k({5, 3}, 5) == 1.0);   // n - c = 2 < k
  CHECK(estimators::pass_at_k({7, 7}, 1) == 1.0);

  // k = 1 reduces to c/n.
  for (int n : {1, 3, 10, 200}) {
    for (int c = 0; c <= n; c += std::max(1, n / 7)) {
      CHECK(estimators::pass_at_k({n, c}, 1) ==
            doctest::Approx(static_cast<double>(c) / n).epsilon(1e-14));
    }
  }
}

TEST_CASE("pass_at_k domain errors") {
  CHECK_THROWS_AS(estimators::pass_at_k({4, 2}, 0), std::domain_error);
  CHECK_THROWS_AS(estimators::pass_at_k({4, 2}, 5), std::domain_error);
  CHECK_THROWS_AS(estimators::pass_at_k({4, 5}, 1), std::domain_error);
  CHECK_THROWS_AS(estimators::pass_at_k({0, 0}, 1), std::domain_error);
}

TEST_CASE("pass_at_k agrees with enumeration for all small instances") {
  for (int n = 1; n <= 12; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k)
        CHECK(std::abs(estimators::pass_at_k({n, c}, k) -
                       estimators::oracle_pass_at_k({n, c}, k)) <= 1e-12);
}

TEST_CASE("pass_at_k agrees with enumeration on random n <= 20") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 13 + static_cast<int>(rng() % 8);
    const int c = static_cast<int>(rng() % (n + 1));
    const int k = 1 + static_cast<int>(rng() % n);
    CHECK(std::abs(estimators::pass_at_k({n, c}, k) -
                   estimators::oracle_pass_at_k({n, c}, k)) <= 1e-12);
  }
}

TEST_CASE("pass_at_k monotone in k and c") {
  for (int n : {5, 11, 30}) {
    for (int c = 0; c <= n; ++c) {
      double prev = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double v = estimators::pass_at_k({n, c}, k);
        CHECK(v >= prev - 1e-15);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
      }
    }
    for (int k = 1; k <= n; ++k) {
      double prev = 0.0;
      for (int c = 0; c <= n; ++c) {
        const double v = estimators::pass_at_k({n, c}, k);
        CHECK(v >= prev - 1e-15);
        prev = v;
      }
    }
  }
}

TEST_CASE("rank_score_at_k known values") {
  // Subsets of ranked positions {1..4} of size 2 whose best member passes:
  // {2,3}, {2,4}, {3,4} -> 3/6.
  const RankedPassVector v{false, true, true, false};
  CHECK(estimators::rank_score_at_k(v, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(estimators::oracle_rank_score(v, 2) == doctest::Approx(0.5).epsilon(1e-15));

  // All-pass is exactly 1 for any k.
  for (int k = 1; k <= 6; ++k)
    CHECK(estimators::rank_score_at_k(RankedPassVector(6, true), k) == 1.0);

  // k = n: the single subset is the whole set, the top is position 1.
  CHECK(estimators::rank_score_at_k({true, false, false}, 3) == 1.0);
  CHECK(estimators::rank_score_at_k({false, true, true}, 3) == 0.0);

  // k = 1 reduces to the mean.
  const RankedPassVector w{true, false, true, false, false};
  CHECK(estimators::rank_score_at_k(w, 1) == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("rank_score_at_k domain errors") {
  CHECK_THROWS_AS(estimators::rank_score_at_k({}, 1), std::domain_error);
  CHECK_THROWS_AS(estimators::rank_score_at_k({true}, 0), std::domain_error);
  CHECK_THROWS_AS(estimators::rank_score_at_k({true}, 2), std::domain_error);
}

TEST_CASE("rank_score_at_k agrees with enumeration on random vectors") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const int k = 1 + static_cast<int>(rng() % n);
    RankedPassVector v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = rng() % 2 == 0;
    CHECK(std::abs(estimators::rank_score_at_k(v, k) - estimators::oracle_rank_score(v, k)) <=
          1e-12);
  }
}

TEST_CASE("rank_score_at_k = mean at k=1 for all vectors") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 50);
    RankedPassVector v(static_cast<std::size_t>(n));
    int c = 0;
    for (int i = 0; i < n; ++i) {
      v[static_cast<std::size_t>(i)] = rng() % 3 == 0;
      c += v[static_cast<std::size_t>(i)];
    }
    CHECK(std::abs(estimators::rank_score_at_k(v, 1) - static_cast<double>(c) / n) <= 1e-12);
  }
}

TEST_CASE("oracle ordering reproduces pass_at_k, anti-oracle the closed form") {
  for (int n = 1; n <= 12; ++n) {
    for (int c = 0; c <= n; ++c) {
      for (int k = 1; k <= n; ++k) {
        RankedPassVector best = oracle_order(n, c);
        RankedPassVector worst(best.rbegin(), best.rend());
        CHECK(std::abs(estimators::rank_score_at_k(best, k) -
                       estimators::pass_at_k({n, c}, k)) <= 1e-12);
        CHECK(std::abs(estimators::rank_score_at_k(worst, k) -
                       anti_oracle_closed_form(n, c, k)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("any ordering lies between the anti-oracle and oracle envelopes") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 11);
    const int k = 1 + static_cast<int>(rng() % n);
    RankedPassVector v(static_cast<std::size_t>(n));
    int c = 0;
    for (int i = 0; i < n; ++i) {
      v[static_cast<std::size_t>(i)] = rng() % 2 == 0;
      c += v[static_cast<std::size_t>(i)];
    }
    const double score = estimators::rank_score_at_k(v, k);
    CHECK(score >= anti_oracle_closed_form(n, c, k) - 1e-12);
    CHECK(score <= estimators::pass_at_k({n, std::max(c, 0)}, k) + 1e-12);
  }
}

TEST_CASE("large-n stability: n=2000, k up to 1000") {
  RankedPassVector v(2000, false);
  // Scatter passes deterministically.
  for (std::size_t i = 0; i < v.size(); i += 7) v[i] = true;
  for (int k : {1, 2, 500, 1000}) {
    const double stable = estimators::rank_score_at_k(v, k);
    CHECK(std::isfinite(stable));
    CHECK(stable >= 0.0);
    CHECK(stable <= 1.0);
    CHECK(stable == doctest::Approx(rank_score_log_space(v, k)).epsilon(1e-9));
  }
  for (int c : {0, 1, 17, 1000, 2000}) {
    for (int k : {1, 500, 1000}) {
      const double p = estimators::pass_at_k({2000, c}, k);
      CHECK(std::isfinite(p));
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("Monte Carlo oracle brackets the closed form within 3 standard errors") {
  const PassCounts counts{50, 9};
  const int k = 4;
  const auto mc = estimators::mc_pass_at_k(counts, k, 100000, 20240901);
  const double exact = estimators::pass_at_k(counts, k);
  CHECK(std::abs(mc.value - exact) <= 3.0 * mc.standard_error + 1e-12);

  RankedPassVector v(60, false);
  for (std::size_t i = 3; i < v.size(); i += 5) v[i] = true;
  const auto mcr = estimators::mc_rank_score(v, 7, 100000, 20240901);
  const double exactr = estimators::rank_score_at_k(v, 7);
  CHECK(std::abs(mcr.value - exactr) <= 3.0 * mcr.standard_error + 1e-12);
}

TEST_CASE("oracle guards") {
  CHECK_THROWS_AS(estimators::oracle_pass_at_k({21, 3}, 2), std::domain_error);
  CHECK_THROWS_AS(estimators::oracle_rank_score(RankedPassVector(21, true), 2),
                  std::domain_error);
}

TEST_CASE("pass_at_k_corpus") {
  // Two problems at 0.2 and 0.4 -> mean 30.0 percent.
  std::map<std::string, PassCounts> counts{{"p1", {5, 1}}, {"p2", {5, 2}}};
  const auto score = estimators::pass_at_k_corpus(counts, 1);
  CHECK(score.value == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(score.skipped.empty());

  counts["p0"] = {0, 0};  // skipped with a warning entry, not an error
  const auto with_empty = estimators::pass_at_k_corpus(counts, 1);
  CHECK(with_empty.value == doctest::Approx(30.0).epsilon(1e-12));
  REQUIRE(with_empty.skipped.size() == 1);
  CHECK(with_empty.skipped[0] == "p0");

  counts["p3"] = {3, 1};  // non-uniform n
  CHECK_THROWS_AS(estimators::pass_at_k_corpus(counts, 1), ValidationError);

  std::map<std::string, PassCounts> low{{"p1", {5, 1}}, {"p2", {2, 1}}};
  CHECK_THROWS_AS(estimators::pass_at_k_corpus(low, 3), ValidationError);  // p2: n < k
  try {
    estimators::pass_at_k_corpus(low, 3);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("p2") != std::string::npos);
  }
}

TEST_CASE("rank_score_corpus") {
  std::map<std::string, RankedPassVector> vectors{
      {"p1", {true, true}},   // 1.0 at k=1? mean = 1.0
      {"p2", {false, false}}  // 0.0
  };
  const auto score = estimators::rank_score_corpus(vectors, 1);
  CHECK(score.value == doctest::Approx(50.0).epsilon(1e-12));

  // n may differ per problem for rank metrics.
  vectors["p3"] = {true, false, false, true};
  CHECK_NOTHROW(estimators::rank_score_corpus(vectors, 2));

  vectors["p4"] = {};  // skipped
  const auto with_empty = estimators::rank_score_corpus(vectors, 1);
  REQUIRE(with_empty.skipped.size() == 1);
  CHECK(with_empty.skipped[0] == "p4");

  CHECK_THROWS_AS(estimators::rank_score_corpus(vectors, 3), ValidationError);  // p1, p2 too small
}

TEST_CASE("oracle-ranked corpus equals pass@k corpus") {
  std::map<std::string, PassCounts> counts;
  std::map<std::string, RankedPassVector> vectors;
  std::mt19937_64 rng(5);
  for (int p = 0; p < 12; ++p) {
    const int n = 10;
    const int c = static_cast<int>(rng() % (n + 1));
    const std::string id = "p" + std::to_string(p);
    counts[id] = {n, c};
    vectors[id] = oracle_order(n, c);
  }
  for (int k = 1; k <= 5; ++k) {
    CHECK(std::abs(estimators::pass_at_k_corpus(counts, k).value -
                   estimators::rank_score_corpus(vectors, k).value) <= 1e-10);
  }
}
