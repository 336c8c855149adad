#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "budgeteval/budget.hpp"
#include "budgeteval/corpus.hpp"
#include "budgeteval/estimators.hpp"
#include "budgeteval/sandbox.hpp"

namespace budgeteval::ranking {

enum class PolicyKind { nll, external, oracle, anti_oracle, random, index };
enum class Direction { lower_better, higher_better };

/// A rule for ordering one problem's generations before selection.
///   nll       averaged negative log likelihood from token_logprobs
///             [score_source], lower first
///   external  external_scores[score_source], `direction` decides the order
///   oracle / anti_oracle   passes first / passes last (score envelopes)
///   random    seeded shuffle, derived per problem so parallel evaluation
///             cannot change results
///   index     candidate order as generated
/// Ties always break by candidate_index ascending.
struct RankingPolicy {
  std::string id;
  PolicyKind kind = PolicyKind::index;
  std::string score_source;
  Direction direction = Direction::lower_better;
  std::uint64_t seed = 0;

  /// Parses "nll:<source>", "external:<name>[:asc|desc]" (desc = higher is
  /// better, the default), "oracle", "anti-oracle", "random[:<seed>]",
  /// "index".
  static RankingPolicy parse(const std::string& spec);
};

/// Averaged negative log likelihood of one generation: the negated mean of
/// its per-token natural-log probabilities. Values must be finite and <= 0.
double nll_from_token_logprobs(const std::vector<double>& logprobs);

/// Orders one problem's generations by the policy and returns their pass
/// flags in rank order. `passed_by_index` maps candidate_index to the
/// execution verdict; a generation without a score or verdict is an error.
estimators::RankedPassVector rank_generations(const RankingPolicy& policy,
                                              const std::vector<const corpus::Generation*>& gens,
                                              const std::map<int, bool>& passed_by_index);

/// Ranked pass vectors for every problem, built from completed sampled
/// generations (filter_complete is applied internally; it is idempotent).
/// Problems left with no generations come out empty and are later skipped.
std::map<std::string, estimators::RankedPassVector> build_ranked_vectors(
    const RankingPolicy& policy, const corpus::GenerationSet& gens,
    const sandbox::ResultMatrix& verdicts);

/// rank-score@k of the policy over the corpus (percent), after the
/// completion filter.
estimators::CorpusScore evaluate_policy_at_k(const RankingPolicy& policy,
                                             const corpus::GenerationSet& gens,
                                             const sandbox::ResultMatrix& verdicts, int k);

/// Budget-capped variant; nullopt when no generation is affordable.
std::optional<estimators::CorpusScore> evaluate_policy_at_budget(
    const RankingPolicy& policy, const corpus::GenerationSet& gens,
    const sandbox::ResultMatrix& verdicts, const budget::CostModel& cm,
    const std::string& model, const budget::Budget& b, long long cap);

}  // namespace budgeteval::ranking
