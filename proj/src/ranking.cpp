#include "budgeteval/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "budgeteval/errors.hpp"

namespace budgeteval::ranking {

RankingPolicy RankingPolicy::parse(const std::string& spec) {
  std::vector<std::string> parts;
  std::size_t begin = 0;
  while (begin <= spec.size()) {
    std::size_t end = spec.find(':', begin);
    if (end == std::string::npos) end = spec.size();
    parts.push_back(spec.substr(begin, end - begin));
    begin = end + 1;
  }
  RankingPolicy p;
  p.id = spec;
  const std::string& head = parts[0];
  if (head == "nll") {
    if (parts.size() != 2 || parts[1].empty())
      throw ValidationError("policy \"nll\" needs a score source, e.g. nll:13b");
    p.kind = PolicyKind::nll;
    p.score_source = parts[1];
    p.direction = Direction::lower_better;
  } else if (head == "external") {
    if (parts.size() < 2 || parts.size() > 3 || parts[1].empty())
      throw ValidationError("policy \"external\" needs a score name, e.g. external:lever");
    p.kind = PolicyKind::external;
    p.score_source = parts[1];
    p.direction = Direction::higher_better;
    if (parts.size() == 3) {
      if (parts[2] == "asc") p.direction = Direction::lower_better;
      else if (parts[2] == "desc") p.direction = Direction::higher_better;
      else throw ValidationError("external score direction must be asc or desc");
    }
  } else if (head == "oracle" && parts.size() == 1) {
    p.kind = PolicyKind::oracle;
  } else if ((head == "anti-oracle" || head == "anti_oracle") && parts.size() == 1) {
    p.kind = PolicyKind::anti_oracle;
  } else if (head == "random") {
    if (parts.size() > 2) throw ValidationError("random policy takes at most one seed");
    p.kind = PolicyKind::random;
    if (parts.size() == 2) {
      try {
        p.seed = std::stoull(parts[1]);
      } catch (const std::exception&) {
        throw ValidationError("random policy seed must be an integer");
      }
    }
  } else if (head == "index" && parts.size() == 1) {
    p.kind = PolicyKind::index;
  } else {
    throw ValidationError("unknown ranking policy \"" + spec + "\"");
  }
  return p;
}

double nll_from_token_logprobs(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw std::domain_error("token log-probabilities are empty");
  double sum = 0.0;
  for (double lp : logprobs) {
    if (!std::isfinite(lp) || lp > 0.0)
      throw std::domain_error("token log-probabilities must be finite and <= 0");
    sum += lp;
  }
  return -sum / static_cast<double>(logprobs.size());
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string describe(const corpus::Generation& g) {
  return "(" + g.problem_id + ", " + std::to_string(g.candidate_index) + ")";
}

}  // namespace

estimators::RankedPassVector rank_generations(const RankingPolicy& policy,
                                              const std::vector<const corpus::Generation*>& gens,
                                              const std::map<int, bool>& passed_by_index) {
  struct Entry {
    double key;
    int candidate_index;
    bool passed;
  };
  std::vector<Entry> entries;
  entries.reserve(gens.size());

  // Per-problem generator so results cannot depend on evaluation order.
  std::mt19937_64 rng(policy.kind == PolicyKind::random && !gens.empty()
                          ? mix(policy.seed, fnv1a(gens.front()->problem_id))
                          : 0);

  for (const corpus::Generation* g : gens) {
    auto vit = passed_by_index.find(g->candidate_index);
    if (vit == passed_by_index.end())
      throw ValidationError("no verdict for generation " + describe(*g));
    Entry e{0.0, g->candidate_index, vit->second};
    switch (policy.kind) {
      case PolicyKind::nll: {
        auto it = g->token_logprobs.find(policy.score_source);
        if (it == g->token_logprobs.end())
          throw ValidationError("generation " + describe(*g) + " has no token_logprobs[\"" +
                                policy.score_source + "\"]");
        e.key = nll_from_token_logprobs(it->second);
        break;
      }
      case PolicyKind::external: {
        auto it = g->external_scores.find(policy.score_source);
        if (it == g->external_scores.end())
          throw ValidationError("generation " + describe(*g) + " has no external score \"" +
                                policy.score_source + "\"");
        e.key = policy.direction == Direction::higher_better ? -it->second : it->second;
        break;
      }
      case PolicyKind::oracle:
        e.key = e.passed ? 0.0 : 1.0;
        break;
      case PolicyKind::anti_oracle:
        e.key = e.passed ? 1.0 : 0.0;
        break;
      case PolicyKind::random:
        // Draw a u64 per generation; ties are broken by index below.
        e.key = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        break;
      case PolicyKind::index:
        e.key = 0.0;
        break;
    }
    entries.push_back(e);
  }

  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.candidate_index < b.candidate_index;
  });

  estimators::RankedPassVector out;
  out.reserve(entries.size());
  for (const Entry& e : entries) out.push_back(e.passed);
  return out;
}

std::map<std::string, estimators::RankedPassVector> build_ranked_vectors(
    const RankingPolicy& policy, const corpus::GenerationSet& gens,
    const sandbox::ResultMatrix& verdicts) {
  const corpus::GenerationSet filtered = corpus::filter_complete(gens);

  std::map<std::string, std::map<int, bool>> passed;
  for (const sandbox::ExecutionResult& r : verdicts.results())
    if (r.mode == corpus::Mode::sampled)
      passed[r.problem_id][r.candidate_index] = r.verdict == sandbox::Verdict::pass;

  std::map<std::string, estimators::RankedPassVector> out;
  for (const auto& [problem_id, n] : filtered.n_per_problem()) {
    std::vector<const corpus::Generation*> sampled;
    for (const corpus::Generation* g : filtered.for_problem(problem_id))
      if (g->mode == corpus::Mode::sampled) sampled.push_back(g);
    if (sampled.empty()) {
      out.emplace(problem_id, estimators::RankedPassVector{});
      continue;
    }
    out.emplace(problem_id, rank_generations(policy, sampled, passed[problem_id]));
  }
  return out;
}

estimators::CorpusScore evaluate_policy_at_k(const RankingPolicy& policy,
                                             const corpus::GenerationSet& gens,
                                             const sandbox::ResultMatrix& verdicts, int k) {
  return estimators::rank_score_corpus(build_ranked_vectors(policy, gens, verdicts), k);
}

std::optional<estimators::CorpusScore> evaluate_policy_at_budget(
    const RankingPolicy& policy, const corpus::GenerationSet& gens,
    const sandbox::ResultMatrix& verdicts, const budget::CostModel& cm,
    const std::string& model, const budget::Budget& b, long long cap) {
  return budget::rank_score_at_budget(build_ranked_vectors(policy, gens, verdicts), cm, model,
                                      b, cap);
}

}  // namespace budgeteval::ranking
