"""Budgeted evaluation of pre-generated code solutions.

Unbiased pass@k and rank-score@k estimators, budget-capped metric curves
driven by a per-model cost table, and a sandboxed program runner. The heavy
lifting lives in the compiled ``_core`` extension; this package re-exports
its public surface.
"""

from budgeteval._core import (
    CostModel,
    InfraError,
    ParseError,
    ValidationError,
    __version__,
    assemble_program,
    build_pass_curve,
    default_grid,
    execute_program,
    mc_pass_at_k,
    mc_rank_score,
    nll_from_token_logprobs,
    oracle_pass_at_k,
    oracle_rank_score,
    pass_at_k,
    pass_at_k_corpus,
    rank_score_at_k,
    rank_score_corpus,
)

__all__ = [
    "CostModel",
    "InfraError",
    "ParseError",
    "ValidationError",
    "__version__",
    "assemble_program",
    "build_pass_curve",
    "default_grid",
    "execute_program",
    "mc_pass_at_k",
    "mc_rank_score",
    "nll_from_token_logprobs",
    "oracle_pass_at_k",
    "oracle_rank_score",
    "pass_at_k",
    "pass_at_k_corpus",
    "rank_score_at_k",
    "rank_score_corpus",
]
