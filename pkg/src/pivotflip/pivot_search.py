"""Pivot set identification.

An input's pivot set is a small group of token positions whose preservation
keeps the victim's label stable under random masking of everything else. The
search grows the set greedily, one position per round: every absent position
spawns a candidate set, each candidate becomes a bandit arm whose reward is
"the label survived masking", and the best-arm loop picks the round winner.
A candidate whose retention estimate clears the target threshold is then
verified against that threshold before being returned.

Inputs whose label survives masking so reliably that no in-budget attack is
plausible are culled up front. The whole search runs inside a fixed query
quota carved out of the attack budget.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .bandit_core import (
    ArmState,
    Sampler,
    Verdict,
    best_candidate,
    kl_lower_bound,
    verify_threshold,
)
from .config import MASK_TOKEN, AttackConfig
from .victim import BudgetExhaustedError, VictimOracle


@dataclass(frozen=True)
class TokenSequence:
    """A tokenized input together with the label the victim assigns it."""

    tokens: tuple[str, ...]
    original_label: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("a token sequence needs at least one token")
        if MASK_TOKEN in self.tokens:
            raise ValueError(f"input tokens may not contain the reserved {MASK_TOKEN!r}")

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class MaskingDistribution:
    """Random masking that leaves a preserved index set untouched."""

    base: TokenSequence
    preserved: frozenset[int]
    mask_probability: float
    mask_symbol: str = MASK_TOKEN

    def __post_init__(self) -> None:
        object.__setattr__(self, "preserved", frozenset(self.preserved))
        if any(i < 0 or i >= self.base.length for i in self.preserved):
            raise ValueError("preserved indices out of range")
        if not 0.0 <= self.mask_probability <= 1.0:
            raise ValueError(f"mask_probability must be in [0, 1], got {self.mask_probability}")


def sample_masked(dist: MaskingDistribution, rng: np.random.Generator) -> list[str]:
    """Draw one masked variant: preserved positions verbatim, every other
    position independently replaced by the mask symbol with the configured
    probability."""
    draws = rng.random(dist.base.length)
    return [
        token
        if i in dist.preserved or draws[i] >= dist.mask_probability
        else dist.mask_symbol
        for i, token in enumerate(dist.base.tokens)
    ]


@dataclass
class PivotCandidate:
    """One candidate pivot set and its arm statistics; `added` is the position
    this candidate contributes on top of the previous round's set."""

    indices: tuple[int, ...]
    arm: ArmState
    added: Optional[int] = None


@dataclass(frozen=True)
class PivotResult:
    """Outcome of the search.

    `pivot` is sorted for set semantics; `pivot_order` repeats the same
    indices in adoption order (earlier positions showed stronger influence).
    `ranked_non_pivot` lists the final round's losing positions by descending
    retention estimate, the fallback attack order once the pivot is spent.
    """

    pivot: tuple[int, ...]
    pivot_order: tuple[int, ...]
    culled: bool
    ranked_non_pivot: tuple[int, ...]
    queries_used: int


@dataclass(frozen=True)
class CullResult:
    culled: bool
    p0: float
    p0_lb: float
    samples_used: int
    budget_exhausted: bool


def cull_check(
    x: TokenSequence,
    oracle: VictimOracle,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> CullResult:
    """Decide whether the input is worth attacking at all.

    Draws init_samples fully-random masked variants (nothing preserved) and
    lower-bounds the label-retention rate with a KL bound at radius
    -log(delta). An input whose lower bound clears cull_threshold is culled.
    With insufficient remaining budget the check is skipped (never culls) and
    the budget_exhausted flag is set.
    """
    n = cfg.init_samples
    if oracle.remaining < n:
        warnings.warn(
            "insufficient query budget for the culling sample; skipping the check"
        )
        return CullResult(False, 0.0, 0.0, 0, True)
    beta0 = -math.log(cfg.delta)
    dist = MaskingDistribution(x, frozenset(), cfg.mask_probability)
    drawn = 0
    kept = 0
    exhausted = False
    for _ in range(n):
        try:
            label = oracle.query(sample_masked(dist, rng))
        except BudgetExhaustedError:
            exhausted = True
            break
        drawn += 1
        if label is not None and label == x.original_label:
            kept += 1
    p0 = kept / drawn if drawn else 0.0
    p0_lb = kl_lower_bound(p0, drawn, beta0) if drawn else 0.0
    culled = not exhausted and drawn == n and p0_lb >= cfg.cull_threshold
    return CullResult(culled, p0, p0_lb, drawn, exhausted)


def generate_candidates(current: PivotCandidate, x: TokenSequence) -> list[PivotCandidate]:
    """Expand a set by one position: one fresh candidate per absent index,
    ascending by the added index."""
    have = set(current.indices)
    if not have <= set(range(x.length)):
        raise ValueError("current indices out of range for the sequence")
    return [
        PivotCandidate(
            indices=tuple(sorted((*current.indices, i))),
            arm=ArmState(),
            added=i,
        )
        for i in range(x.length)
        if i not in have
    ]


def _retention_sampler(
    x: TokenSequence,
    indices: Sequence[int],
    oracle: VictimOracle,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> Sampler:
    dist = MaskingDistribution(x, frozenset(indices), cfg.mask_probability)

    def pull() -> bool:
        label = oracle.query(sample_masked(dist, rng))
        return label is not None and label == x.original_label

    return pull


def find_pivot(
    x: TokenSequence,
    oracle: VictimOracle,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> PivotResult:
    """Run the full search: cull check, then greedy one-position expansion
    driven by the best-arm loop, inside the search quota.

    Each round initializes every candidate arm with init_samples masked
    queries, lets the bandit pick a winner, and verifies the winner against
    the retention threshold when its estimate clears it. A verified (or
    inconclusively verified) winner is returned at once; otherwise expansion
    continues until the quota or the positions run out, and the
    highest-estimate set seen so far is returned.
    """
    quota = cfg.search_quota
    if quota <= 0:
        return PivotResult((), (), False, (), 0)

    start = oracle.used

    def spent() -> int:
        return oracle.used - start

    cull = cull_check(x, oracle, cfg, rng)
    if cull.culled:
        return PivotResult((), (), True, (), spent())

    params = cfg.exploration()
    current = PivotCandidate((), ArmState())
    adoption: list[int] = []
    best_set: tuple[int, ...] = ()
    best_order: tuple[int, ...] = ()
    best_estimate = -1.0
    last_round: list[PivotCandidate] = []
    accepted = False

    while spent() < quota and oracle.remaining > 0 and not accepted:
        candidates = generate_candidates(current, x)
        if not candidates:
            break
        samplers = [
            _retention_sampler(x, cand.indices, oracle, cfg, rng) for cand in candidates
        ]
        # Initialize arms batch by batch; a batch started inside the quota may
        # straddle it, after which everything below sees the quota as spent.
        for cand, pull in zip(candidates, samplers):
            if spent() >= quota or oracle.remaining == 0:
                break
            try:
                for _ in range(cfg.init_samples):
                    cand.arm.record(pull())
            except BudgetExhaustedError:
                break
        last_round = candidates

        cap = min(max(quota - spent(), 0), oracle.remaining)
        winner_idx, states, _ = best_candidate(
            samplers, [cand.arm for cand in candidates], cfg.threshold, params, cap
        )
        for cand, state in zip(candidates, states):
            cand.arm = state
        winner = candidates[winner_idx]

        if winner.arm.estimate >= cfg.threshold:
            cap = min(max(quota - spent(), 0), oracle.remaining)
            verdict, state = verify_threshold(
                samplers[winner_idx], winner.arm, cfg.threshold, params, cap
            )
            winner.arm = state
            # An inconclusive verification accepts optimistically: the attack
            # phase discovers a weak pivot far more cheaply than more pulls.
            accepted = verdict is not Verdict.INVALID

        current = PivotCandidate(winner.indices, ArmState())
        adoption.append(winner.added)
        if accepted or winner.arm.estimate > best_estimate:
            best_estimate = winner.arm.estimate
            best_set = winner.indices
            best_order = tuple(adoption)

    members = set(best_set)
    losers = [cand for cand in last_round if cand.added not in members]
    losers.sort(key=lambda cand: (-cand.arm.estimate, cand.added))
    return PivotResult(
        pivot=tuple(sorted(best_set)),
        pivot_order=best_order,
        culled=False,
        ranked_non_pivot=tuple(cand.added for cand in losers),
        queries_used=spent(),
    )


def true_retention_precision(
    x: TokenSequence,
    s: Sequence[int],
    victim,
    mask_probability: float,
) -> float:
    """Exact label-retention probability of preserving `s`, by enumerating
    every mask pattern over the free positions. Test oracle for deterministic
    victims; guarded to at most 20 free positions."""
    preserved = set(s)
    if not preserved <= set(range(x.length)):
        raise ValueError("preserved indices out of range")
    free = [i for i in range(x.length) if i not in preserved]
    if len(free) > 20:
        raise ValueError(
            f"enumeration over {len(free)} free positions exceeds the 2^20 guard"
        )
    base_label = victim.classify(x.tokens)
    total = 0.0
    for pattern in product((False, True), repeat=len(free)):
        probability = 1.0
        tokens = list(x.tokens)
        for position, masked in zip(free, pattern):
            if masked:
                probability *= mask_probability
                tokens[position] = MASK_TOKEN
            else:
                probability *= 1.0 - mask_probability
        if probability == 0.0:
            continue
        if victim.classify(tokens) == base_label:
            total += probability
    return total
