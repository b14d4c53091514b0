"""Bernoulli-KL confidence machinery and the best-arm identification loop.

The arms here are abstract success/failure trial sources; nothing in this
module knows about text or victims. Confidence intervals are the exact
KL-inversion kind: the upper bound is the largest q >= p_hat whose Bernoulli
KL divergence from p_hat stays within beta / pulls, and the lower bound is the
mirror image on [0, p_hat]. Both are solved by bisection, with exact closed
forms at the degenerate estimates 0 and 1 (where d(0, q) = -log(1 - q) and
d(1, q) = -log q).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

# One pull of an arm: a single binary trial (in the attack setting, one
# victim query on a freshly masked sample).
Sampler = Callable[[], bool]

_BISECT_TOL = 1e-9
_BISECT_MAX_ITER = 100
# Extra polish target on the divergence residual so the returned bound sits
# tightly under its level even where the divergence is steep in q.
_RESIDUAL_TOL = 1e-7

_CLAMP_MESSAGE = (
    "exploration rate argument at or below e (small arm count or round); "
    "clamping so the outer log-log stays defined"
)


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q).

    Uses the convention 0 * log(0 / x) = 0. Diverges to +inf when q sits on
    an endpoint that p does not share. Raises ValueError outside [0, 1].
    """
    if not 0.0 <= p <= 1.0 or not 0.0 <= q <= 1.0:
        raise ValueError(f"probabilities must lie in [0, 1], got p={p}, q={q}")
    if p == q:
        return 0.0
    if q <= 0.0 or q >= 1.0:
        return math.inf
    total = 0.0
    if p > 0.0:
        total += p * math.log(p / q)
    if p < 1.0:
        total += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return max(total, 0.0)


def kl_upper_bound(estimate: float, pulls: int, beta: float) -> float:
    """Largest q >= estimate with bernoulli_kl(estimate, q) <= beta / pulls."""
    _check_bound_args(estimate, pulls, beta)
    if beta == 0.0:
        return estimate
    level = beta / pulls
    if estimate >= 1.0:
        return 1.0
    if estimate <= 0.0:
        # d(0, q) = -log(1 - q); invert exactly.
        return 1.0 - math.exp(-level) if level < math.inf else 1.0
    return _bisect_upper(estimate, level)


def kl_lower_bound(estimate: float, pulls: int, beta: float) -> float:
    """Smallest q <= estimate with bernoulli_kl(estimate, q) <= beta / pulls."""
    _check_bound_args(estimate, pulls, beta)
    if beta == 0.0:
        return estimate
    level = beta / pulls
    if estimate <= 0.0:
        return 0.0
    if estimate >= 1.0:
        # d(1, q) = -log q; invert exactly.
        return math.exp(-level) if level < math.inf else 0.0
    return _bisect_lower(estimate, level)


def _check_bound_args(estimate: float, pulls: int, beta: float) -> None:
    if not 0.0 <= estimate <= 1.0:
        raise ValueError(f"estimate must lie in [0, 1], got {estimate}")
    if pulls < 1:
        raise ValueError(f"pulls must be >= 1, got {pulls}")
    if beta < 0.0:
        raise ValueError(f"beta must be >= 0, got {beta}")


def _bisect_upper(estimate: float, level: float) -> float:
    lo, hi = estimate, 1.0
    if bernoulli_kl(estimate, hi) <= level:
        return hi
    for _ in range(_BISECT_MAX_ITER):
        if hi - lo < _BISECT_TOL and level - bernoulli_kl(estimate, lo) <= _RESIDUAL_TOL:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if bernoulli_kl(estimate, mid) <= level:
            lo = mid
        else:
            hi = mid
    return lo


def _bisect_lower(estimate: float, level: float) -> float:
    lo, hi = 0.0, estimate
    if bernoulli_kl(estimate, lo) <= level:
        return lo
    for _ in range(_BISECT_MAX_ITER):
        if hi - lo < _BISECT_TOL and level - bernoulli_kl(estimate, hi) <= _RESIDUAL_TOL:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if bernoulli_kl(estimate, mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ExplorationParams:
    """Knobs of the exploration rate and the stopping rule."""

    scale: float = 1.0
    alpha: float = 1.1
    delta: float = 0.85
    epsilon: float = 0.9

    def __post_init__(self) -> None:
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.alpha <= 1.0:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


def exploration_rate(num_arms: int, round_: int, params: ExplorationParams) -> float:
    """Confidence radius parameter log(x) + log(log(x)) with x = scale * K * t^alpha / delta.

    Grows logarithmically with the round. When x would not exceed e (possible
    for one or two arms in the first rounds under the defaults), x is clamped
    just above e and a warning is emitted rather than failing the search.
    """
    if num_arms < 1:
        raise ValueError(f"num_arms must be >= 1, got {num_arms}")
    if round_ < 1:
        raise ValueError(f"round must be >= 1, got {round_}")
    inner = params.scale * num_arms * round_**params.alpha / params.delta
    if not math.isfinite(inner) or inner <= 0.0:
        raise ValueError(
            f"invalid exploration rate argument {inner} "
            f"(num_arms={num_arms}, round={round_}, params={params})"
        )
    if inner <= math.e:
        warnings.warn(_CLAMP_MESSAGE, RuntimeWarning, stacklevel=2)
        inner = math.e * (1.0 + 1e-9)
    log_inner = math.log(inner)
    return log_inner + math.log(log_inner)


@dataclass
class ArmState:
    """Running statistics of one arm: pull count, successes, and KL bounds."""

    pulls: int = 0
    successes: int = 0
    estimate: float = 0.0
    lower: float = 0.0
    upper: float = 1.0

    def record(self, success: bool) -> None:
        self.pulls += 1
        if success:
            self.successes += 1
        self.estimate = self.successes / self.pulls

    def refresh(self, beta: float) -> None:
        """Recompute estimate and both confidence bounds at radius beta."""
        if self.pulls == 0:
            self.estimate, self.lower, self.upper = 0.0, 0.0, 1.0
            return
        self.estimate = self.successes / self.pulls
        self.lower = kl_lower_bound(self.estimate, self.pulls, beta)
        self.upper = kl_upper_bound(self.estimate, self.pulls, beta)

    def copy(self) -> "ArmState":
        return replace(self)


class Verdict(Enum):
    VALID = "valid"
    INVALID = "invalid"
    INCONCLUSIVE = "inconclusive"


def _leader_key(states: Sequence[ArmState]) -> Callable[[int], tuple]:
    return lambda i: (states[i].estimate, states[i].lower, -i)


def best_candidate(
    arms: Sequence[Sampler],
    initial: Sequence[ArmState],
    threshold: float,
    params: ExplorationParams,
    pull_budget: int,
) -> tuple[int, list[ArmState], int]:
    """Identify an (epsilon-)best arm by iteratively contesting leader and challenger.

    Each round pulls two arms: the leader (highest estimate among arms at or
    above `threshold`, which coincides with the overall highest estimate
    whenever that group is non-empty, and is the overall best otherwise) and
    the challenger (highest upper bound among the rest). The loop stops once
    the leader's lower bound reaches the challenger's upper bound minus
    epsilon, or the pull budget runs out.

    Returns (index of the winning arm, final states, pulls consumed). Ties for
    the winner break on higher lower bound, then lowest index.
    """
    if not arms:
        raise ValueError("at least one arm is required")
    if len(initial) != len(arms):
        raise ValueError(f"got {len(arms)} arms but {len(initial)} states")
    if pull_budget < 0:
        raise ValueError(f"pull_budget must be >= 0, got {pull_budget}")

    num = len(arms)
    states = [ArmState(pulls=s.pulls, successes=s.successes) for s in initial]
    beta = exploration_rate(num, 1, params)
    for state in states:
        state.refresh(beta)
    if num == 1:
        return 0, states, 0

    used = 0
    t = 1
    key = _leader_key(states)
    while True:
        leader = max(range(num), key=key)
        challenger = max(
            (i for i in range(num) if i != leader),
            key=lambda i: (states[i].upper, -i),
        )
        if states[leader].lower >= states[challenger].upper - params.epsilon:
            break
        if used >= pull_budget:
            break
        states[leader].record(arms[leader]())
        used += 1
        if used < pull_budget:
            states[challenger].record(arms[challenger]())
            used += 1
        t += 1
        beta = exploration_rate(num, t, params)
        for state in states:
            state.refresh(beta)

    winner = max(range(num), key=key)
    return winner, states, used


def verify_threshold(
    arm: Sampler,
    state: ArmState,
    threshold: float,
    params: ExplorationParams,
    pull_budget: int,
) -> tuple[Verdict, ArmState]:
    """Keep pulling one arm until its mean is confidently above or below `threshold`.

    VALID once the lower bound reaches the threshold, INVALID once the upper
    bound drops below it, INCONCLUSIVE when the budget runs out first. A zero
    budget returns the state untouched.
    """
    if pull_budget < 0:
        raise ValueError(f"pull_budget must be >= 0, got {pull_budget}")
    if pull_budget == 0:
        return Verdict.INCONCLUSIVE, state.copy()

    final = ArmState(pulls=state.pulls, successes=state.successes)
    final.refresh(exploration_rate(1, max(final.pulls, 1), params))
    used = 0
    while True:
        if final.pulls > 0:
            if final.lower >= threshold:
                return Verdict.VALID, final
            if final.upper < threshold:
                return Verdict.INVALID, final
        if used >= pull_budget:
            return Verdict.INCONCLUSIVE, final
        final.record(arm())
        used += 1
        final.refresh(exploration_rate(1, final.pulls, params))
