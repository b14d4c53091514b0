"""Attack configuration: every tunable knob in one validated, immutable record."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bandit_core import ExplorationParams

# Reserved token used when masking positions; inputs must never contain it.
MASK_TOKEN = "[UNK]"


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters governing one attack run.

    budget            total victim queries allowed per input (B)
    quota_fraction    share of the budget reserved for the pivot search (gamma)
    threshold         retention precision a pivot set must reach (tau)
    epsilon           stopping tolerance of the best-arm search
    delta             confidence parameter shared by the search and the culling bound
    scale             multiplicative constant inside the exploration rate
    alpha             growth exponent of the exploration rate (> 1)
    init_samples      masked samples drawn to initialize each arm and the cull check (N)
    candidate_size    substitution candidates retrieved per attacked token (M)
    mask_probability  per-token masking probability outside the preserved set
    cull_threshold    lower-bound level above which an input is deemed unattackable
    h_base            floor of the dynamic perturbation-rate cap
    h_max             ceiling of the dynamic perturbation-rate cap
    seed              run seed; per-entry seeds are derived from it

    Note: epsilon defaults to 0.9, a deliberately loose stopping tolerance that
    trades identification accuracy for query savings.
    """

    budget: int = 100
    quota_fraction: float = 0.8
    threshold: float = 0.85
    epsilon: float = 0.9
    delta: float = 0.85
    scale: float = 1.0
    alpha: float = 1.1
    init_samples: int = 5
    candidate_size: int = 50
    mask_probability: float = 0.5
    cull_threshold: float = 0.95
    h_base: float = 0.1
    h_max: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if not 0.0 <= self.quota_fraction <= 1.0:
            raise ValueError(f"quota_fraction must be in [0, 1], got {self.quota_fraction}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.alpha <= 1.0:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.init_samples < 1:
            raise ValueError(f"init_samples must be >= 1, got {self.init_samples}")
        if self.candidate_size < 1:
            raise ValueError(f"candidate_size must be >= 1, got {self.candidate_size}")
        if not 0.0 <= self.mask_probability <= 1.0:
            raise ValueError(f"mask_probability must be in [0, 1], got {self.mask_probability}")
        if not 0.0 <= self.cull_threshold <= 1.0:
            raise ValueError(f"cull_threshold must be in [0, 1], got {self.cull_threshold}")
        if not 0.0 <= self.h_base <= self.h_max <= 1.0:
            raise ValueError(
                f"need 0 <= h_base <= h_max <= 1, got h_base={self.h_base}, h_max={self.h_max}"
            )

    @property
    def search_quota(self) -> int:
        """Query quota reserved for the pivot search phase."""
        return math.ceil(self.quota_fraction * self.budget)

    def exploration(self) -> ExplorationParams:
        return ExplorationParams(
            scale=self.scale, alpha=self.alpha, delta=self.delta, epsilon=self.epsilon
        )
