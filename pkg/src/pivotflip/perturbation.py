"""Label-flip execution: synonym substitution under a perturbation-rate cap.

Positions are attacked greedily, pivot positions first (in adoption order),
then the ranked non-pivot fallback. At each position the substitutes come
from the embedding neighborhood of the original token, tried in descending
sentence-similarity order; a candidate that would push the changed-token
fraction past the current dynamic cap is skipped without spending a query.
When no substitute flips the label at a position, the most similar one tried
is kept in place before moving on, so later positions compose with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .config import MASK_TOKEN, AttackConfig
from .embeddings import EmbeddingStore, cosine, nearest, sentence_embed
from .pivot_search import PivotResult, TokenSequence
from .victim import BudgetExhaustedError, VictimOracle


@dataclass(frozen=True)
class SubstitutionSet:
    """Up to M substitute words for one position, by non-increasing cosine
    similarity to the original token (ties lexicographic); never contains the
    original token itself."""

    target_index: int
    candidates: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class AdversarialCandidate:
    tokens: tuple[str, ...]
    changed_indices: frozenset[int]
    similarity: float
    pert: float


@dataclass
class AttackRecord:
    """Everything recorded about one attacked input."""

    identifier: str = ""
    success: bool = False
    skipped: bool = False
    original_tokens: tuple[str, ...] = ()
    adversarial_tokens: Optional[tuple[str, ...]] = None
    queries_used: int = 0
    pert: float = 0.0
    sim: float = 0.0
    pivot_indices: tuple[int, ...] = ()
    seed: int = 0
    error: Optional[str] = None


def perturbation_rate(
    x: Union[TokenSequence, Sequence[str]], x_adv: Sequence[str]
) -> float:
    """Fraction of positions where the two equal-length token lists differ."""
    original = x.tokens if isinstance(x, TokenSequence) else tuple(x)
    if len(original) != len(x_adv):
        raise ValueError(
            f"length mismatch: {len(original)} original vs {len(x_adv)} adversarial tokens"
        )
    changed = sum(1 for a, b in zip(original, x_adv) if a != b)
    return changed / len(original)


def dynamic_threshold(cfg: AttackConfig, remaining_budget: int, length: int) -> float:
    """Budget-adaptive cap on the perturbation rate:
    min(h_max, h_base + remaining_budget / length)."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if remaining_budget < 0:
        raise ValueError(f"remaining_budget must be >= 0, got {remaining_budget}")
    return min(cfg.h_max, cfg.h_base + remaining_budget / length)


def build_substitution_set(
    token: str, index: int, store: EmbeddingStore, m: int
) -> SubstitutionSet:
    """The m nearest vocabulary words to `token`, excluding the token itself
    and the mask symbol. Out-of-vocabulary tokens yield an empty set, meaning
    the position cannot be attacked."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    neighbors = nearest(store, token, m + 1)
    filtered = [word for word in neighbors if word != MASK_TOKEN][:m]
    return SubstitutionSet(target_index=index, candidates=tuple(filtered))


def select_adversarial(
    x: TokenSequence,
    index: int,
    subs: SubstitutionSet,
    store: EmbeddingStore,
) -> list[AdversarialCandidate]:
    """One single-substitution candidate per substitute, ordered by descending
    sentence-embedding cosine to x (ties keep substitution-set order). The
    head is the similarity-maximizing choice."""
    if not subs.candidates:
        raise ValueError("substitution set is empty")
    reference = sentence_embed(store, x.tokens).vector
    ranked: list[tuple[float, int, AdversarialCandidate]] = []
    for rank, word in enumerate(subs.candidates):
        tokens = x.tokens[:index] + (word,) + x.tokens[index + 1 :]
        similarity = cosine(reference, sentence_embed(store, tokens).vector)
        changed = frozenset(
            i for i, (a, b) in enumerate(zip(x.tokens, tokens)) if a != b
        )
        candidate = AdversarialCandidate(
            tokens=tokens,
            changed_indices=changed,
            similarity=similarity,
            pert=len(changed) / x.length,
        )
        ranked.append((-similarity, rank, candidate))
    ranked.sort(key=lambda item: (item[0], item[1]))
    return [candidate for _, _, candidate in ranked]


def execute_attack(
    x: TokenSequence,
    pivot_result: PivotResult,
    oracle: VictimOracle,
    store: EmbeddingStore,
    cfg: AttackConfig,
) -> AttackRecord:
    """Drive the flip search over the attack positions with whatever budget
    remains, returning a full record either way.

    Per queried candidate exactly one oracle call is spent; candidates whose
    cumulative perturbation rate (against the original input) exceeds the
    dynamic cap at that moment are skipped for free, as are exact repeats of
    earlier queries. Terminates on flip, budget exhaustion, or running out of
    positions.
    """
    record = AttackRecord(
        original_tokens=x.tokens,
        pivot_indices=pivot_result.pivot,
        queries_used=oracle.used,
    )
    order = pivot_result.pivot_order or pivot_result.pivot
    positions: list[int] = []
    for index in (*order, *pivot_result.ranked_non_pivot):
        if index not in positions:
            positions.append(index)

    working = list(x.tokens)
    changed: set[int] = set()
    seen: set[tuple[str, ...]] = set()
    exhausted = False

    for position in positions:
        if exhausted:
            break
        subs = build_substitution_set(
            x.tokens[position], position, store, cfg.candidate_size
        )
        if not subs.candidates:
            continue
        base = TokenSequence(tuple(working), x.original_label)
        tried: list[AdversarialCandidate] = []
        for candidate in select_adversarial(base, position, subs, store):
            if oracle.remaining <= 0:
                exhausted = True
                break
            cap = dynamic_threshold(cfg, oracle.remaining, x.length)
            if perturbation_rate(x, candidate.tokens) > cap:
                continue
            if candidate.tokens in seen:
                continue
            try:
                label = oracle.query(candidate.tokens)
            except BudgetExhaustedError:
                exhausted = True
                break
            seen.add(candidate.tokens)
            tried.append(candidate)
            if label is not None and label != x.original_label:
                record.success = True
                record.adversarial_tokens = candidate.tokens
                record.pert = perturbation_rate(x, candidate.tokens)
                record.sim = cosine(
                    sentence_embed(store, x.tokens).vector,
                    sentence_embed(store, candidate.tokens).vector,
                )
                record.queries_used = oracle.used
                return record
        if tried:
            # No flip here; keep the most similar substitution tried so later
            # positions build a combined perturbation.
            working[position] = tried[0].tokens[position]
            changed.add(position)

    record.queries_used = oracle.used
    return record
