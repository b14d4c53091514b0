"""Perturbation-rate accounting, substitution ranking, and the flip search."""

from __future__ import annotations

import numpy as np
import pytest

from pivotflip import (
    AttackConfig,
    KeywordVictim,
    MASK_TOKEN,
    PivotResult,
    SubstitutionSet,
    TokenSequence,
    VictimOracle,
    build_substitution_set,
    cosine,
    dynamic_threshold,
    execute_attack,
    find_pivot,
    perturbation_rate,
    select_adversarial,
    sentence_embed,
)
from conftest import ConstantVictim, distinct_tokens, make_store, TOY_VECTORS


def pivot_of(*indices, ranked=()) -> PivotResult:
    return PivotResult(
        pivot=tuple(sorted(indices)),
        pivot_order=tuple(indices),
        culled=False,
        ranked_non_pivot=tuple(ranked),
        queries_used=0,
    )


class TestPerturbationRate:
    def test_identity(self):
        assert perturbation_rate(("a", "b"), ("a", "b")) == 0.0

    def test_single_change(self):
        original = distinct_tokens(10)
        altered = list(original)
        altered[3] = "something"
        assert perturbation_rate(original, altered) == pytest.approx(0.1)

    def test_three_of_eight(self):
        original = distinct_tokens(8)
        altered = list(original)
        for i in (0, 4, 7):
            altered[i] = "changed"
        assert perturbation_rate(original, altered) == pytest.approx(0.375)

    def test_accepts_token_sequence(self):
        x = TokenSequence(("a", "b"), 1)
        assert perturbation_rate(x, ("a", "c")) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            perturbation_rate(("a",), ("a", "b"))


class TestDynamicThreshold:
    CFG = AttackConfig(h_base=0.1, h_max=0.25)

    def test_linear_region(self):
        assert dynamic_threshold(self.CFG, 20, 200) == pytest.approx(0.2)

    def test_cap_binds(self):
        assert dynamic_threshold(self.CFG, 100, 20) == 0.25

    def test_no_slack(self):
        assert dynamic_threshold(self.CFG, 0, 50) == pytest.approx(0.1)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            dynamic_threshold(self.CFG, 5, 0)
        with pytest.raises(ValueError):
            dynamic_threshold(self.CFG, -1, 5)


class TestBuildSubstitutionSet:
    def test_toy_neighbor(self):
        store = make_store(TOY_VECTORS)
        subs = build_substitution_set("great", 2, store, 1)
        assert subs.candidates == ("fine",)
        assert subs.target_index == 2

    def test_oov_token(self):
        store = make_store(TOY_VECTORS)
        assert build_substitution_set("missing", 0, store, 5).candidates == ()

    def test_saturation_returns_everything_else(self):
        store = make_store(TOY_VECTORS)
        subs = build_substitution_set("great", 0, store, 50)
        assert sorted(subs.candidates) == ["character", "fine", "one", "shaping"]

    def test_mask_symbol_never_offered(self):
        store = make_store(f"q 1 0\n{MASK_TOKEN} 0.99 0.14\nother 0 1\n")
        subs = build_substitution_set("q", 0, store, 2)
        assert MASK_TOKEN not in subs.candidates
        assert subs.candidates == ("other",)


class TestSelectAdversarial:
    def test_singleton(self):
        store = make_store(TOY_VECTORS)
        x = TokenSequence(("shaping", "one", "great", "character"), 1)
        ranked = select_adversarial(x, 2, SubstitutionSet(2, ("fine",)), store)
        assert len(ranked) == 1
        assert ranked[0].tokens == ("shaping", "one", "fine", "character")
        assert ranked[0].changed_indices == frozenset({2})
        assert ranked[0].pert == pytest.approx(0.25)

    def test_ordering_matches_brute_force(self):
        rng = np.random.default_rng(31)
        words = [f"v{i}" for i in range(12)]
        matrix = rng.normal(size=(12, 4))
        store = make_store(
            "".join(f"{w} " + " ".join(map(str, row)) + "\n" for w, row in zip(words, matrix))
        )
        x = TokenSequence(("v0", "v1", "v2", "v3", "v4"), 1)
        subs = build_substitution_set("v2", 2, store, 6)
        ranked = select_adversarial(x, 2, subs, store)

        reference = sentence_embed(store, x.tokens).vector
        brute = []
        for order, word in enumerate(subs.candidates):
            tokens = list(x.tokens)
            tokens[2] = word
            brute.append((-cosine(reference, sentence_embed(store, tokens).vector), order, word))
        brute.sort()
        assert [cand.tokens[2] for cand in ranked] == [w for _, _, w in brute]
        assert all(cand.pert > 0.0 for cand in ranked)

    def test_empty_substitutions_rejected(self):
        store = make_store(TOY_VECTORS)
        x = TokenSequence(("great",), 1)
        with pytest.raises(ValueError):
            select_adversarial(x, 0, SubstitutionSet(0, ()), store)


class TestExecuteAttack:
    def setup_method(self):
        self.store = make_store(TOY_VECTORS)
        self.x = TokenSequence(("shaping", "one", "great", "character"), 1)
        self.victim = KeywordVictim(frozenset({"great"}))

    def test_flip_on_decisive_token(self):
        cfg = AttackConfig(budget=100)
        oracle = VictimOracle(self.victim, cfg.budget)
        record = execute_attack(self.x, pivot_of(2), oracle, self.store, cfg)
        assert record.success
        assert record.adversarial_tokens == ("shaping", "one", "fine", "character")
        assert record.pert == pytest.approx(1 / 4)
        assert record.queries_used == 1
        # replay the stored adversarial tokens: the label really flipped
        assert self.victim.classify(record.adversarial_tokens) != self.x.original_label

    def test_empty_positions_fail_without_queries(self):
        cfg = AttackConfig(budget=100)
        oracle = VictimOracle(self.victim, cfg.budget)
        record = execute_attack(
            self.x,
            PivotResult((), (), True, (), 0),
            oracle,
            self.store,
            cfg,
        )
        assert not record.success
        assert oracle.used == 0

    def test_zero_remaining_budget(self):
        cfg = AttackConfig(budget=0)
        oracle = VictimOracle(self.victim, 0)
        record = execute_attack(self.x, pivot_of(2), oracle, self.store, cfg)
        assert not record.success
        assert record.queries_used == 0

    def test_every_query_respects_the_cap(self):
        cfg = AttackConfig(budget=12, h_base=0.1, h_max=0.3)
        oracle = VictimOracle(ConstantVictim(1), cfg.budget)
        execute_attack(self.x, pivot_of(2, ranked=(0, 1, 3)), oracle, self.store, cfg)
        for position, entry in enumerate(oracle.audit_log):
            remaining_before = cfg.budget - position
            cap = dynamic_threshold(cfg, remaining_before, self.x.length)
            assert perturbation_rate(self.x, entry.tokens) <= cap

    def test_changed_positions_within_attack_surface(self):
        cfg = AttackConfig(budget=30)
        oracle = VictimOracle(ConstantVictim(1), cfg.budget)
        allowed = {2, 0, 1}
        execute_attack(self.x, pivot_of(2, ranked=(0, 1)), oracle, self.store, cfg)
        for entry in oracle.audit_log:
            changed = {
                i for i, (a, b) in enumerate(zip(self.x.tokens, entry.tokens)) if a != b
            }
            assert changed <= allowed

    def test_raising_h_max_only_adds_queries(self):
        # One attackable position: eligibility is governed purely by the cap.
        x = TokenSequence(distinct_tokens(4, "f"), 1)
        store = make_store(
            "f0 1 0\nf1 0.9 0.4358898943540674\nf2 0.8 0.6\nf3 0.7 0.714142842854285\n"
        )
        queried = {}
        for h_max in (0.1, 0.25):
            cfg = AttackConfig(budget=50, h_base=0.0, h_max=h_max)
            oracle = VictimOracle(ConstantVictim(1), cfg.budget)
            execute_attack(x, pivot_of(0), oracle, store, cfg)
            queried[h_max] = {entry.tokens for entry in oracle.audit_log}
        assert queried[0.1] <= queried[0.25]

    def test_substitutions_accumulate_across_positions(self):
        cfg = AttackConfig(budget=60, h_max=1.0)
        oracle = VictimOracle(ConstantVictim(1), cfg.budget)
        execute_attack(self.x, pivot_of(2, ranked=(0, 1, 3)), oracle, self.store, cfg)
        max_changes = max(
            sum(a != b for a, b in zip(self.x.tokens, entry.tokens))
            for entry in oracle.audit_log
        )
        assert max_changes >= 2

    def test_fallback_ranking_is_attacked_after_pivot(self):
        # pivot position is OOV, so the flip must come from the ranking
        x = TokenSequence(("zzz", "one", "great", "character"), 1)
        cfg = AttackConfig(budget=100)
        oracle = VictimOracle(self.victim, cfg.budget)
        record = execute_attack(x, pivot_of(0, ranked=(2,)), oracle, self.store, cfg)
        assert record.success
        assert record.adversarial_tokens[2] == "fine"


class TestPivotIntoAttackPipeline:
    def test_search_then_flip_within_budget(self):
        store = make_store(TOY_VECTORS)
        x = TokenSequence(("shaping", "one", "great", "character"), 1)
        victim = KeywordVictim(frozenset({"great"}))
        cfg = AttackConfig(budget=100)
        oracle = VictimOracle(victim, cfg.budget)
        rng = np.random.default_rng(4)
        pivot = find_pivot(x, oracle, cfg, rng)
        record = execute_attack(x, pivot, oracle, store, cfg)
        assert record.success
        assert record.queries_used <= cfg.budget
        assert record.queries_used == pivot.queries_used + 1
