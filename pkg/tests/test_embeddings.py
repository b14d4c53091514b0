"""Vector loading, cosine, neighbor scan, and sentence pooling."""

from __future__ import annotations

import io

import numpy as np
import pytest

from pivotflip import MASK_TOKEN, cosine, load_vectors, nearest, sentence_embed
from conftest import make_store


class TestLoadVectors:
    def test_minimal_file(self):
        store = make_store("a 1 0\nb 0 1\n")
        assert len(store) == 2
        assert store.dimension == 2
        assert "a" in store and "c" not in store
        np.testing.assert_array_equal(store.vector("b"), [0.0, 1.0])

    def test_header_line_is_skipped(self):
        lines = ["2 300\n"]
        lines.append("w0 " + " ".join(["0.5"] * 300) + "\n")
        lines.append("w1 " + " ".join(["0.25"] * 300) + "\n")
        store = load_vectors(io.StringIO("".join(lines)))
        assert len(store) == 2
        assert store.dimension == 300

    def test_dimension_mismatch_names_line(self):
        text = "a 1 0 0\nb 1 0\n"
        with pytest.raises(ValueError, match="line 2"):
            make_store(text)

    def test_unparsable_component(self):
        with pytest.raises(ValueError, match="line 1"):
            make_store("a 1 x\n")

    def test_empty_input(self):
        with pytest.raises(ValueError, match="no word vectors"):
            make_store("")

    def test_duplicate_keeps_first_with_warning(self):
        with pytest.warns(UserWarning, match="duplicate"):
            store = make_store("a 1 0\na 0 1\n")
        np.testing.assert_array_equal(store.vector("a"), [1.0, 0.0])

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError, match="zero-norm"):
            make_store("a 0 0\n")

    def test_blank_lines_ignored(self):
        store = make_store("a 1 0\n\nb 0 1\n")
        assert len(store) == 2


class TestCosine:
    def test_unit_cases(self):
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        assert cosine(e1, e1) == 1.0
        assert cosine(e1, e2) == 0.0
        assert cosine(e1, -e1) == -1.0

    def test_zero_norm_yields_zero(self):
        assert cosine(np.zeros(3), np.ones(3)) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine(np.ones(2), np.ones(3))

    def test_symmetry_and_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            u = rng.normal(size=6)
            v = rng.normal(size=6)
            scale = float(rng.uniform(0.1, 10.0))
            assert cosine(u, v) == pytest.approx(cosine(v, u), abs=1e-12)
            assert cosine(scale * u, v) == pytest.approx(cosine(u, v), abs=1e-12)


class TestNearest:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(29)
        words = [f"w{i}" for i in range(40)]
        matrix = rng.normal(size=(40, 5))
        lines = "".join(
            f"{w} " + " ".join(str(x) for x in row) + "\n" for w, row in zip(words, matrix)
        )
        store = make_store(lines)
        for query in ("w0", "w17", "w39"):
            qv = store.vector(query)
            brute = sorted(
                (
                    (-float(np.dot(qv, store.vector(w)))
                     / (np.linalg.norm(qv) * np.linalg.norm(store.vector(w))), w)
                    for w in words
                    if w != query
                ),
            )
            expected = [w for _, w in brute[:7]]
            assert nearest(store, query, 7) == expected

    def test_oov_query(self, toy_store):
        assert nearest(toy_store, "missing", 3) == []

    def test_saturates_at_vocabulary(self, toy_store):
        result = nearest(toy_store, "great", 50)
        assert sorted(result) == ["character", "fine", "one", "shaping"]
        assert result[0] == "fine"

    def test_lexicographic_tie_break(self):
        store = make_store("q 1 0\nbb 0 1\naa 0 1\ncc 0 1\n")
        assert nearest(store, "q", 3) == ["aa", "bb", "cc"]

    def test_m_validation(self, toy_store):
        with pytest.raises(ValueError):
            nearest(toy_store, "great", 0)


class TestSentenceEmbed:
    def test_all_oov(self, toy_store):
        emb = sentence_embed(toy_store, ["x", "y"])
        assert emb.coverage == 0.0
        np.testing.assert_array_equal(emb.vector, np.zeros(2))

    def test_single_covered_token(self, toy_store):
        emb = sentence_embed(toy_store, ["x", "great", "y", "z"])
        assert emb.coverage == 0.25
        np.testing.assert_array_equal(emb.vector, toy_store.vector("great"))

    def test_mean_of_two(self, toy_store):
        emb = sentence_embed(toy_store, ["great", "shaping"])
        expected = (toy_store.vector("great") + toy_store.vector("shaping")) / 2
        np.testing.assert_allclose(emb.vector, expected, atol=1e-15)
        assert emb.coverage == 1.0

    def test_mask_token_is_always_oov(self):
        store = make_store(f"a 1 0\n{MASK_TOKEN} 0 1\n")
        emb = sentence_embed(store, ["a", MASK_TOKEN])
        np.testing.assert_array_equal(emb.vector, store.vector("a"))
        assert emb.coverage == 0.5

    def test_permutation_invariant(self, toy_store):
        tokens = ["great", "one", "character"]
        forward = sentence_embed(toy_store, tokens).vector
        backward = sentence_embed(toy_store, tokens[::-1]).vector
        np.testing.assert_allclose(forward, backward, atol=1e-15)
