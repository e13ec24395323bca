"""Decoder tests against an exhaustive single-root arborescence oracle.

The oracle lives in conftest (the acceptance gate reuses it); it is
independent of the Chu-Liu/Edmonds machinery under test.
"""

import numpy as np
import pytest

from conftest import assert_valid_tree, oracle_best_score, tree_score
from slavparse.decoder import decode_tree

rng = np.random.default_rng(20240817)


class TestKnownCases:
    def test_worked_three_token_example(self):
        neg = -np.inf
        scores = np.array(
            [
                [neg, 10.0, 10.0, 0.0],
                [neg, neg, 9.0, 8.0],
                [neg, 9.0, neg, 8.0],
                [neg, neg, neg, neg],
            ]
        )
        heads = decode_tree(scores)
        assert heads.tolist() == [0, 1, 1]
        assert tree_score(scores, heads) == 27.0

    def test_single_token(self):
        assert decode_tree(np.zeros((2, 2))).tolist() == [0]

    def test_no_tokens_rejected(self):
        with pytest.raises(ValueError):
            decode_tree(np.zeros((1, 1)))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            decode_tree(np.zeros((3, 4)))

    def test_constant_matrix_gives_canonical_tree(self):
        for n in range(1, 7):
            heads = decode_tree(np.zeros((n + 1, n + 1)))
            assert heads.tolist() == [0] + [1] * (n - 1)

    def test_infeasible_matrix_rejected(self):
        scores = np.full((4, 4), -np.inf)
        with pytest.raises(ValueError, match="feasible"):
            decode_tree(scores)

    def test_strong_cycle_is_broken(self):
        # tokens 1 and 2 prefer each other overwhelmingly; the decoder
        # must still produce a tree reaching both from the root
        neg = -np.inf
        scores = np.array(
            [
                [neg, 1.0, 1.0],
                [neg, neg, 100.0],
                [neg, 100.0, neg],
            ]
        )
        heads = decode_tree(scores)
        assert_valid_tree(heads)
        assert tree_score(scores, heads) == oracle_best_score(scores)
        assert heads.tolist() == [0, 1]  # ties fall to the lower variant


class TestOracleAgreement:
    def test_gaussian_matrices(self):
        for trial in range(120):
            n = int(rng.integers(1, 7))
            scores = rng.normal(size=(n + 1, n + 1))
            heads = decode_tree(scores)
            assert_valid_tree(heads)
            assert tree_score(scores, heads) == oracle_best_score(scores)

    def test_tie_heavy_integer_matrices(self):
        # small integer ranges force frequent exact ties and cycles
        for trial in range(120):
            n = int(rng.integers(2, 7))
            scores = rng.integers(0, 3, size=(n + 1, n + 1)).astype(float)
            heads = decode_tree(scores)
            assert_valid_tree(heads)
            assert tree_score(scores, heads) == oracle_best_score(scores)

    def test_matrices_with_masked_arcs(self):
        # with a third of the arcs at -inf some draws have no feasible
        # single-root tree at all; the decoder must agree with the oracle
        # on those too, by raising instead of returning a bogus tree
        feasible = infeasible = 0
        for trial in range(60):
            n = int(rng.integers(2, 7))
            scores = rng.normal(size=(n + 1, n + 1))
            mask = rng.random(size=scores.shape) < 0.33
            mask[0, :] = False
            scores[mask] = -np.inf
            best = oracle_best_score(scores)
            if np.isfinite(best):
                heads = decode_tree(scores)
                assert_valid_tree(heads)
                assert tree_score(scores, heads) == best
                feasible += 1
            else:
                with pytest.raises(ValueError, match="feasible"):
                    decode_tree(scores)
                infeasible += 1
        assert feasible > 0 and infeasible > 0, "both branches must be hit"


class TestDeterminism:
    def test_repeat_decoding_is_identical(self):
        for trial in range(20):
            n = int(rng.integers(2, 7))
            scores = rng.integers(0, 2, size=(n + 1, n + 1)).astype(float)
            first = decode_tree(scores)
            for _ in range(3):
                assert decode_tree(scores).tolist() == first.tolist()

    def test_column_shift_leaves_tree_unchanged(self):
        for trial in range(40):
            n = int(rng.integers(2, 7))
            scores = rng.normal(size=(n + 1, n + 1))
            base = decode_tree(scores)
            d = int(rng.integers(1, n + 1))
            shifted = scores.copy()
            shifted[:, d] += float(rng.normal() * 10)
            assert decode_tree(shifted).tolist() == base.tolist()

    def test_input_matrix_not_mutated(self):
        scores = rng.normal(size=(5, 5))
        copy = scores.copy()
        decode_tree(scores)
        assert np.array_equal(scores, copy)
