"""Shared helpers: synthetic treebanks and the exhaustive tree oracle."""

from __future__ import annotations

import numpy as np
import pytest

from slavparse.treebank import Sentence, Token, Treebank


def make_sentence(n: int, sent_id: str = "", label: str = "") -> Sentence:
    """A valid n-token sentence: token 1 is the root, the rest chain left."""
    tokens = [
        Token(id=i, form=f"w{i}", lemma=f"w{i}", upos="NOUN",
              head=0 if i == 1 else i - 1, deprel="root" if i == 1 else "dep")
        for i in range(1, n + 1)
    ]
    comments = [f"# sent_id = {sent_id}"] if sent_id else []
    return Sentence(tokens=tokens, comments=comments, source_label=label)


def make_treebank(lengths: list[int], label: str = "") -> Treebank:
    return Treebank([make_sentence(n, sent_id=f"s{i}", label=label)
                     for i, n in enumerate(lengths, 1)])


@pytest.fixture
def fixtures_dir(request):
    return request.path.parent / "fixtures"


# Ten short sentences over a tiny closed vocabulary. Every form occurs
# at least twice, so with the default unk_threshold of 1 no word is
# eligible for stochastic UNK replacement and overfitting is clean.
_TOY_ROWS = [
    [("kotu", "NOUN", 2, "nsubj"), ("spitu", "VERB", 0, "root")],
    [("pisu", "NOUN", 2, "nsubj"), ("bezitu", "VERB", 0, "root")],
    [("kotu", "NOUN", 2, "nsubj"), ("viditu", "VERB", 0, "root"),
     ("pisa", "NOUN", 2, "obj")],
    [("pisu", "NOUN", 2, "nsubj"), ("viditu", "VERB", 0, "root"),
     ("kota", "NOUN", 2, "obj")],
    [("malu", "ADJ", 2, "amod"), ("kotu", "NOUN", 3, "nsubj"),
     ("spitu", "VERB", 0, "root")],
    [("malu", "ADJ", 2, "amod"), ("pisu", "NOUN", 3, "nsubj"),
     ("bezitu", "VERB", 0, "root")],
    [("kotu", "NOUN", 2, "nsubj"), ("spitu", "VERB", 0, "root"),
     ("vu", "ADP", 4, "case"), ("dome", "NOUN", 2, "obl")],
    [("pisu", "NOUN", 2, "nsubj"), ("bezitu", "VERB", 0, "root"),
     ("vu", "ADP", 4, "case"), ("dome", "NOUN", 2, "obl")],
    [("zena", "NOUN", 2, "nsubj"), ("viditu", "VERB", 0, "root"),
     ("kota", "NOUN", 2, "obj"), ("i", "CCONJ", 5, "cc"),
     ("pisa", "NOUN", 3, "conj")],
    [("zena", "NOUN", 2, "nsubj"), ("viditu", "VERB", 0, "root"),
     ("pisa", "NOUN", 2, "obj"), ("i", "CCONJ", 5, "cc"),
     ("kota", "NOUN", 3, "conj")],
]


def toy_corpus() -> Treebank:
    """The overfitting corpus: 10 sentences, 34 tokens, 12 word types."""
    sentences = []
    for s_i, rows in enumerate(_TOY_ROWS, 1):
        tokens = [
            Token(id=t_i, form=form, lemma=form, upos=upos, head=head,
                  deprel=deprel)
            for t_i, (form, upos, head, deprel) in enumerate(rows, 1)
        ]
        comments = [f"# sent_id = toy-{s_i}"]
        sentences.append(Sentence(tokens=tokens, comments=comments,
                                  source_label="toy"))
    return Treebank(sentences=sentences)


# ---------------------------------------------------------------------------
# Exhaustive single-root arborescence oracle, independent of the decoder
# under test. The oracle enumerates every head vector for n tokens (head
# of token d is a value in 0..n, d itself excluded), keeps the vectors
# with exactly one root child and no cycles, and scores them by gather.


def all_single_root_trees(n: int) -> np.ndarray:
    """All valid head vectors for n tokens, shape (T, n)."""
    if n == 1:
        return np.zeros((1, 1), dtype=np.intp)
    grids = np.meshgrid(*([np.arange(n + 1)] * n), indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=1)
    deps = np.arange(1, n + 1)
    keep = np.all(cand != deps, axis=1)
    keep &= (cand == 0).sum(axis=1) == 1
    cand = cand[keep]
    # follow parent pointers n times; acyclic vectors all land on 0
    ptr = cand.copy()
    for _ in range(n):
        idx = np.clip(ptr - 1, 0, n - 1)
        ptr = np.where(ptr == 0, 0, np.take_along_axis(cand, idx, axis=1))
    return cand[np.all(ptr == 0, axis=1)]


_TREES = {n: all_single_root_trees(n) for n in range(1, 7)}


def oracle_best_score(scores: np.ndarray) -> float:
    n = scores.shape[0] - 1
    trees = _TREES[n]
    deps = np.arange(1, n + 1)
    totals = scores[trees, deps].sum(axis=1)
    return float(totals.max())


def tree_score(scores: np.ndarray, heads: np.ndarray) -> float:
    deps = np.arange(1, len(heads) + 1)
    return float(scores[heads, deps].sum())


def assert_valid_tree(heads: np.ndarray) -> None:
    n = len(heads)
    assert np.all((heads >= 0) & (heads <= n))
    assert np.all(heads != np.arange(1, n + 1)), "self-headed token"
    assert (heads == 0).sum() == 1, "must have exactly one root child"
    for d in range(1, n + 1):
        seen = set()
        node = d
        while node != 0:
            assert node not in seen, f"cycle through token {d}"
            seen.add(node)
            node = int(heads[node - 1])
