"""Maximum spanning arborescence decoding with a single-root constraint.

Scores live in an (n+1) x (n+1) matrix whose entry (h, d) is the score
of attaching dependent d to head h; node 0 is the artificial root, the
diagonal and column 0 are never read. Decoding maximizes the total score
over arborescences rooted at node 0 in which exactly one token attaches
to the root, by Chu-Liu/Edmonds with recursive cycle contraction.

The single-root constraint is enforced exactly: when the unconstrained
optimum attaches several tokens to the root, every candidate root child
is tried with all other root arcs masked, and the best-scoring result
wins. Trying every candidate (not just the children of the unconstrained
optimum) is what makes the result agree with brute-force enumeration on
arbitrary inputs. Ties at every choice point resolve toward the lower
head index, then the lower dependent index.
"""

from __future__ import annotations

import numpy as np

__all__ = ["decode_tree"]

NEG_INF = -np.inf


def _find_cycle(best: np.ndarray, m: int) -> list[int] | None:
    """First cycle in the parent-pointer graph, or None. Node 0 is terminal."""
    state = np.zeros(m, dtype=np.int8)  # 0 unseen, 1 on path, 2 done
    state[0] = 2
    for start in range(1, m):
        if state[start]:
            continue
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = int(best[node])
        if state[node] == 1:
            cycle = path[path.index(node):]
            for v in path:
                state[v] = 2
            return cycle
        for v in path:
            state[v] = 2
    return None


def _greedy_heads(scores: np.ndarray) -> np.ndarray:
    m = scores.shape[0]
    best = np.zeros(m, dtype=np.intp)
    for d in range(1, m):
        col = scores[:, d].copy()
        col[d] = NEG_INF
        best[d] = int(np.argmax(col))  # argmax takes the lowest head on ties
    return best


def _chu_liu_edmonds(scores: np.ndarray) -> np.ndarray:
    """Unconstrained maximum arborescence; returns full head array (entry
    0 is unused). Recursively contracts one cycle at a time."""
    m = scores.shape[0]
    best = _greedy_heads(scores)
    cycle = _find_cycle(best, m)
    if cycle is None:
        return best

    in_cycle = np.zeros(m, dtype=bool)
    in_cycle[cycle] = True
    cycle_score = sum(scores[best[v], v] for v in cycle)
    keep = [v for v in range(m) if not in_cycle[v]]
    k = len(keep)

    reduced = np.full((k + 1, k + 1), NEG_INF)
    for i, u in enumerate(keep):
        for j, v in enumerate(keep):
            if i != j:
                reduced[i, j] = scores[u, v]
    # arcs leaving the cycle: best provider per outside dependent
    exit_choice = np.zeros(k, dtype=np.intp)
    for j, v in enumerate(keep):
        if v == 0:
            continue
        vals = scores[cycle, v]
        pick = int(np.argmax(vals))
        reduced[k, j] = vals[pick]
        exit_choice[j] = cycle[pick]
    # arcs entering the cycle: swapping in the arc u->c evicts the cycle's
    # own arc into c, so the gain is scores[u, c] - scores[best[c], c]
    enter_choice = np.zeros(k, dtype=np.intp)
    for i, u in enumerate(keep):
        gains = np.array([scores[u, c] - scores[best[c], c] for c in cycle])
        pick = int(np.argmax(gains))
        reduced[i, k] = cycle_score + gains[pick]
        enter_choice[i] = cycle[pick]

    sub = _chu_liu_edmonds(reduced)

    heads = np.zeros(m, dtype=np.intp)
    for j, v in enumerate(keep):
        if v == 0:
            continue
        h = sub[j]
        heads[v] = keep[h] if h < k else exit_choice[j]
    for c in cycle:
        heads[c] = best[c]
    entry_head = sub[k]  # always < k: nothing enters the supernode from itself
    heads[enter_choice[entry_head]] = keep[entry_head]
    return heads


def _tree_score(scores: np.ndarray, heads: np.ndarray) -> float:
    deps = np.arange(1, scores.shape[0])
    return float(scores[heads[1:], deps].sum())


def decode_tree(scores: np.ndarray) -> np.ndarray:
    """Best single-root arborescence; returns heads of tokens 1..n.

    An all-constant matrix decodes to the canonical tree [0, 1, 1, ...]:
    token 1 under the root and everything else under token 1.
    """
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValueError(f"scores must be square, got shape {scores.shape}")
    m = scores.shape[0]
    n = m - 1
    if n < 1:
        raise ValueError("cannot decode a sentence with no tokens")
    if n == 1:
        return np.array([0], dtype=np.intp)

    heads = _chu_liu_edmonds(scores)
    root_children = np.flatnonzero(heads[1:] == 0) + 1
    if len(root_children) != 1:
        best_heads = None
        best_score = NEG_INF
        for r in range(1, m):
            masked = scores.copy()
            masked[0, :] = NEG_INF
            masked[0, r] = scores[0, r]
            cand = _chu_liu_edmonds(masked)
            cand_score = _tree_score(masked, cand)
            if cand_score > best_score:  # ties keep the lower root child
                best_score = cand_score
                best_heads = cand
        if best_heads is None or not np.isfinite(best_score):
            raise ValueError("no feasible single-root tree under these scores")
        heads = best_heads
    elif not np.isfinite(_tree_score(scores, heads)):
        raise ValueError("no feasible single-root tree under these scores")
    return heads[1:].copy()
