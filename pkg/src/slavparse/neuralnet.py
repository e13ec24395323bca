"""Minimal reverse-mode autodiff and the blocks the joint model is made of.

The engine is a tape: every operation appends one backward closure, and
:func:`backward` runs the tape in reverse. Values are
:class:`Node` objects wrapping float64 arrays; trainable leaves live in a
:class:`ParamStore` and enter a graph via :func:`use`, which aliases the
node gradient to the parameter gradient so accumulation is automatic.

Coarse-grained operations keep the tape short: an LSTM over a whole
sequence is a single op (backed by :mod:`slavparse.kernels`), and the
all-pairs arc scorer is a single op with a handwritten backward. Every
composition used by the joint model is validated against central finite
differences through :func:`grad_check`.

Passing ``tape=None`` to any op runs plain forward computation with no
recording, which is both the inference path and the finite-difference
path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Node", "Tape", "Param", "ParamStore", "use", "backward",
    "lookup", "gather_rows", "row", "vcat", "hstack", "prepend_row",
    "lstm_seq", "affine", "tanh", "pairwise_arc_scores",
    "softmax_xent", "hinge_on_trees", "add_scalars",
    "glorot_uniform", "LstmParams", "MlpParams",
    "lstm_step", "bilstm_run", "adam_update", "grad_check",
]


class Node:
    """A value in the computation graph: float64 data plus a gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray, grad: np.ndarray | None = None):
        self.data = data
        self.grad = grad if grad is not None else np.zeros_like(data)


class Tape:
    """Backward closures in creation order, run in reverse by backward()."""

    __slots__ = ("_ops",)

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def record(self, fn: Callable[[], None]) -> None:
        self._ops.append(fn)

    def run_backward(self) -> None:
        for fn in reversed(self._ops):
            fn()


def backward(loss: Node, tape: Tape) -> None:
    """Seed the scalar loss gradient with 1 and run the tape."""
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad[...] = 1.0
    tape.run_backward()


class Param:
    """A named trainable array with its gradient and Adam state."""

    __slots__ = ("name", "data", "grad", "m", "v", "step")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


class ParamStore:
    """Ordered collection of named parameters."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, data: np.ndarray) -> Param:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        p = Param(name, data)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def names(self) -> list[str]:
        return list(self._params)

    def n_entries(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def grads(self) -> dict[str, np.ndarray]:
        return {name: p.grad for name, p in self._params.items()}

    def check_finite(self) -> None:
        for name, p in self._params.items():
            if not np.all(np.isfinite(p.data)):
                raise FloatingPointError(f"parameter {name!r} is not finite")


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# Tape operations. Every op takes the tape first; tape=None records nothing.

def use(param: Param) -> Node:
    """Wrap a parameter as a graph node; its gradient aliases param.grad."""
    return Node(param.data, param.grad)


def lookup(tape: Tape | None, table: Node, idx: np.ndarray) -> Node:
    """Select rows of an embedding table: out[k] = table[idx[k]]."""
    idx = np.asarray(idx, dtype=np.intp)
    out = Node(table.data[idx])
    if tape is not None:
        def back():
            np.add.at(table.grad, idx, out.grad)
        tape.record(back)
    return out


def gather_rows(tape: Tape | None, x: Node, idx: np.ndarray) -> Node:
    """Same as lookup but for intermediate matrices (duplicates allowed)."""
    return lookup(tape, x, idx)


def row(tape: Tape | None, x: Node, i: int) -> Node:
    """One row of a matrix as a (1, d) node."""
    out = Node(x.data[i:i + 1])
    if tape is not None:
        def back():
            x.grad[i:i + 1] += out.grad
        tape.record(back)
    return out


def vcat(tape: Tape | None, parts: Sequence[Node]) -> Node:
    """Stack nodes along axis 0."""
    out = Node(np.concatenate([p.data for p in parts], axis=0))
    if tape is not None:
        sizes = [p.data.shape[0] for p in parts]
        def back():
            start = 0
            for p, size in zip(parts, sizes):
                p.grad += out.grad[start:start + size]
                start += size
        tape.record(back)
    return out


def hstack(tape: Tape | None, parts: Sequence[Node]) -> Node:
    """Concatenate nodes along axis 1."""
    out = Node(np.concatenate([p.data for p in parts], axis=1))
    if tape is not None:
        widths = [p.data.shape[1] for p in parts]
        def back():
            start = 0
            for p, width in zip(parts, widths):
                p.grad += out.grad[:, start:start + width]
                start += width
        tape.record(back)
    return out


def prepend_row(tape: Tape | None, first: Node, x: Node) -> Node:
    """Put a (1, d) node in front of a (T, d) node."""
    out = Node(np.concatenate([first.data, x.data], axis=0))
    if tape is not None:
        def back():
            first.grad += out.grad[:1]
            x.grad += out.grad[1:]
        tape.record(back)
    return out


def lstm_seq(tape: Tape | None, w: Node, b: Node, x: Node,
             reverse: bool = False) -> Node:
    """LSTM over a (T, d_in) sequence; one tape op backed by the kernels.

    With ``reverse=True`` the sequence is processed right to left and the
    outputs are re-aligned to input positions, so out[t] always describes
    position t.
    """
    xv = x.data[::-1] if reverse else x.data
    xv = np.ascontiguousarray(xv)
    h, c, gates = kernels.lstm_forward(w.data, b.data, xv)
    out = Node(h[::-1].copy() if reverse else h)
    if tape is not None:
        def back():
            dh = out.grad[::-1] if reverse else out.grad
            dx, dw, db = kernels.lstm_backward(
                w.data, xv, h, c, gates, np.ascontiguousarray(dh))
            w.grad += dw
            b.grad += db
            x.grad += dx[::-1] if reverse else dx
        tape.record(back)
    return out


def affine(tape: Tape | None, x: Node, w: Node, b: Node | None) -> Node:
    """x @ w.T (+ b): x is (T, d_in), w is (d_out, d_in), b is (d_out,)."""
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data
    out = Node(y)
    if tape is not None:
        def back():
            w.grad += out.grad.T @ x.data
            x.grad += out.grad @ w.data
            if b is not None:
                b.grad += out.grad.sum(axis=0)
        tape.record(back)
    return out


def tanh(tape: Tape | None, x: Node) -> Node:
    out = Node(np.tanh(x.data))
    if tape is not None:
        def back():
            x.grad += out.grad * (1.0 - out.data * out.data)
        tape.record(back)
    return out


def pairwise_arc_scores(tape: Tape | None, states: Node, w1: Node, b1: Node,
                        w2: Node, b2: Node) -> Node:
    """Score every (head, dependent) pair of encoder states in one op.

    states is (m, d); w1 is (d_mlp, 2d) over the concatenation
    [state_head, state_dep]; w2 is (d_mlp,), b2 is (1,). Returns the
    (m, m) matrix score[h, d] = w2 . tanh(w1 @ [s_h, s_d] + b1) + b2.
    The split of w1 into head and dependent halves turns the m*m MLP
    evaluations into two (m, d_mlp) products plus broadcasting.
    """
    m, d = states.data.shape
    w1h = w1.data[:, :d]
    w1d = w1.data[:, d:]
    ah = states.data @ w1h.T                      # (m, d_mlp)
    ad = states.data @ w1d.T + b1.data            # (m, d_mlp)
    hid = np.tanh(ah[:, None, :] + ad[None, :, :])  # (m, m, d_mlp)
    out = Node(hid @ w2.data + b2.data[0])
    if tape is not None:
        def back():
            g = out.grad                                        # (m, m)
            dhid = g[:, :, None] * w2.data * (1.0 - hid * hid)  # (m, m, d_mlp)
            dah = dhid.sum(axis=1)                              # (m, d_mlp)
            dad = dhid.sum(axis=0)
            w2.grad += np.einsum("hdk,hd->k", hid, g)
            b2.grad += g.sum(keepdims=True).reshape(1)
            b1.grad += dad.sum(axis=0)
            w1.grad[:, :d] += dah.T @ states.data
            w1.grad[:, d:] += dad.T @ states.data
            states.grad += dah @ w1h + dad @ w1d
        tape.record(back)
    return out


def softmax_xent(tape: Tape | None, scores: Node, gold: np.ndarray) -> Node:
    """Summed cross-entropy of softmax rows against gold class indices."""
    gold = np.asarray(gold, dtype=np.intp)
    z = scores.data - scores.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    losses = lse - z[np.arange(len(gold)), gold]
    out = Node(np.asarray(losses.sum()))
    if tape is not None:
        probs = np.exp(z - lse[:, None])
        def back():
            g = float(out.grad)
            d = probs.copy()
            d[np.arange(len(gold)), gold] -= 1.0
            scores.grad += g * d
        tape.record(back)
    return out


def hinge_on_trees(tape: Tape | None, arc_scores: Node,
                   pred_heads: np.ndarray, gold_heads: np.ndarray) -> Node:
    """Structured hinge max(0, score(pred) + cost(pred) - score(gold)).

    ``pred_heads`` must be the decode of the cost-augmented matrix; the
    cost is the number of non-gold arcs in it. When the margin is
    positive, the subgradient is +1 on predicted arcs and -1 on gold
    arcs (shared arcs cancel).
    """
    pred_heads = np.asarray(pred_heads, dtype=np.intp)
    gold_heads = np.asarray(gold_heads, dtype=np.intp)
    deps = np.arange(1, len(gold_heads) + 1)
    cost = float(np.sum(pred_heads != gold_heads))
    margin = (arc_scores.data[pred_heads, deps].sum() + cost
              - arc_scores.data[gold_heads, deps].sum())
    if margin <= 0.0:
        return Node(np.asarray(0.0))
    out = Node(np.asarray(margin))
    if tape is not None:
        def back():
            g = float(out.grad)
            np.add.at(arc_scores.grad, (pred_heads, deps), g)
            np.add.at(arc_scores.grad, (gold_heads, deps), -g)
        tape.record(back)
    return out


def add_scalars(tape: Tape | None, terms: Sequence[Node]) -> Node:
    """Sum of scalar nodes."""
    total = terms[0].data
    for t in terms[1:]:
        total = total + t.data
    out = Node(np.asarray(total))
    if tape is not None:
        def back():
            for t in terms:
                t.grad += out.grad
        tape.record(back)
    return out


# ---------------------------------------------------------------------------
# Plain (non-tape) building blocks: single cells, inference helpers.

@dataclass
class LstmParams:
    """Fused LSTM cell weights; rows of w are the i, f, o, g gate blocks."""

    d_in: int
    d_h: int
    w: np.ndarray  # (4*d_h, d_in + d_h)
    b: np.ndarray  # (4*d_h,)

    def __post_init__(self):
        if self.w.shape != (4 * self.d_h, self.d_in + self.d_h):
            raise ValueError(f"w has shape {self.w.shape}, expected "
                             f"{(4 * self.d_h, self.d_in + self.d_h)}")
        if self.b.shape != (4 * self.d_h,):
            raise ValueError(f"b has shape {self.b.shape}")

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, d_h: int,
               forget_bias: float = 1.0) -> "LstmParams":
        w = glorot_uniform(rng, (4 * d_h, d_in + d_h), d_in + d_h, d_h)
        b = np.zeros(4 * d_h)
        b[d_h:2 * d_h] = forget_bias
        return cls(d_in, d_h, w, b)

    def _gate(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return (self.w[k * self.d_h:(k + 1) * self.d_h],
                self.b[k * self.d_h:(k + 1) * self.d_h])

    @property
    def input_gate(self):
        return self._gate(0)

    @property
    def forget_gate(self):
        return self._gate(1)

    @property
    def output_gate(self):
        return self._gate(2)

    @property
    def cell_gate(self):
        return self._gate(3)


def lstm_step(params: LstmParams, x: np.ndarray,
              state: tuple[np.ndarray, np.ndarray] | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step; the reference the sequence kernels are tested against."""
    d_h = params.d_h
    if state is None:
        h_prev = np.zeros(d_h)
        c_prev = np.zeros(d_h)
    else:
        h_prev, c_prev = state
    pre = params.w @ np.concatenate([x, h_prev]) + params.b
    gi = 0.5 * (1.0 + np.tanh(0.5 * pre[:d_h]))
    gf = 0.5 * (1.0 + np.tanh(0.5 * pre[d_h:2 * d_h]))
    go = 0.5 * (1.0 + np.tanh(0.5 * pre[2 * d_h:3 * d_h]))
    gc = np.tanh(pre[3 * d_h:])
    c_t = gf * c_prev + gi * gc
    h_t = go * np.tanh(c_t)
    return h_t, c_t


def bilstm_run(fwd: LstmParams, bwd: LstmParams,
               seq: Sequence[np.ndarray] | np.ndarray) -> list[np.ndarray]:
    """Run a BiLSTM over a sequence; output t is [fwd state; bwd state]."""
    x = np.asarray(seq, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("bilstm_run needs a non-empty (T, d_in) sequence")
    hf, _, _ = kernels.lstm_forward(fwd.w, fwd.b, np.ascontiguousarray(x))
    hb, _, _ = kernels.lstm_forward(bwd.w, bwd.b, np.ascontiguousarray(x[::-1]))
    hb = hb[::-1]
    return [np.concatenate([hf[t], hb[t]]) for t in range(x.shape[0])]


@dataclass
class MlpParams:
    """One-hidden-layer MLP with tanh: w2 @ tanh(w1 @ x + b1) + b2."""

    d_in: int
    d_hidden: int
    d_out: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, d_hidden: int,
               d_out: int) -> "MlpParams":
        return cls(
            d_in, d_hidden, d_out,
            w1=glorot_uniform(rng, (d_hidden, d_in), d_in, d_hidden),
            b1=np.zeros(d_hidden),
            w2=glorot_uniform(rng, (d_out, d_hidden), d_hidden, d_out),
            b2=np.zeros(d_out),
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.w1.T + self.b1) @ self.w2.T + self.b2


# ---------------------------------------------------------------------------
# Optimization and gradient checking.

def adam_update(store: ParamStore, grads: dict[str, np.ndarray],
                lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> ParamStore:
    """One Adam step with bias correction, applied in place."""
    for param in store:
        if param.name not in grads:
            raise KeyError(f"no gradient supplied for {param.name!r}")
        g = grads[param.name]
        if g.shape != param.data.shape:
            raise ValueError(
                f"gradient for {param.name!r} has shape {g.shape}, "
                f"expected {param.data.shape}")
        param.step += 1
        param.m = beta1 * param.m + (1.0 - beta1) * g
        param.v = beta2 * param.v + (1.0 - beta2) * (g * g)
        m_hat = param.m / (1.0 - beta1 ** param.step)
        v_hat = param.v / (1.0 - beta2 ** param.step)
        param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return store


def grad_check(build_loss: Callable[[Tape | None], Node], store: ParamStore,
               eps: float = 1e-5) -> float:
    """Compare tape gradients against central finite differences.

    ``build_loss(tape)`` must construct the scalar loss over the store's
    parameters, making identical stochastic choices on every call. Every
    parameter entry is perturbed. Returns the maximum relative error
    |g - g_fd| / max(1e-8, |g| + |g_fd|).

    The check runs in extended precision (long double) so that
    finite-difference roundoff stays below the 1e-8 denominator floor
    even where the true gradient is zero; parameters are restored to
    float64 afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    saved = [(p, p.data, p.grad) for p in store]
    try:
        for p in store:
            p.data = p.data.astype(np.longdouble)
            p.grad = np.zeros_like(p.data)
        tape = Tape()
        loss = build_loss(tape)
        backward(loss, tape)
        analytic = {p.name: p.grad.copy() for p in store}
        for name, g in analytic.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"gradient of {name!r} is not finite")

        worst = np.longdouble(0.0)
        floor = np.longdouble(1e-8)
        for param in store:
            flat = param.data.reshape(-1)
            g_flat = analytic[param.name].reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                f_plus = build_loss(None).data
                flat[k] = orig - eps
                f_minus = build_loss(None).data
                flat[k] = orig
                fd = (f_plus - f_minus) / (2.0 * np.longdouble(eps))
                if not np.isfinite(fd):
                    raise FloatingPointError(
                        f"finite difference for {param.name!r}[{k}] is not finite")
                rel = abs(g_flat[k] - fd) / max(floor, abs(g_flat[k]) + abs(fd))
                if rel > worst:
                    worst = rel
        return float(worst)
    finally:
        for p, data, grad in saved:
            p.data = data
            p.grad = grad
