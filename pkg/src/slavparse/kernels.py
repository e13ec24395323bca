"""LSTM sequence kernels: the hot loops of every encoder pass.

One source of truth: the kernel bodies are plain numpy functions written
in a numba-compatible style. The numba backend jit-compiles exactly those
bodies, so both backends execute the same operation order and agree to
the last bit on the same platform.

Backend selection, in order: the ``SLAVPARSE_BACKEND`` environment
variable (``numba`` or ``numpy``), else numba when it imports, else
numpy. :func:`set_backend` switches at runtime (used by tests and the
benchmark). Compilation is deferred to the first call, so importing this
module stays cheap.

Weight layout for a cell with input size d_in and state size d_h:
``w`` is (4*d_h, d_in + d_h) with gate rows ordered input, forget,
output, candidate, acting on the concatenation [x, h_prev]; ``b`` is
(4*d_h,). Sigmoids are computed as 0.5*(1+tanh(z/2)), which never
overflows.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["lstm_forward", "lstm_backward", "available_backends",
           "get_backend", "set_backend"]


def _lstm_forward_impl(w, b, x):
    t_len = x.shape[0]
    d_in = x.shape[1]
    d_h = w.shape[0] // 4
    wx_t = np.ascontiguousarray(w[:, :d_in].T)   # (d_in, 4d_h)
    wh_t = np.ascontiguousarray(w[:, d_in:].T)   # (d_h, 4d_h)
    pre_x = np.dot(x, wx_t)
    h = np.zeros((t_len, d_h))
    c = np.zeros((t_len, d_h))
    gates = np.zeros((t_len, 4 * d_h))
    h_prev = np.zeros(d_h)
    c_prev = np.zeros(d_h)
    for t in range(t_len):
        pre = pre_x[t] + np.dot(h_prev, wh_t) + b
        gi = 0.5 * (1.0 + np.tanh(0.5 * pre[:d_h]))
        gf = 0.5 * (1.0 + np.tanh(0.5 * pre[d_h:2 * d_h]))
        go = 0.5 * (1.0 + np.tanh(0.5 * pre[2 * d_h:3 * d_h]))
        gc = np.tanh(pre[3 * d_h:])
        c_t = gf * c_prev + gi * gc
        h_t = go * np.tanh(c_t)
        gates[t, :d_h] = gi
        gates[t, d_h:2 * d_h] = gf
        gates[t, 2 * d_h:3 * d_h] = go
        gates[t, 3 * d_h:] = gc
        c[t] = c_t
        h[t] = h_t
        h_prev = h_t
        c_prev = c_t
    return h, c, gates


def _lstm_backward_impl(w, x, h, c, gates, dh_out):
    t_len = x.shape[0]
    d_in = x.shape[1]
    d_h = w.shape[0] // 4
    wx = np.ascontiguousarray(w[:, :d_in])
    wh = np.ascontiguousarray(w[:, d_in:])
    dpre_all = np.zeros((t_len, 4 * d_h))
    dh_carry = np.zeros(d_h)
    dc_carry = np.zeros(d_h)
    c_zero = np.zeros(d_h)
    for t in range(t_len - 1, -1, -1):
        gi = gates[t, :d_h]
        gf = gates[t, d_h:2 * d_h]
        go = gates[t, 2 * d_h:3 * d_h]
        gc = gates[t, 3 * d_h:]
        tc = np.tanh(c[t])
        dh_t = dh_out[t] + dh_carry
        dc_t = dc_carry + dh_t * go * (1.0 - tc * tc)
        if t > 0:
            c_prev = c[t - 1]
        else:
            c_prev = c_zero
        dpre_all[t, :d_h] = (dc_t * gc) * gi * (1.0 - gi)
        dpre_all[t, d_h:2 * d_h] = (dc_t * c_prev) * gf * (1.0 - gf)
        dpre_all[t, 2 * d_h:3 * d_h] = (dh_t * tc) * go * (1.0 - go)
        dpre_all[t, 3 * d_h:] = (dc_t * gi) * (1.0 - gc * gc)
        dh_carry = np.dot(dpre_all[t], wh)
        dc_carry = dc_t * gf
    dx = np.dot(dpre_all, wx)
    dpre_t = np.ascontiguousarray(dpre_all.T)
    dw = np.zeros_like(w)
    dw[:, :d_in] = np.dot(dpre_t, x)
    h_prev_all = np.zeros((t_len, d_h))
    h_prev_all[1:] = h[:t_len - 1]
    dw[:, d_in:] = np.dot(dpre_t, h_prev_all)
    db = np.sum(dpre_all, axis=0)
    return dx, dw, db


_numpy_fns = (_lstm_forward_impl, _lstm_backward_impl)
_numba_fns = None


def _compile_numba():
    global _numba_fns
    if _numba_fns is None:
        from numba import njit
        fwd = njit(cache=True)(_lstm_forward_impl)
        bwd = njit(cache=True)(_lstm_backward_impl)
        _numba_fns = (fwd, bwd)
    return _numba_fns


def available_backends() -> list[str]:
    out = ["numpy"]
    try:
        import numba  # noqa: F401
        out.insert(0, "numba")
    except ImportError:
        pass
    return out


def _default_backend() -> str:
    env = os.environ.get("SLAVPARSE_BACKEND", "").strip().lower()
    if env:
        if env not in ("numba", "numpy"):
            raise ValueError(
                f"SLAVPARSE_BACKEND must be 'numba' or 'numpy', got {env!r}")
        return env
    return available_backends()[0]


_backend = _default_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Switch kernel backend at runtime ('numba' or 'numpy')."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba":
        _compile_numba()  # fail now, not on the first training step
    _backend = name


def _fns():
    if _backend == "numba":
        return _compile_numba()
    return _numpy_fns


def lstm_forward(w: np.ndarray, b: np.ndarray,
                 x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run an LSTM over a (T, d_in) sequence from a zero initial state.

    Returns (h, c, gates): the per-step states (T, d_h) twice and the
    activated gate values (T, 4*d_h) the backward pass needs. Inputs in
    a dtype other than float64 (extended precision during gradient
    checking) always take the numpy path.
    """
    if w.dtype != np.float64 or x.dtype != np.float64:
        return _lstm_forward_impl(w, b, x)
    return _fns()[0](w, b, x)


def lstm_backward(w: np.ndarray, x: np.ndarray, h: np.ndarray, c: np.ndarray,
                  gates: np.ndarray, dh_out: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward pass matching :func:`lstm_forward`.

    ``dh_out`` is the loss gradient of every row of ``h``. Returns
    (dx, dw, db).
    """
    if w.dtype != np.float64 or x.dtype != np.float64:
        return _lstm_backward_impl(w, x, h, c, gates, dh_out)
    return _fns()[1](w, x, h, c, gates, dh_out)
