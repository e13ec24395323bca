"""Compare the numba and numpy LSTM kernel backends.

Times lstm_forward and the forward+backward pair on a few sequence
shapes, then one full joint-model sentence loss, on every backend
available in this environment. Numba's first call includes JIT
compilation, so each backend gets an untimed warmup.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from slavparse import kernels
from slavparse import neuralnet as nn
from slavparse.jointmodel import (
    ModelConfig,
    build_vocab,
    initialize_model,
    sentence_loss,
)
from slavparse.treebank import Sentence, Token, Treebank

# (sequence length, input size, hidden size): a char-LSTM-shaped case,
# a typical parse-layer sentence, and a long sentence at full width.
SHAPES = [(8, 50, 25), (30, 200, 128), (120, 200, 128)]


def time_call(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def make_sentence(n: int) -> Sentence:
    tokens = [Token(id=i, form=f"slovo{i}", upos="NOUN" if i % 2 else "VERB",
                    head=0 if i == 1 else 1,
                    deprel="root" if i == 1 else "dep")
              for i in range(1, n + 1)]
    return Sentence(tokens=tokens)


def bench_joint_loss(backend: str, repeats: int) -> float:
    kernels.set_backend(backend)
    sent = make_sentence(25)
    tb = Treebank([sent])
    config = ModelConfig(seed=5)
    model = initialize_model(config, build_vocab(tb, config))

    def loss_and_grad():
        tape = nn.Tape()
        model.params.zero_grads()
        loss = sentence_loss(model, sent, tape)
        nn.backward(loss, tape)

    loss_and_grad()  # warmup / compile
    return time_call(loss_and_grad, repeats)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repetitions per case (default 20)")
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends available: {', '.join(backends)}")
    if "numba" not in backends:
        print("numba is not importable here; timing numpy only")

    print("\nlstm_forward (best of repeats, milliseconds)")
    header = f"{'shape':<28}" + "".join(f"{b:>10}" for b in backends)
    print(header)
    per_backend: dict[str, list[float]] = {}
    for backend in backends:
        kernels.set_backend(backend)
        rng = np.random.default_rng(7)
        times = []
        for t_len, d_in, d_h in SHAPES:
            w = rng.normal(size=(4 * d_h, d_in + d_h))
            b = rng.normal(size=4 * d_h)
            x = rng.normal(size=(t_len, d_in))
            kernels.lstm_forward(w, b, x)  # warmup / compile
            times.append(time_call(lambda: kernels.lstm_forward(w, b, x),
                                   args.repeats))
        per_backend[backend] = times
    for i, (t_len, d_in, d_h) in enumerate(SHAPES):
        label = f"T={t_len} d_in={d_in} d_h={d_h}"
        cells = "".join(f"{per_backend[b][i] * 1e3:>10.3f}" for b in backends)
        print(f"{label:<28}{cells}")

    print("\nlstm_forward + lstm_backward (best of repeats, milliseconds)")
    print(header)
    for backend in backends:
        kernels.set_backend(backend)
        rng = np.random.default_rng(7)
        times = []
        for t_len, d_in, d_h in SHAPES:
            w = rng.normal(size=(4 * d_h, d_in + d_h))
            b = rng.normal(size=4 * d_h)
            x = rng.normal(size=(t_len, d_in))
            h, c, gates = kernels.lstm_forward(w, b, x)
            dh = rng.normal(size=h.shape)
            kernels.lstm_backward(w, x, h, c, gates, dh)  # warmup

            def roundtrip():
                hh, cc, gg = kernels.lstm_forward(w, b, x)
                kernels.lstm_backward(w, x, hh, cc, gg, dh)

            times.append(time_call(roundtrip, args.repeats))
        per_backend[backend] = times
    for i, (t_len, d_in, d_h) in enumerate(SHAPES):
        label = f"T={t_len} d_in={d_in} d_h={d_h}"
        cells = "".join(f"{per_backend[b][i] * 1e3:>10.3f}" for b in backends)
        print(f"{label:<28}{cells}")

    print("\njoint sentence loss + gradients, 25 tokens, default dims "
          "(best of repeats, milliseconds)")
    for backend in backends:
        ms = bench_joint_loss(backend, max(3, args.repeats // 4)) * 1e3
        print(f"{backend:>8}: {ms:.1f}")

    if len(backends) == 2:
        numba_t = per_backend["numba"]
        numpy_t = per_backend["numpy"]
        speedups = ", ".join(f"{numpy_t[i] / numba_t[i]:.1f}x"
                             for i in range(len(SHAPES)))
        print(f"\nnumba speedup on forward+backward per shape: {speedups}")


if __name__ == "__main__":
    main()
