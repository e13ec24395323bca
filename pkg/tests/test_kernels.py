"""LSTM sequence kernels: reference math, backends, gradients."""

import math

import numpy as np
import pytest

from slavparse import kernels
from slavparse.neuralnet import LstmParams, lstm_step


def random_cell(rng, d_in, d_h):
    w = rng.standard_normal((4 * d_h, d_in + d_h)) * 0.4
    b = rng.standard_normal(4 * d_h) * 0.1
    return w, b


class TestHandComputedCell:
    def test_single_step_scalar_math(self):
        # d_in=2, d_h=1, weights chosen by hand; expectation derived with
        # plain scalar math, independent of any vectorized code path.
        w = np.array([[0.1, 0.2, 0.3],     # input gate
                      [-0.2, 0.4, 0.1],    # forget gate
                      [0.3, -0.1, 0.2],    # output gate
                      [0.5, 0.5, -0.5]])   # candidate
        b = np.array([0.05, 1.0, -0.05, 0.1])
        x = np.array([0.7, -1.2])
        h0, c0 = np.array([0.3]), np.array([-0.6])

        def sig(z):
            return 1.0 / (1.0 + math.exp(-z))

        gi = sig(0.1 * 0.7 + 0.2 * -1.2 + 0.3 * 0.3 + 0.05)
        gf = sig(-0.2 * 0.7 + 0.4 * -1.2 + 0.1 * 0.3 + 1.0)
        go = sig(0.3 * 0.7 + -0.1 * -1.2 + 0.2 * 0.3 + -0.05)
        gc = math.tanh(0.5 * 0.7 + 0.5 * -1.2 + -0.5 * 0.3 + 0.1)
        c1 = gf * -0.6 + gi * gc
        h1 = go * math.tanh(c1)

        params = LstmParams(2, 1, w, b)
        h, c = lstm_step(params, x, (h0, c0))
        assert h[0] == pytest.approx(h1, abs=1e-12)
        assert c[0] == pytest.approx(c1, abs=1e-12)

    def test_zero_weights_zero_state_give_zero_output(self):
        params = LstmParams(3, 2, np.zeros((8, 5)), np.zeros(8))
        h, c = lstm_step(params, np.array([5.0, -2.0, 9.0]))
        assert np.all(h == 0.0) and np.all(c == 0.0)


class TestForwardAgainstStepwise:
    @pytest.mark.parametrize("backend", kernels.available_backends())
    def test_sequence_matches_iterated_steps(self, backend):
        rng = np.random.default_rng(5)
        w, b = random_cell(rng, 3, 4)
        x = rng.standard_normal((6, 3))
        params = LstmParams(3, 4, w, b)
        old = kernels.get_backend()
        kernels.set_backend(backend)
        try:
            h, c, gates = kernels.lstm_forward(w, b, x)
        finally:
            kernels.set_backend(old)
        state = None
        for t in range(6):
            state = lstm_step(params, x[t], state)
            np.testing.assert_allclose(h[t], state[0], rtol=0, atol=1e-14)
            np.testing.assert_allclose(c[t], state[1], rtol=0, atol=1e-14)
        assert gates.shape == (6, 16)

    def test_backends_agree(self):
        if "numba" not in kernels.available_backends():
            pytest.skip("numba not installed")
        rng = np.random.default_rng(11)
        w, b = random_cell(rng, 5, 7)
        x = rng.standard_normal((9, 5))
        old = kernels.get_backend()
        try:
            kernels.set_backend("numpy")
            h1, c1, g1 = kernels.lstm_forward(w, b, x)
            dh = rng.standard_normal(h1.shape)
            dx1, dw1, db1 = kernels.lstm_backward(w, x, h1, c1, g1, dh)
            kernels.set_backend("numba")
            h2, c2, g2 = kernels.lstm_forward(w, b, x)
            dx2, dw2, db2 = kernels.lstm_backward(w, x, h2, c2, g2, dh)
        finally:
            kernels.set_backend(old)
        np.testing.assert_allclose(h1, h2, rtol=0, atol=1e-13)
        np.testing.assert_allclose(dx1, dx2, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(dw1, dw2, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(db1, db2, rtol=1e-12, atol=1e-13)


class TestBackwardFiniteDifference:
    @pytest.mark.parametrize("backend", kernels.available_backends())
    def test_all_inputs(self, backend):
        rng = np.random.default_rng(3)
        d_in, d_h, t_len = 3, 2, 4
        w, b = random_cell(rng, d_in, d_h)
        x = rng.standard_normal((t_len, d_in))
        proj = rng.standard_normal((t_len, d_h))  # random loss direction

        def loss(w_, b_, x_):
            h, _, _ = kernels.lstm_forward(w_, b_, x_)
            return float((h * proj).sum())

        old = kernels.get_backend()
        kernels.set_backend(backend)
        try:
            h, c, gates = kernels.lstm_forward(w, b, x)
            dx, dw, db = kernels.lstm_backward(w, x, h, c, gates, proj)
            eps = 1e-6
            for arr, grad in ((w, dw), (b, db), (x, dx)):
                flat = arr.reshape(-1)
                gflat = grad.reshape(-1)
                for k in range(flat.size):
                    orig = flat[k]
                    flat[k] = orig + eps
                    fp = loss(w, b, x)
                    flat[k] = orig - eps
                    fm = loss(w, b, x)
                    flat[k] = orig
                    fd = (fp - fm) / (2 * eps)
                    rel = abs(gflat[k] - fd) / max(1e-8, abs(gflat[k]) + abs(fd))
                    assert rel < 1e-4
        finally:
            kernels.set_backend(old)


class TestBackendSelection:
    def test_env_flag_numpy(self, monkeypatch):
        monkeypatch.setenv("SLAVPARSE_BACKEND", "numpy")
        assert kernels._default_backend() == "numpy"

    def test_env_flag_invalid(self, monkeypatch):
        monkeypatch.setenv("SLAVPARSE_BACKEND", "cuda")
        with pytest.raises(ValueError, match="SLAVPARSE_BACKEND"):
            kernels._default_backend()

    def test_set_backend_unknown(self):
        with pytest.raises(ValueError, match="unknown backend"):
            kernels.set_backend("tensorflow")

    def test_roundtrip_switch(self):
        old = kernels.get_backend()
        try:
            kernels.set_backend("numpy")
            assert kernels.get_backend() == "numpy"
        finally:
            kernels.set_backend(old)
