"""Autodiff engine, optimizer, and gradient checking."""

import numpy as np
import pytest

from slavparse import neuralnet as nn


def store_with(rng, specs):
    store = nn.ParamStore()
    for name, shape in specs.items():
        store.add(name, rng.standard_normal(shape) * 0.5)
    return store


class TestTapeOps:
    """Each composition is validated against central finite differences."""

    def check(self, build, store, bound=1e-4):
        assert nn.grad_check(build, store, eps=1e-6) < bound

    def test_affine_tanh_chain(self):
        rng = np.random.default_rng(0)
        store = store_with(rng, {"w": (4, 3), "b": (4,), "v": (2, 4), "c": (2,)})
        x = rng.standard_normal((5, 3))

        def build(tape):
            h = nn.tanh(tape, nn.affine(tape, nn.Node(x.copy()),
                                        nn.use(store["w"]), nn.use(store["b"])))
            y = nn.affine(tape, h, nn.use(store["v"]), nn.use(store["c"]))
            return nn.softmax_xent(tape, y, np.array([1, 0, 1, 1, 0]))

        self.check(build, store)

    def test_lookup_concat_lstm(self):
        rng = np.random.default_rng(1)
        store = store_with(rng, {
            "emb": (6, 3),
            "w": (8, 5),   # lstm d_in=3, d_h=2
            "b": (8,),
            "out": (3, 2),
        })
        idx = np.array([4, 0, 5, 2])

        def build(tape):
            x = nn.lookup(tape, nn.use(store["emb"]), idx)
            h = nn.lstm_seq(tape, nn.use(store["w"]), nn.use(store["b"]), x)
            y = nn.affine(tape, h, nn.use(store["out"]), None)
            return nn.softmax_xent(tape, y, np.array([0, 2, 1, 0]))

        self.check(build, store)

    def test_reversed_lstm_and_row_ops(self):
        rng = np.random.default_rng(2)
        store = store_with(rng, {
            "emb": (5, 3), "wf": (8, 5), "bf": (8,), "wb": (8, 5), "bb": (8,),
            "root": (1, 4), "out": (2, 4),
        })
        idx = np.array([1, 3, 0])

        def build(tape):
            x = nn.lookup(tape, nn.use(store["emb"]), idx)
            hf = nn.lstm_seq(tape, nn.use(store["wf"]), nn.use(store["bf"]), x)
            hb = nn.lstm_seq(tape, nn.use(store["wb"]), nn.use(store["bb"]), x,
                             reverse=True)
            states = nn.hstack(tape, [hf, hb])
            states = nn.prepend_row(tape, nn.use(store["root"]), states)
            picked = nn.gather_rows(tape, states, np.array([0, 2, 2, 3]))
            y = nn.affine(tape, picked, nn.use(store["out"]), None)
            return nn.softmax_xent(tape, y, np.array([0, 1, 1, 0]))

        self.check(build, store)

    def test_pairwise_arc_scores(self):
        rng = np.random.default_rng(3)
        store = store_with(rng, {
            "s": (4, 3), "w1": (5, 6), "b1": (5,), "w2": (5,), "b2": (1,),
        })
        # hinge on a fixed pred/gold pair keeps the test deterministic
        gold = np.array([0, 1, 2])
        pred = np.array([2, 0, 1])

        def build(tape):
            scores = nn.pairwise_arc_scores(
                tape, nn.use(store["s"]), nn.use(store["w1"]),
                nn.use(store["b1"]), nn.use(store["w2"]), nn.use(store["b2"]))
            return nn.hinge_on_trees(tape, scores, pred, gold)

        self.check(build, store)

    def test_vcat_row_add_scalars(self):
        rng = np.random.default_rng(4)
        store = store_with(rng, {"a": (2, 3), "b": (1, 3), "out": (2, 3)})

        def build(tape):
            stacked = nn.vcat(tape, [nn.use(store["a"]), nn.use(store["b"])])
            r = nn.row(tape, stacked, 1)
            y1 = nn.affine(tape, r, nn.use(store["out"]), None)
            y2 = nn.affine(tape, stacked, nn.use(store["out"]), None)
            l1 = nn.softmax_xent(tape, y1, np.array([0]))
            l2 = nn.softmax_xent(tape, y2, np.array([1, 0, 1]))
            return nn.add_scalars(tape, [l1, l2])

        self.check(build, store)

    def test_random_battery(self):
        # ten random configurations of the full encoder-scorer composition,
        # dims <= 8, sequences <= 5 tokens
        for trial in range(10):
            rng = np.random.default_rng(100 + trial)
            n = int(rng.integers(1, 6))
            d_e, d_h, d_m = (int(v) for v in rng.integers(2, 9, size=3))
            store = store_with(rng, {
                "emb": (7, d_e),
                "wf": (4 * d_h, d_e + d_h), "bf": (4 * d_h,),
                "wb": (4 * d_h, d_e + d_h), "bb": (4 * d_h,),
                "root": (1, 2 * d_h),
                "aw1": (d_m, 4 * d_h), "ab1": (d_m,),
                "aw2": (d_m,), "ab2": (1,),
            })
            idx = rng.integers(0, 7, size=n)
            gold = np.array([0] + list(rng.integers(0, n, size=n - 1))) \
                if n > 1 else np.array([0])

            def build(tape):
                x = nn.lookup(tape, nn.use(store["emb"]), idx)
                hf = nn.lstm_seq(tape, nn.use(store["wf"]), nn.use(store["bf"]), x)
                hb = nn.lstm_seq(tape, nn.use(store["wb"]), nn.use(store["bb"]),
                                 x, reverse=True)
                states = nn.prepend_row(tape, nn.use(store["root"]),
                                        nn.hstack(tape, [hf, hb]))
                scores = nn.pairwise_arc_scores(
                    tape, states, nn.use(store["aw1"]), nn.use(store["ab1"]),
                    nn.use(store["aw2"]), nn.use(store["ab2"]))
                pred = np.roll(gold, 1) if n > 1 else gold
                return nn.hinge_on_trees(tape, scores, pred, gold)

            assert nn.grad_check(build, store, eps=1e-6) < 1e-4


class TestHinge:
    def test_non_negative_and_zero_when_separated(self):
        # gold arcs better by more than 1: augmented decode returns gold,
        # margin 0
        scores = np.full((3, 3), -5.0)
        gold = np.array([0, 1])
        scores[0, 1] = 10.0
        scores[1, 2] = 10.0
        node = nn.hinge_on_trees(None, nn.Node(scores), gold, gold)
        assert float(node.data) == 0.0

    def test_margin_value(self):
        scores = np.zeros((3, 3))
        scores[2, 1] = 2.0  # pred uses 2->1, gold has 0->1
        gold = np.array([0, 1])
        pred = np.array([2, 1])
        node = nn.hinge_on_trees(None, nn.Node(scores), pred, gold)
        # score(pred)=2, cost=1, score(gold)=0
        assert float(node.data) == 3.0


class TestAdam:
    def test_single_step_moves_by_lr(self):
        store = nn.ParamStore()
        store.add("w", np.array([1.0]))
        nn.adam_update(store, {"w": np.array([1.0])}, lr=0.1)
        # bias-corrected m_hat = 1, v_hat = 1: step is lr/(1+eps)
        assert store["w"].data[0] == pytest.approx(1.0 - 0.1, abs=1e-8)
        assert store["w"].step == 1

    def test_zero_gradient_fresh_store_no_change(self):
        store = nn.ParamStore()
        store.add("w", np.array([2.5, -1.0]))
        nn.adam_update(store, {"w": np.zeros(2)})
        np.testing.assert_array_equal(store["w"].data, [2.5, -1.0])

    def test_two_calls_increment_step_twice(self):
        store = nn.ParamStore()
        store.add("w", np.array([0.0]))
        nn.adam_update(store, {"w": np.array([0.5])})
        nn.adam_update(store, {"w": np.array([0.5])})
        assert store["w"].step == 2

    def test_missing_grad(self):
        store = nn.ParamStore()
        store.add("w", np.zeros(3))
        with pytest.raises(KeyError, match="'w'"):
            nn.adam_update(store, {})

    def test_shape_mismatch(self):
        store = nn.ParamStore()
        store.add("w", np.zeros(3))
        with pytest.raises(ValueError, match="shape"):
            nn.adam_update(store, {"w": np.zeros(4)})

    def test_descends_quadratic(self):
        store = nn.ParamStore()
        store.add("w", np.array([3.0]))
        for _ in range(500):
            g = 2.0 * store["w"].data
            nn.adam_update(store, {"w": g}, lr=0.05)
        assert abs(store["w"].data[0]) < 1e-2


class TestGradCheckApi:
    def test_eps_zero_rejected(self):
        store = nn.ParamStore()
        store.add("w", np.ones(2))
        with pytest.raises(ValueError, match="eps"):
            nn.grad_check(lambda tape: nn.Node(np.asarray(0.0)), store, eps=0.0)

    def test_nonfinite_gradient_names_parameter(self):
        store = nn.ParamStore()
        store.add("bad", np.array([0.0]))

        def build(tape):
            out = nn.Node(np.asarray(1.0))
            if tape is not None:
                def back():
                    store["bad"].grad += np.nan
                tape.record(back)
            return out

        with pytest.raises(FloatingPointError, match="bad"):
            nn.grad_check(build, store)

    def test_non_scalar_loss_rejected(self):
        store = nn.ParamStore()
        store.add("w", np.ones(2))
        with pytest.raises(ValueError, match="scalar"):
            nn.grad_check(lambda tape: nn.Node(np.ones(2)), store)


class TestParamStore:
    def test_duplicate_name(self):
        store = nn.ParamStore()
        store.add("w", np.zeros(1))
        with pytest.raises(ValueError, match="already exists"):
            store.add("w", np.zeros(1))

    def test_check_finite_names_offender(self):
        store = nn.ParamStore()
        store.add("ok", np.zeros(2))
        store.add("broken", np.array([1.0, np.inf]))
        with pytest.raises(FloatingPointError, match="broken"):
            store.check_finite()

    def test_n_entries(self):
        store = nn.ParamStore()
        store.add("a", np.zeros((2, 3)))
        store.add("b", np.zeros(5))
        assert store.n_entries() == 11


class TestGlorot:
    def test_bound(self):
        rng = np.random.default_rng(0)
        w = nn.glorot_uniform(rng, (200, 300), 300, 200)
        bound = np.sqrt(6.0 / 500)
        assert np.abs(w).max() <= bound
        assert np.abs(w).max() > 0.8 * bound  # actually fills the range


class TestBilstmRun:
    def test_output_shape_and_reversal_identity(self):
        rng = np.random.default_rng(9)
        fwd = nn.LstmParams.create(rng, 3, 2)
        x = rng.standard_normal((5, 3))
        # shared parameters: reversing the input swaps the two halves of
        # the outputs, read back to front
        out = nn.bilstm_run(fwd, fwd, x)
        rev = nn.bilstm_run(fwd, fwd, x[::-1])
        assert len(out) == 5 and out[0].shape == (4,)
        for t in range(5):
            swapped = np.concatenate([rev[4 - t][2:], rev[4 - t][:2]])
            np.testing.assert_allclose(out[t], swapped, atol=1e-14)

    def test_empty_sequence_rejected(self):
        rng = np.random.default_rng(0)
        p = nn.LstmParams.create(rng, 3, 2)
        with pytest.raises(ValueError, match="non-empty"):
            nn.bilstm_run(p, p, np.zeros((0, 3)))

    def test_forget_bias_initialized_to_one(self):
        rng = np.random.default_rng(0)
        p = nn.LstmParams.create(rng, 3, 2)
        _, fb = p.forget_gate
        np.testing.assert_array_equal(fb, [1.0, 1.0])
        _, ib = p.input_gate
        np.testing.assert_array_equal(ib, [0.0, 0.0])
