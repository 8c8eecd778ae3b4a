import math

import numpy as np
import pytest

from arabner.model import (
    GRU,
    GruParams,
    GruState,
    LSTM,
    LstmParams,
    LstmState,
    ModelConfig,
    ModelParams,
    count_params,
    gru_step,
    init_params,
    lstm_step,
    model_backward,
    model_forward,
    zero_state,
)
from arabner.numerics import log_softmax
from arabner.training import cross_entropy_loss
from fd_oracle import finite_difference_grads, worst_relative_error


def lstm_const(H, E, w=0.0, r=0.0, b=0.0, b_f=None):
    p = LstmParams(
        **{f"w_{g}": np.full((H, E), float(w)) for g in "ifoc"},
        **{f"r_{g}": np.full((H, H), float(r)) for g in "ifoc"},
        **{f"b_{g}": np.full(H, float(b)) for g in "ifoc"},
    )
    if b_f is not None:
        p.b_f = np.full(H, float(b_f))
    return p


def gru_const(H, E, w=0.0, u=0.0, b=0.0, b_z=None):
    p = GruParams(
        **{f"w_{g}": np.full((H, E), float(w)) for g in "rzn"},
        **{f"u_{g}": np.full((H, H), float(u)) for g in "rzn"},
        **{f"b_{g}": np.full(H, float(b)) for g in "rzn"},
    )
    if b_z is not None:
        p.b_z = np.full(H, float(b_z))
    return p


def zero_model(cell_kind, V=5, E=3, H=4, K=6):
    cfg = ModelConfig(cell_kind, V, E, H, K)
    cell = lstm_const(H, E) if cell_kind == LSTM else gru_const(H, E)
    return ModelParams(cfg, np.zeros((V, E)), cell, np.zeros((K, H)), np.zeros(K))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig("rnn", 10)
        with pytest.raises(ValueError):
            ModelConfig(LSTM, 1)
        with pytest.raises(ValueError):
            ModelConfig(LSTM, 10, embed_dim=0)


class TestInit:
    def test_deterministic(self):
        cfg = ModelConfig(LSTM, 40, 8, 7, 9, seed=3)
        a = init_params(cfg)
        b = init_params(cfg)
        for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
            assert na == nb
            assert np.array_equal(ta, tb)

    def test_bias_structure_and_pad_row(self):
        for kind in (LSTM, GRU):
            p = init_params(ModelConfig(kind, 30, 5, 6, 8, seed=1))
            for name, arr in p.cell.named_tensors():
                if name.startswith("b_"):
                    assert np.all(arr == 0.0), name
            assert np.all(p.dense_b == 1.0)  # head bias starts above the ReLU cut
            assert np.all(p.embedding[0] == 0.0)
            assert np.any(p.embedding[1] != 0.0)

    def test_glorot_bound_at_paper_sizes(self):
        p = init_params(ModelConfig(LSTM, 100, 50, 50, 37, seed=0))
        bound = math.sqrt(6.0 / 100.0)  # ~0.2449
        for g in "ifoc":
            w = getattr(p.cell, f"w_{g}")
            assert np.abs(w).max() <= bound
            assert np.abs(w).max() > 0.5 * bound  # actually fills the range

    def test_different_seeds_differ(self):
        a = init_params(ModelConfig(GRU, 30, 5, 6, 8, seed=1))
        b = init_params(ModelConfig(GRU, 30, 5, 6, 8, seed=2))
        assert not np.array_equal(a.embedding, b.embedding)


class TestCountParams:
    def test_paper_values(self):
        assert count_params(ModelConfig(LSTM, 11737, 50, 50, 37)) == 608937
        assert count_params(ModelConfig(GRU, 11737, 50, 50, 37)) == 603887

    def test_hand_example(self):
        assert count_params(ModelConfig(LSTM, 10, 4, 3, 5)) == 156

    def test_gap_is_one_gate_block(self):
        for V, E, H, K in [(11737, 50, 50, 37), (100, 7, 13, 5)]:
            gap = count_params(ModelConfig(LSTM, V, E, H, K)) - count_params(
                ModelConfig(GRU, V, E, H, K)
            )
            assert gap == H * E + H * H + H

    def test_matches_actual_tensor_sizes(self):
        for kind in (LSTM, GRU):
            cfg = ModelConfig(kind, 23, 4, 6, 9, seed=0)
            total = sum(arr.size for _, arr in init_params(cfg).named_tensors())
            assert total == count_params(cfg)


class TestLstmStep:
    def test_zero_params(self):
        p = lstm_const(3, 2)
        state = lstm_step(p, np.array([5.0, -3.0]), LstmState(np.zeros(3), np.zeros(3)))
        assert np.allclose(state.cache["i"], 0.5, atol=0)
        assert np.allclose(state.cache["f"], 0.5, atol=0)
        assert np.allclose(state.cache["o"], 0.5, atol=0)
        assert np.all(state.cache["g"] == 0.0)
        assert np.all(state.c == 0.0) and np.all(state.h == 0.0)

    def test_scalar_hand_example(self):
        p = lstm_const(1, 1, w=1.0, r=1.0)
        state = lstm_step(p, np.array([0.0]), LstmState(np.zeros(1), np.ones(1)))
        assert np.isclose(state.c[0], 0.5, rtol=0, atol=1e-15)
        assert np.isclose(state.h[0], 0.23105857863000487, rtol=0, atol=1e-15)

    def test_forget_gate_saturation(self):
        rng = np.random.default_rng(0)
        p = lstm_const(4, 3, w=0.1, r=0.1, b_f=30.0)
        prev = LstmState(rng.normal(size=4) * 0.5, rng.normal(size=4))
        state = lstm_step(p, rng.normal(size=3), prev)
        expected = prev.c + state.cache["i"] * state.cache["g"]
        assert np.abs(state.c - expected).max() < 1e-12


class TestGruStep:
    def test_zero_params(self):
        p = gru_const(3, 2)
        state = gru_step(p, np.array([1.0, 2.0]), GruState(np.zeros(3)))
        assert np.allclose(state.cache["r"], 0.5, atol=0)
        assert np.allclose(state.cache["z"], 0.5, atol=0)
        assert np.all(state.c == 0.0)

    def test_scalar_hand_example(self):
        # r = z = sigmoid(1); candidate = tanh(r); c = (1-z)*candidate + z
        p = gru_const(1, 1, w=1.0, u=1.0)
        state = gru_step(p, np.array([0.0]), GruState(np.ones(1)))
        s1 = 0.7310585786300049
        assert np.isclose(state.cache["r"][0], s1, rtol=0, atol=1e-15)
        assert np.isclose(state.cache["z"][0], s1, rtol=0, atol=1e-15)
        assert np.isclose(state.cache["n"][0], 0.6237125498258757, rtol=0, atol=1e-15)
        assert np.isclose(state.c[0], 0.8988007183064798, rtol=0, atol=1e-15)

    def test_update_gate_saturation_carries_state(self):
        rng = np.random.default_rng(1)
        p = gru_const(4, 3, w=0.1, u=0.1, b_z=30.0)
        prev = GruState(rng.normal(size=4) * 0.9)
        state = gru_step(p, rng.normal(size=3), prev)
        assert np.abs(state.c - prev.c).max() < 1e-12

    def test_output_is_state(self):
        state = GruState(np.array([0.25, -0.5]))
        assert state.h is state.c


class TestForward:
    def test_rows_normalize(self):
        for kind in (LSTM, GRU):
            p = init_params(ModelConfig(kind, 17, 5, 6, 11, seed=2))
            lp, _ = model_forward(p, [1, 3, 16, 0, 5])
            assert np.abs(np.exp(lp).sum(axis=1) - 1.0).max() <= 1e-12

    def test_all_zero_params_give_uniform(self):
        p = zero_model(LSTM, K=6)
        lp, _ = model_forward(p, [1, 2, 3])
        assert np.allclose(lp, -np.log(6.0), rtol=0, atol=1e-15)

    def test_length_one_matches_manual_composition(self):
        cfg = ModelConfig(LSTM, 9, 4, 5, 7, seed=4)
        p = init_params(cfg)
        lp, _ = model_forward(p, [3])
        state = lstm_step(p.cell, p.embedding[3], zero_state(cfg))
        pre = p.dense_w @ state.h + p.dense_b
        manual = log_softmax(np.maximum(pre, 0.0))
        assert np.array_equal(lp[0], manual)

    def test_id_range_check(self):
        p = init_params(ModelConfig(GRU, 5, 3, 3, 4, seed=0))
        with pytest.raises(ValueError, match="out of range"):
            model_forward(p, [0, 5])
        with pytest.raises(ValueError, match="out of range"):
            model_forward(p, [-1])

    def test_forward_deterministic(self):
        p = init_params(ModelConfig(GRU, 12, 4, 4, 6, seed=5))
        a, _ = model_forward(p, [1, 2, 3, 4])
        b, _ = model_forward(p, [1, 2, 3, 4])
        assert np.array_equal(a, b)


class TestStateBounds:
    def test_lstm_bounds(self):
        rng = np.random.default_rng(6)
        cfg = ModelConfig(LSTM, 20, 6, 5, 7, seed=6)
        p = init_params(cfg)
        for name, arr in p.cell.named_tensors():
            arr += rng.normal(0, 1.0, arr.shape)
        state = zero_state(cfg)
        for t in range(1, 30):
            state = lstm_step(p.cell, rng.normal(size=6), state)
            assert np.abs(state.h).max() < 1.0
            assert np.abs(state.c).max() <= t

    def test_gru_bound(self):
        rng = np.random.default_rng(7)
        cfg = ModelConfig(GRU, 20, 6, 5, 7, seed=7)
        p = init_params(cfg)
        for name, arr in p.cell.named_tensors():
            arr += rng.normal(0, 1.0, arr.shape)
        state = zero_state(cfg)
        for _ in range(30):
            state = gru_step(p.cell, rng.normal(size=6), state)
            assert np.abs(state.c).max() < 1.0


class TestBackward:
    def make(self, kind, seed=7, T=5, relu_head=True):
        cfg = ModelConfig(kind, 13, 4, 3, 13, seed=seed, relu_head=relu_head)
        params = init_params(cfg)
        rng = np.random.default_rng(seed + 100)
        for name, arr in params.named_tensors():
            if arr.ndim == 1:  # move biases off their init point
                arr += rng.normal(0, 0.3, arr.shape)
        ids = rng.integers(1, 13, size=T)
        gold = rng.integers(0, 13, size=T)
        mask = np.ones(T)
        return params, ids, gold, mask

    def test_zero_upstream_gives_zero_grads(self):
        for kind in (LSTM, GRU):
            params, ids, gold, mask = self.make(kind)
            _, caches = model_forward(params, ids, mask)
            grads = model_backward(params, caches, np.zeros((5, 13)))
            assert all(np.all(g == 0.0) for g in grads.values())

    def test_unused_embedding_rows_zero(self):
        params, ids, gold, mask = self.make(LSTM)
        lp, caches = model_forward(params, ids, mask)
        _, d = cross_entropy_loss(lp, gold, mask)
        grads = model_backward(params, caches, d)
        unused = set(range(13)) - set(int(i) for i in ids)
        for row in unused:
            assert np.all(grads["embedding"][row] == 0.0)

    def test_masked_positions_contribute_nothing(self):
        for kind in (LSTM, GRU):
            params, ids, gold, mask = self.make(kind)
            mask = np.array([1.0, 1.0, 1.0, 0.0, 0.0])
            lp, caches = model_forward(params, ids, mask)
            _, d = cross_entropy_loss(lp, gold, mask)
            clean = model_backward(params, caches, d)
            dirty = d.copy()
            dirty[3:] = 123.0  # garbage at masked rows must be ignored
            poked = model_backward(params, caches, dirty)
            for name in clean:
                assert np.array_equal(clean[name], poked[name]), name

    def test_cache_kind_mismatch(self):
        lstm_params, ids, gold, mask = self.make(LSTM)
        gru_params, *_ = self.make(GRU)
        _, caches = model_forward(lstm_params, ids, mask)
        with pytest.raises(ValueError, match="does not match"):
            model_backward(gru_params, caches, np.zeros((5, 13)))

    @pytest.mark.parametrize("kind", [LSTM, GRU])
    @pytest.mark.parametrize("relu_head", [True, False])
    def test_gradients_match_finite_differences(self, kind, relu_head):
        params, ids, gold, mask = self.make(kind, relu_head=relu_head)
        mask[-1] = 0.0  # exercise the mask path too
        lp, caches = model_forward(params, ids, mask)
        _, d = cross_entropy_loss(lp, gold, mask)
        analytic = model_backward(params, caches, d)

        def loss():
            lp2, _ = model_forward(params, ids, mask)
            return cross_entropy_loss(lp2, gold, mask)[0]

        numeric = finite_difference_grads(params, loss, eps=1e-5)
        worst, where = worst_relative_error(analytic, numeric)
        assert worst < 1e-4, f"worst relative error {worst} in {where}"

    def test_backward_deterministic(self):
        params, ids, gold, mask = self.make(GRU)
        lp, caches = model_forward(params, ids, mask)
        _, d = cross_entropy_loss(lp, gold, mask)
        a = model_backward(params, caches, d)
        b = model_backward(params, caches, d)
        assert all(np.array_equal(a[k], b[k]) for k in a)
