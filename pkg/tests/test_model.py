import math

import numpy as np
import pytest

from zingel.errors import AllMaskedError, DomainError, ShapeMismatchError
from zingel.model import (
    DropoutRates,
    NO_DROPOUT,
    attention_forward,
    bigru_forward,
    cross_entropy,
    cross_entropy_from_logits,
    gru_cell,
    init_params,
    model_forward,
    output_forward,
)
from zingel.backprop import random_check_setup
from zingel.text import EncodedTweet


def make_direction(rng, hidden, inp, zero=False):
    from zingel.model import GruDirection

    def w(shape):
        return np.zeros(shape) if zero else rng.uniform(-0.6, 0.6, shape)

    return GruDirection(
        w_update=w((hidden, inp)),
        w_reset=w((hidden, inp)),
        w_cand=w((hidden, inp)),
        u_update=w((hidden, hidden)),
        u_reset=w((hidden, hidden)),
        u_cand=w((hidden, hidden)),
        b_update=w((hidden,)),
        b_reset=w((hidden,)),
        b_cand=w((hidden,)),
    )


# ---------------------------------------------------------------------------
# scalar oracles: independent plain-python re-implementations
# ---------------------------------------------------------------------------


def scalar_gru_cell(x, h_prev, d):
    hidden = len(h_prev)

    def mv(mat, vec):
        return [sum(float(mat[i, j]) * float(vec[j]) for j in range(len(vec))) for i in range(hidden)]

    def sig(v):
        return [1.0 / (1.0 + math.exp(-t)) for t in v]

    z = sig([a + b + float(c) for a, b, c in zip(mv(d.w_update, x), mv(d.u_update, h_prev), d.b_update)])
    r = sig([a + b + float(c) for a, b, c in zip(mv(d.w_reset, x), mv(d.u_reset, h_prev), d.b_reset)])
    rh = [ri * float(hi) for ri, hi in zip(r, h_prev)]
    c = [
        math.tanh(a + b + float(cc))
        for a, b, cc in zip(mv(d.w_cand, x), mv(d.u_cand, rh), d.b_cand)
    ]
    return np.array([(1 - zi) * float(hi) + zi * ci for zi, hi, ci in zip(z, h_prev, c)])


def scalar_unidirectional(x_seq, positions, d, hidden):
    states = {}
    h = np.zeros(hidden)
    for pos in positions:
        h = scalar_gru_cell(x_seq[pos], h, d)
        states[pos] = h
    return states


def scalar_attention(hidden_states, length, proj, score):
    n, width = hidden_states.shape
    raw = []
    for t in range(length):
        row = [
            math.tanh(sum(float(hidden_states[t, i]) * float(proj[i, j]) for i in range(width)))
            for j in range(width)
        ]
        raw.append(sum(r * float(score[j]) for j, r in enumerate(row)))
    m = max(raw)
    exps = [math.exp(u - m) for u in raw]
    total = sum(exps)
    alpha = [e / total for e in exps] + [0.0] * (n - length)
    pooled = [
        sum(alpha[t] * float(hidden_states[t, i]) for t in range(length)) for i in range(width)
    ]
    return np.array(alpha), np.array(pooled)


class TestGruCell:
    def test_zero_params_zero_state(self):
        rng = np.random.default_rng(0)
        d = make_direction(rng, 4, 3, zero=True)
        out = gru_cell(np.zeros(3), np.zeros(4), d)
        assert np.array_equal(out, np.zeros(4))

    def test_zero_params_interpolates_half(self):
        rng = np.random.default_rng(0)
        d = make_direction(rng, 4, 3, zero=True)
        h_prev = np.array([1.0, -2.0, 0.5, 4.0])
        out = gru_cell(np.random.default_rng(1).uniform(-1, 1, 3), h_prev, d)
        assert np.allclose(out, 0.5 * h_prev)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        d = make_direction(rng, 5, 4)
        x = rng.uniform(-1, 1, 4)
        h_prev = rng.uniform(-1, 1, 5)
        assert np.allclose(gru_cell(x, h_prev, d), scalar_gru_cell(x, h_prev, d), atol=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(0)
        d = make_direction(rng, 4, 3)
        with pytest.raises(ShapeMismatchError):
            gru_cell(np.zeros(5), np.zeros(4), d)


class TestBigruForward:
    def _params(self, rng, hidden, inp, zero=False):
        from zingel.model import GruParams

        return GruParams(
            fwd=make_direction(rng, hidden, inp, zero),
            bwd=make_direction(rng, hidden, inp, zero),
        )

    def test_zero_params_zero_output(self):
        rng = np.random.default_rng(0)
        params = self._params(rng, 3, 2, zero=True)
        x = rng.uniform(-1, 1, (4, 2))
        mask = np.array([True, True, True, False])
        assert np.array_equal(bigru_forward(x, mask, params), np.zeros((4, 6)))

    def test_single_token_directions_agree(self):
        rng = np.random.default_rng(1)
        from zingel.model import GruParams

        shared = make_direction(rng, 3, 2)
        params = GruParams(fwd=shared, bwd=shared)
        x = rng.uniform(-1, 1, (3, 2))
        mask = np.array([True, False, False])
        out = bigru_forward(x, mask, params)
        assert np.allclose(out[0, :3], out[0, 3:])
        assert np.array_equal(out[1:], np.zeros((2, 6)))

    def test_matches_composed_scalar_oracle(self):
        rng = np.random.default_rng(7)
        params = self._params(rng, 4, 3)
        n, length = 5, 3
        x = rng.uniform(-1, 1, (n, 3))
        mask = np.array([True] * length + [False] * (n - length))
        out = bigru_forward(x, mask, params)
        fwd = scalar_unidirectional(x, range(length), params.fwd, 4)
        bwd = scalar_unidirectional(x, range(length - 1, -1, -1), params.bwd, 4)
        for t in range(length):
            assert np.allclose(out[t], np.concatenate([fwd[t], bwd[t]]), atol=1e-12)

    def test_rejects_non_prefix_mask(self):
        rng = np.random.default_rng(0)
        params = self._params(rng, 3, 2)
        x = rng.uniform(-1, 1, (3, 2))
        with pytest.raises(ShapeMismatchError):
            bigru_forward(x, np.array([True, False, True]), params)


class TestAttentionForward:
    def _params(self, rng, width):
        from zingel.model import AttentionParams

        return AttentionParams(proj=rng.uniform(-1, 1, (width, width)), score=rng.uniform(-1, 1, width))

    def test_identical_rows_give_uniform_weights(self):
        rng = np.random.default_rng(2)
        params = self._params(rng, 4)
        row = rng.uniform(-1, 1, 4)
        hidden = np.vstack([row, row, row, np.zeros(4)])
        mask = np.array([True, True, True, False])
        alpha, pooled = attention_forward(hidden, mask, params)
        assert np.allclose(alpha[:3], 1 / 3)
        assert alpha[3] == 0.0
        assert np.allclose(pooled, row)

    def test_single_position(self):
        rng = np.random.default_rng(3)
        params = self._params(rng, 4)
        hidden = np.vstack([rng.uniform(-1, 1, 4), np.zeros(4)])
        mask = np.array([True, False])
        alpha, pooled = attention_forward(hidden, mask, params)
        assert np.allclose(alpha, [1.0, 0.0])
        assert np.allclose(pooled, hidden[0])

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(4)
        params = self._params(rng, 6)
        hidden = rng.uniform(-1, 1, (5, 6))
        hidden[3:] = 0.0
        mask = np.array([True] * 3 + [False] * 2)
        alpha, pooled = attention_forward(hidden, mask, params)
        alpha_ref, pooled_ref = scalar_attention(hidden, 3, params.proj, params.score)
        assert np.allclose(alpha, alpha_ref, atol=1e-12)
        assert np.allclose(pooled, pooled_ref, atol=1e-12)
        assert abs(alpha.sum() - 1.0) < 1e-6

    def test_all_masked_rejected(self):
        rng = np.random.default_rng(5)
        params = self._params(rng, 4)
        with pytest.raises(AllMaskedError):
            attention_forward(np.zeros((3, 4)), np.zeros(3, dtype=bool), params)


class TestOutputForward:
    def _params(self, weight, bias):
        from zingel.model import OutputParams

        return OutputParams(weight=weight, bias=bias)

    def test_zero_params_uniform(self):
        params = self._params(np.zeros((4, 6)), np.zeros(4))
        assert np.allclose(output_forward(np.ones(6), params), 0.25)

    def test_log_biases(self):
        params = self._params(np.zeros((4, 6)), np.log([1.0, 2.0, 3.0, 4.0]))
        assert np.allclose(output_forward(np.zeros(6), params), [0.1, 0.2, 0.3, 0.4])

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(6)
        weight = rng.uniform(-1, 1, (4, 6))
        bias = rng.uniform(-1, 1, 4)
        pooled = rng.uniform(-1, 1, 6)
        base = output_forward(pooled, self._params(weight, bias))
        shifted = output_forward(pooled, self._params(weight, bias + 123.0))
        assert np.allclose(base, shifted, atol=1e-6)


class TestCrossEntropy:
    def test_uniform_self_entropy(self):
        q = np.full(4, 0.25)
        assert cross_entropy(q, q) == pytest.approx(math.log(4), abs=1e-9)

    def test_matched_one_hot_limit(self):
        p = np.array([1 - 3e-12, 1e-12, 1e-12, 1e-12])
        q = np.array([1.0, 0.0, 0.0, 0.0])
        assert cross_entropy(p, q) == pytest.approx(0.0, abs=1e-9)

    def test_hand_value_against_uniform(self):
        q = np.array([0.4, 0.2, 0.2, 0.2])
        p = np.full(4, 0.25)
        assert cross_entropy(p, q) == pytest.approx(math.log(4), abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            cross_entropy(np.array([0.0, 0.5, 0.25, 0.25]), np.full(4, 0.25))

    def test_entropy_lower_bound(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            q = rng.dirichlet(np.ones(4))
            p = rng.dirichlet(np.ones(4)) + 1e-12
            p /= p.sum()
            entropy = -(q * np.log(np.maximum(q, 1e-300))).sum()
            assert cross_entropy(p, q) >= entropy - 1e-9
        q = rng.dirichlet(np.ones(4))
        entropy = -(q * np.log(q)).sum()
        assert cross_entropy(q, q) == pytest.approx(entropy, abs=1e-12)

    def test_logit_form_matches(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            logits = rng.uniform(-8, 8, 4)
            q = rng.dirichlet(np.ones(4))
            e = np.exp(logits - logits.max())
            p = e / e.sum()
            assert cross_entropy_from_logits(logits, q) == pytest.approx(
                cross_entropy(p, q), abs=1e-9
            )


class TestModelForward:
    def test_zero_gru_outputs_bias_softmax(self):
        params, (encoded, _) = random_check_setup(0)
        for _, arr in params.gru.fwd.named("x"):
            arr[...] = 0.0
        for _, arr in params.gru.bwd.named("x"):
            arr[...] = 0.0
        params.output.bias[...] = np.log([1.0, 2.0, 3.0, 4.0])
        p, alpha, cache = model_forward(encoded, params, mode="infer")
        assert np.allclose(p, [0.1, 0.2, 0.3, 0.4], atol=1e-9)
        assert cache is None
        # attention over all-equal (zero) rows is uniform on the prefix
        assert np.allclose(alpha[: encoded.true_length], 1.0 / encoded.true_length)

    def test_train_without_dropout_equals_infer(self):
        params, (encoded, _) = random_check_setup(1)
        infer = model_forward(encoded, params, mode="infer")
        train = model_forward(encoded, params, mode="train", rates=NO_DROPOUT)
        assert np.array_equal(infer.p, train.p)
        assert np.array_equal(infer.alpha, train.alpha)
        assert train.cache is not None

    def test_train_mode_deterministic_per_seed(self):
        params, (encoded, _) = random_check_setup(2)
        rates = DropoutRates(0.2, 0.3, 0.5)
        a = model_forward(encoded, params, "train", rates, np.random.default_rng(77))
        b = model_forward(encoded, params, "train", rates, np.random.default_rng(77))
        assert np.array_equal(a.p, b.p)
        assert np.array_equal(a.cache.x, b.cache.x)

    def test_dropout_needs_generator(self):
        params, (encoded, _) = random_check_setup(3)
        with pytest.raises(ValueError):
            model_forward(encoded, params, mode="train", rates=DropoutRates(0.2, 0.0, 0.0))

    def test_wrong_length_rejected(self):
        params, (encoded, _) = random_check_setup(4)
        short = EncodedTweet(
            indices=encoded.indices[:-1], mask=encoded.mask[:-1], true_length=encoded.true_length
        )
        with pytest.raises(ShapeMismatchError):
            model_forward(short, params, mode="infer")

    def test_distribution_invariants(self):
        rng = np.random.default_rng(10)
        for seed in range(20):
            params, (encoded, _) = random_check_setup(seed)
            p, alpha, _ = model_forward(encoded, params, mode="infer")
            assert abs(p.sum() - 1.0) < 1e-6
            assert (p > 0).all()
            assert abs(alpha.sum() - 1.0) < 1e-6
            assert (alpha >= 0).all()
            assert (alpha[encoded.true_length :] == 0.0).all()


def test_glorot_init_ranges():
    rng = np.random.default_rng(0)
    emb = rng.uniform(-0.5, 0.5, (20, 6))
    emb[0] = 0.0
    params = init_params(emb, hidden_dim=5, seq_len=4, rng=rng)
    limit = math.sqrt(6 / (6 + 5))
    assert (np.abs(params.gru.fwd.w_update) <= limit).all()
    assert np.array_equal(params.output.bias, np.zeros(4))
    assert np.array_equal(params.gru.bwd.b_cand, np.zeros(5))
