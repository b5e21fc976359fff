import numpy as np
import pytest

from edgekd.errors import ContractError, DimensionError, ParameterError
from edgekd.numerics import (
    Rng,
    cross_entropy,
    dense_forward,
    grad_check,
    kl_divergence,
    matmul_acc,
    sgd_step,
    softmax_t,
)


def naive_dense(w, b, x):
    """Triple-loop oracle with left-to-right accumulation."""
    batch, inner = x.shape
    out = w.shape[0]
    y = np.empty((batch, out))
    for r in range(batch):
        for c in range(out):
            acc = 0.0
            for k in range(inner):
                acc += x[r, k] * w[c, k]
            y[r, c] = acc + b[c]
    return y


class TestRng:
    def test_same_key_same_sequence(self):
        a = Rng(42, 7).normal(shape=16)
        b = Rng(42, 7).normal(shape=16)
        assert (a == b).all()

    def test_child_streams_independent(self):
        base = Rng(42)
        a = base.child("alpha")
        b = base.child("beta")
        assert a.stream != b.stream
        assert not (a.normal(shape=8) == b.normal(shape=8)).all()

    def test_child_does_not_consume_parent(self):
        base = Rng(5)
        base.child("x").normal(shape=100)
        after = base.normal(shape=4)
        assert (after == Rng(5).normal(shape=4)).all()

    def test_child_derivation_is_stable(self):
        assert Rng(1).child("tag").stream == Rng(1).child("tag").stream

    def test_bad_seed_rejected(self):
        with pytest.raises(ParameterError):
            Rng(-1)


class TestDenseForward:
    def test_identity_weights(self):
        y = dense_forward(np.eye(2), np.zeros(2), [[3.0, 4.0]])
        assert (y == [[3.0, 4.0]]).all()

    def test_hand_sum(self):
        y = dense_forward([[1.0, 1.0]], [1.0], [[2.0, 3.0]])
        assert (y == [[6.0]]).all()

    def test_matches_naive_loop_exactly(self):
        rng = Rng(11)
        w = rng.normal(shape=(4, 3))
        b = rng.normal(shape=4)
        x = rng.normal(shape=(5, 3))
        y = dense_forward(w, b, x)
        assert (y == naive_dense(w, b, x)).all()  # 0 ulp

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
            dense_forward(np.zeros((4, 5)), np.zeros(4), np.zeros((2, 3)))

    def test_matmul_acc_inner_mismatch(self):
        with pytest.raises(DimensionError):
            matmul_acc(np.zeros((2, 3)), np.zeros((4, 2)))


class TestSoftmax:
    def test_uniform_rows(self):
        p = softmax_t(np.zeros((1, 3)), 1.0)
        assert np.allclose(p, 1.0 / 3.0, atol=1e-15)

    def test_high_temperature_limit(self):
        p = softmax_t([[10.0, 0.0]], 1e9)
        assert np.abs(p - 0.5).max() < 1e-6

    def test_frozen_oracle_values(self):
        # independent high-precision evaluation of softmax([2, 1], T=2)
        p = softmax_t([[2.0, 1.0]], 2.0)
        assert abs(p[0, 0] - 0.6224593312018545646389) < 1e-15
        assert abs(p[0, 1] - 0.3775406687981454353611) < 1e-15

    def test_rows_sum_to_one_across_temperatures(self):
        rng = Rng(3)
        for _ in range(100):
            z = rng.normal(shape=(3, 5), scale=50.0)
            t = float(10.0 ** rng.uniform(-3, 9))
            p = softmax_t(z, t)
            assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12

    def test_shift_invariance(self):
        rng = Rng(4)
        z = rng.normal(shape=(2, 4))
        assert np.abs(softmax_t(z + 13.5, 2.0) - softmax_t(z, 2.0)).max() < 1e-12

    def test_argmax_preserved(self):
        rng = Rng(5)
        for _ in range(100):
            z = rng.normal(shape=(4, 6))
            for t in (1e-3, 1.0, 17.0, 1e9):
                assert (softmax_t(z, t).argmax(axis=1) == z.argmax(axis=1)).all()

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ParameterError):
            softmax_t([[1.0, 2.0]], 0.0)


class TestCrossEntropy:
    def test_confident_correct_is_near_zero(self):
        assert cross_entropy([[30.0, -30.0]], [0]) < 1e-9

    def test_uniform_logits_ln4(self):
        assert abs(cross_entropy(np.zeros((2, 4)), [1, 3])
                   - 1.386294361119890618834) < 1e-12

    def test_matches_direct_recomputation(self):
        rng = Rng(6)
        z = rng.normal(shape=(5, 4), scale=2.0)
        labels = rng.integers(0, 4, 5)
        # direct formula, recomputed independently
        expected = 0.0
        for i in range(5):
            row = np.exp(z[i] - z[i].max())
            expected += -np.log(row[labels[i]] / row.sum())
        expected /= 5
        assert abs(cross_entropy(z, labels) - expected) < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy([[0.0, 0.0]], [2])

    def test_nonnegative(self):
        rng = Rng(7)
        for _ in range(50):
            z = rng.normal(shape=(3, 5), scale=4.0)
            assert cross_entropy(z, rng.integers(0, 5, 3)) >= 0.0


class TestKlDivergence:
    def test_identical_rows_exact_zero(self):
        p = softmax_t(Rng(8).normal(shape=(4, 3)), 1.0)
        assert kl_divergence(p, p) == 0.0

    def test_point_mass_vs_uniform_is_ln2(self):
        val = kl_divergence([[1.0, 0.0]], [[0.5, 0.5]])
        assert abs(val - 0.6931471805599453094172) < 1e-12

    def test_matches_term_by_term_oracle(self):
        rng = Rng(9)
        p = softmax_t(rng.normal(shape=(3, 4)), 1.0)
        q = softmax_t(rng.normal(shape=(3, 4)), 1.0)
        expected = 0.0
        for i in range(3):
            for j in range(4):
                if p[i, j] > 0:
                    expected += p[i, j] * (np.log(p[i, j]) - np.log(max(q[i, j], 1e-12)))
        expected /= 3
        assert abs(kl_divergence(p, q) - expected) < 1e-12

    def test_nonnegative_over_random_pairs(self):
        rng = Rng(10)
        for _ in range(100):
            p = softmax_t(rng.normal(shape=(2, 6), scale=3.0), 1.0)
            q = softmax_t(rng.normal(shape=(2, 6), scale=3.0), 1.0)
            assert kl_divergence(p, q) >= -1e-12

    def test_unnormalized_rows_rejected(self):
        with pytest.raises(ContractError):
            kl_divergence([[0.7, 0.7]], [[0.5, 0.5]])
        with pytest.raises(ContractError):
            kl_divergence([[0.5, 0.5]], [[1.2, -0.2]])


class TestSgdStep:
    def test_hand_case(self):
        (out,) = sgd_step([np.array([1.0])], [np.array([2.0])], 0.5)
        assert out[0] == 0.0

    def test_zero_gradient_fixed_point(self):
        theta = Rng(12).normal(shape=(3, 2))
        (out,) = sgd_step([theta], [np.zeros_like(theta)], 0.1)
        assert (out == theta).all()

    def test_matches_scalar_loop(self):
        rng = Rng(13)
        theta = rng.normal(shape=(2, 3))
        g = rng.normal(shape=(2, 3))
        (out,) = sgd_step([theta], [g], 0.01)
        for i in range(2):
            for j in range(3):
                assert out[i, j] == theta[i, j] - 0.01 * g[i, j]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sgd_step([np.zeros(3)], [np.zeros(4)], 0.1)


class TestGradCheck:
    def test_quadratic_analytic_gradient(self):
        theta = Rng(14).normal(shape=5)

        def loss(params):
            return 0.5 * float((params[0] ** 2).sum())

        assert grad_check(loss, [theta], [theta], eps=1e-5) < 1e-8

    def test_wrong_gradient_detected_at_one_third(self):
        theta = Rng(15).uniform(0.5, 2.0, 5)

        def loss(params):
            return 0.5 * float((params[0] ** 2).sum())

        err = grad_check(loss, [theta], [2.0 * theta], eps=1e-5)
        assert abs(err - 1.0 / 3.0) < 1e-6

    def test_eps_validated(self):
        with pytest.raises(ParameterError):
            grad_check(lambda p: 0.0, [np.zeros(1)], [np.zeros(1)], eps=1e-2)

    def test_nonfinite_loss_rejected(self):
        with pytest.raises(ContractError):
            grad_check(lambda p: float("nan"), [np.ones(1)], [np.ones(1)], eps=1e-5)
