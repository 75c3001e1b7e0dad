"""Tensor core: forward semantics, gradients against finite differences, Adam."""

import numpy as np
import pytest

from alignrec import autodiff as ad
from alignrec.autodiff import ParameterSet, Tensor, adam_step, grad_check
from alignrec.errors import ConfigError, ContractError, ShapeError


def matmul_oracle(a, b):
    """Naive triple loop, the independent reference for matmul."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(ad.matmul(a, b).data, b.data)

    def test_small_product(self):
        out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        expected = matmul_oracle(
            np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0], [6.0]])
        )
        np.testing.assert_array_equal(out.data, expected)
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_zero_case(self):
        out = ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.ones((3, 4))))
        assert np.array_equal(out.data, np.zeros((2, 4)))

    def test_matches_triple_loop_on_random_shapes(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            m, k, n = rng.integers(1, 9, size=3)
            a = rng.normal(size=(m, k))
            b = rng.normal(size=(k, n))
            got = ad.matmul(Tensor(a), Tensor(b)).data
            np.testing.assert_allclose(got, matmul_oracle(a, b), atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestSoftmaxRows:
    def test_uniform_row(self):
        out = ad.softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)

    def test_log_two_row(self):
        out = ad.softmax_rows(Tensor([[0.0, np.log(2.0)]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 2 / 3]], atol=1e-15)

    def test_large_inputs_stable(self):
        out = ad.softmax_rows(Tensor([[1000.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-12)

    def test_rows_sum_to_one_for_extreme_magnitudes(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-1e6, 1e6, size=(50, 7))
        out = ad.softmax_rows(Tensor(x))
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(out.data >= 0)


class TestActivations:
    def test_sigmoid_zero(self):
        assert ad.apply_activation("sigmoid", Tensor([0.0])).data[0] == 0.5

    def test_leaky_relu_negative(self):
        assert ad.apply_activation("leaky_relu", Tensor([-1.0])).data[0] == -0.01

    def test_sigmoid_saturates(self):
        out = ad.apply_activation("sigmoid", Tensor([1000.0]))
        assert abs(out.data[0] - 1.0) < 1e-12

    def test_identity(self):
        x = Tensor([1.5, -2.0])
        assert ad.apply_activation("identity", x) is x

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ad.apply_activation("tanh", Tensor([0.0]))

    def test_finite_on_finite_inputs(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.uniform(-1e6, 1e6, size=(20,)))
        for kind in ("sigmoid", "leaky_relu", "identity"):
            assert np.all(np.isfinite(ad.apply_activation(kind, x).data))


class TestBackward:
    def test_sum_grad_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        ad.reduce_sum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square_grad(self):
        x = Tensor([3.0], requires_grad=True)
        ad.reduce_sum(ad.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_accumulation_across_reuse(self):
        x = Tensor([2.0], requires_grad=True)
        # x appears three times: x*x + x
        loss = ad.reduce_sum(ad.add(ad.mul(x, x), x))
        loss.backward()
        np.testing.assert_allclose(x.grad, [5.0])

    def test_non_scalar_backward_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            ad.mul(x, x).backward()

    def test_sigmoid_of_dot_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        w = Tensor(rng.normal(size=(4, 1)))
        x = rng.normal(size=(1, 4))

        def f():
            return ad.reduce_sum(ad.sigmoid(ad.matmul(Tensor(x), w)))

        assert grad_check(f, [w]) < 1e-5


class TestGradCheckAllOps:
    """Every differentiable op at seeded random well-conditioned points."""

    @pytest.mark.parametrize("trial", range(40))
    def test_composite_pipeline(self, trial):
        rng = np.random.default_rng(100 + trial)
        w1 = Tensor(rng.normal(size=(5, 4)) * 0.5)
        w2 = Tensor(rng.normal(size=(4, 3)) * 0.5)
        bias = Tensor(rng.normal(size=(3,)) * 0.1)
        x = rng.normal(size=(6, 5))

        def f():
            h = ad.apply_activation("leaky_relu", ad.matmul(Tensor(x), w1))
            h = ad.add(ad.matmul(h, w2), bias)
            return ad.reduce_sum(ad.sigmoid(ad.softmax_rows(h)))

        assert grad_check(f, [w1, w2, bias]) < 1e-5

    @pytest.mark.parametrize("seed", range(40))
    def test_segment_and_gather_ops(self, seed):
        rng = np.random.default_rng(200 + seed)
        v = Tensor(rng.normal(size=(8, 3)))
        s = Tensor(rng.normal(size=(8,)))
        seg = rng.integers(0, 3, size=8)
        seg[:3] = [0, 1, 2]  # no empty segments

        def f():
            alpha = ad.segment_softmax(s, seg, 3)
            pooled = ad.segment_sum(ad.scale_rows(v, alpha), seg, 3)
            lse = ad.segment_logsumexp(ad.scale(s, 0.7), seg, 3)
            picked = ad.gather_rows(pooled, np.array([0, 2, 1, 0]))
            return ad.add(ad.reduce_sum(picked), ad.reduce_sum(lse))

        assert grad_check(f, [v, s]) < 1e-5

    @pytest.mark.parametrize("seed", range(20))
    def test_normalize_concat_max_slice(self, seed):
        rng = np.random.default_rng(300 + seed)
        a = Tensor(rng.normal(size=(4, 3)) + 0.5)
        b = Tensor(rng.normal(size=(4, 3)) - 0.5)

        def f():
            normed = ad.l2_normalize_rows(a)
            merged = ad.maximum(normed, b)
            wide = ad.concat_cols([merged, b])
            tall = ad.concat_rows([wide, ad.scale(wide, 0.3)])
            piece = ad.slice_rows(ad.slice_cols(tall, 1, 5), 2, 7)
            return ad.reduce_sum(ad.mul(piece, piece))

        assert grad_check(f, [a, b]) < 1e-5

    def test_softplus_transpose_mean(self):
        rng = np.random.default_rng(42)
        a = Tensor(rng.normal(size=(3, 4)))

        def f():
            return ad.mean(ad.softplus(ad.matmul(ad.transpose(a), a)))

        assert grad_check(f, [a]) < 1e-5


class TestGradCheckFunction:
    def test_sum_of_squares(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(5,)))

        def f():
            return ad.reduce_sum(ad.mul(x, x))

        assert grad_check(f, [x]) <= 1e-7

    def test_constant_function(self):
        x = Tensor([1.0, 2.0])

        def f():
            return ad.reduce_sum(ad.mul(Tensor([3.0]), Tensor([4.0])))

        assert grad_check(f, [x]) == 0.0

    def test_softmax_dot_fixed_vector(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(3, 4)))
        fixed = Tensor(rng.normal(size=(4, 1)))

        def f():
            return ad.reduce_sum(ad.matmul(ad.softmax_rows(x), fixed))

        assert grad_check(f, [x]) <= 1e-5

    def test_rejects_non_scalar(self):
        x = Tensor([1.0, 2.0])
        with pytest.raises(ContractError):
            grad_check(lambda: ad.mul(x, x), [x])


class TestAdam:
    def test_zero_gradient_is_identity(self):
        ps = ParameterSet(seed=0)
        w = ps.create("w", (3, 2))
        before = w.data.copy()
        ps.zero_grads()
        adam_step(ps, lr=0.1)
        np.testing.assert_array_equal(w.data, before)

    def test_first_step_is_signed_lr(self):
        ps = ParameterSet(seed=0)
        w = ps.create("w", (1,), init="zeros")
        w.grad = np.array([2.0])
        adam_step(ps, lr=0.1, eps=1e-8)
        np.testing.assert_allclose(w.data, [-0.1], atol=1e-6)

    def test_independent_parameters(self):
        ps = ParameterSet(seed=0)
        a = ps.create("a", (2,))
        b = ps.create("b", (2,))
        before_b = b.data.copy()
        a.grad = np.array([1.0, -1.0])
        b.grad = np.zeros(2)
        adam_step(ps, lr=0.05)
        assert not np.array_equal(a.data, np.zeros(2))
        np.testing.assert_array_equal(b.data, before_b)

    def test_missing_grad_names_parameter(self):
        ps = ParameterSet(seed=0)
        ps.create("w_hidden", (2,))
        with pytest.raises(ContractError, match="w_hidden"):
            adam_step(ps, lr=0.1)

    def test_grads_cleared_and_step_counted(self):
        ps = ParameterSet(seed=0)
        w = ps.create("w", (2,))
        w.grad = np.ones(2)
        adam_step(ps, lr=0.1)
        assert w.grad is None
        assert ps.step_count("w") == 1

    def test_seeded_init_is_name_stable(self):
        a = ParameterSet(seed=9).create("layer.w", (4, 4))
        b = ParameterSet(seed=9).create("layer.w", (4, 4))
        np.testing.assert_array_equal(a.data, b.data)
        c = ParameterSet(seed=10).create("layer.w", (4, 4))
        assert not np.array_equal(a.data, c.data)


class TestForwardFiniteness:
    def test_ops_finite_on_finite_inputs(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.uniform(-1e3, 1e3, size=(6, 5)))
        y = Tensor(rng.uniform(-1e3, 1e3, size=(6, 5)))
        outputs = [
            ad.add(x, y),
            ad.mul(x, y),
            ad.softmax_rows(x),
            ad.l2_normalize_rows(x),
            ad.softplus(x),
            ad.maximum(x, y),
            ad.reduce_sum(x, axis=1),
            ad.matmul(x, ad.transpose(y)),
        ]
        for out in outputs:
            assert np.all(np.isfinite(out.data))

    def test_no_grad_suppresses_graph(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with ad.no_grad():
            out = ad.mul(x, x)
        assert not out.requires_grad
        assert out._backward_fn is None
