import numpy as np
import pytest

import kglink.autodiff as ad
from kglink.autodiff import Tensor
from kglink.errors import DimensionError, NumericError
from kglink.optim import Adam

from helpers import assert_gradients_match, numeric_gradient


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(Tensor(np.eye(2)), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        np.testing.assert_array_equal(out.data, [[5.0, 6.0], [7.0, 8.0]])

    def test_hand_computed_product(self):
        out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        np.testing.assert_array_equal(out.data, [[19.0, 22.0], [43.0, 50.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\) x \(2, 2\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_backward_formulas(self):
        a = Tensor(np.arange(6, dtype=float).reshape(2, 3), requires_grad=True)
        b = Tensor(np.arange(12, dtype=float).reshape(3, 4), requires_grad=True)
        ad.reduce_sum(ad.matmul(a, b)).backward()
        g = np.ones((2, 4))
        np.testing.assert_allclose(a.grad, g @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ g)


class TestSegmentSoftmax:
    def test_symmetric_pair(self):
        out = ad.segment_softmax(Tensor([0.0, 0.0]), [0, 0], 1)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_closed_form_two_logits(self):
        out = ad.segment_softmax(Tensor([1.0, 2.0]), [0, 0], 1)
        np.testing.assert_allclose(out.data, [0.26894, 0.73106], atol=1e-5)

    def test_singleton_segment_exactly_one(self):
        out = ad.segment_softmax(Tensor([7.3]), [0], 1)
        assert out.data[0] == 1.0

    def test_segments_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n_seg = int(rng.integers(1, 5))
            seg = rng.integers(0, n_seg, size=rng.integers(n_seg, 20))
            seg[:n_seg] = np.arange(n_seg)  # every segment non-empty
            logits = Tensor(rng.normal(size=seg.size) * 10)
            out = ad.segment_softmax(logits, seg, n_seg).data
            assert np.all(out > 0) and np.all(out <= 1.0)
            sums = np.zeros(n_seg)
            np.add.at(sums, seg, out)
            np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_large_logits_stay_finite(self):
        out = ad.segment_softmax(Tensor([1000.0, 999.0]), [0, 0], 1)
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data.sum(), 1.0)


class TestConv2d:
    def test_zero_kernels(self):
        out = ad.conv2d_valid(Tensor(np.random.default_rng(0).normal(size=(2, 4, 4))),
                              Tensor(np.zeros((3, 2, 2, 2))), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, np.zeros((3, 3, 3)))

    def test_one_by_one_kernel_sums_channels(self):
        x = np.random.default_rng(1).normal(size=(3, 4, 5))
        out = ad.conv2d_valid(Tensor(x), Tensor(np.ones((1, 3, 1, 1))), Tensor(np.zeros(1)))
        np.testing.assert_allclose(out.data[0], x.sum(axis=0))

    def test_ones_input_ones_kernel(self):
        out = ad.conv2d_valid(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 2, 2))),
                              Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, np.full((1, 2, 2), 4.0))

    def test_kernel_larger_than_input(self):
        with pytest.raises(DimensionError, match="larger than input"):
            ad.conv2d_valid(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))),
                            Tensor(np.zeros(1)))

    def test_batched_matches_per_image(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 2, 5, 6))
        k = rng.normal(size=(3, 2, 2, 3))
        b = rng.normal(size=3)
        batched = ad.conv2d_valid(Tensor(x), Tensor(k), Tensor(b)).data
        for i in range(4):
            single = ad.conv2d_valid(Tensor(x[i]), Tensor(k), Tensor(b)).data
            np.testing.assert_allclose(batched[i], single)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        ad.reduce_sum(x).backward()
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_sigmoid_at_zero(self):
        x = Tensor(0.0, requires_grad=True)
        ad.sigmoid(x).backward()
        np.testing.assert_allclose(x.grad, 0.25)

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(DimensionError, match="scalar"):
            x.backward()

    def test_gradients_accumulate_across_uses(self):
        x = Tensor([2.0], requires_grad=True)
        ad.reduce_sum(ad.add(ad.mul(x, x), x)).backward()  # d/dx (x^2 + x) = 2x + 1
        np.testing.assert_allclose(x.grad, [5.0])

    def test_composite_graph_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

        def loss():
            hidden = ad.tanh(ad.matmul(a, b))
            return ad.reduce_sum(ad.mul(ad.sigmoid(hidden), hidden))

        loss().backward()
        for t, label in ((a, "a"), (b, "b")):
            numeric = numeric_gradient(lambda: loss().item(), t)
            assert_gradients_match(t.grad, numeric, label=label)

    def test_no_grad_suppresses_recording(self):
        x = Tensor([1.0], requires_grad=True)
        with ad.no_grad():
            out = ad.mul(x, x)
        assert not out.requires_grad and out._parents == ()


def _rand(rng, *shape):
    return rng.normal(size=shape)


UNARY_CASES = [
    ("neg", lambda x: ad.neg(x), None),
    ("abs", lambda x: ad.absolute(x), None),
    ("sigmoid", lambda x: ad.sigmoid(x), None),
    ("tanh", lambda x: ad.tanh(x), None),
    ("relu", lambda x: ad.relu(x), None),
    ("exp", lambda x: ad.exp(x), None),
    ("log", lambda x: ad.log(x), "positive"),
    ("reshape", lambda x: ad.reshape(x, (x.size,)), None),
    ("transpose", lambda x: ad.transpose(x), "matrix"),
    ("sum", lambda x: ad.reduce_sum(x), None),
    ("sum_last", lambda x: ad.reduce_sum(x, axis=-1), None),
    ("mean", lambda x: ad.reduce_mean(x), None),
    ("l1_norm", lambda x: ad.l1_norm(x), None),
    ("clip", lambda x: ad.clip(x, -0.8, 0.8), None),
]


@pytest.mark.parametrize("name,op,domain", UNARY_CASES, ids=[c[0] for c in UNARY_CASES])
def test_unary_gradients_match_finite_differences(name, op, domain):
    rng = np.random.default_rng(hash(name) % 2**32)
    for case in range(100):
        if domain == "matrix":
            shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        else:
            shape = tuple(rng.integers(1, 4, size=int(rng.integers(1, 3))))
        data = np.abs(_rand(rng, *shape)) + 0.5 if domain == "positive" else _rand(rng, *shape)
        x = Tensor(data, requires_grad=True)
        weights = _rand(rng, *op(Tensor(data)).shape)

        def loss():
            return ad.reduce_sum(ad.mul(op(x), Tensor(weights)))

        loss().backward()
        numeric = numeric_gradient(lambda: loss().item(), x)
        assert_gradients_match(x.grad, numeric, label=f"{name}[{case}]")
        x.zero_grad()


BINARY_CASES = [
    ("add", ad.add),
    ("sub", ad.sub),
    ("mul", ad.mul),
]


@pytest.mark.parametrize("name,op", BINARY_CASES, ids=[c[0] for c in BINARY_CASES])
def test_binary_gradients_with_broadcasting(name, op):
    rng = np.random.default_rng(hash(name) % 2**32)
    for case in range(100):
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        shapes = [((n, m), (n, m)), ((n, m), (m,)), ((n, 1, m), (1, m + 1, m))][case % 3]
        a = Tensor(_rand(rng, *shapes[0]), requires_grad=True)
        b = Tensor(_rand(rng, *shapes[1]), requires_grad=True)
        weights = _rand(rng, *op(a, b).shape)

        def loss():
            return ad.reduce_sum(ad.mul(op(a, b), Tensor(weights)))

        loss().backward()
        for t, label in ((a, "lhs"), (b, "rhs")):
            numeric = numeric_gradient(lambda: loss().item(), t)
            assert_gradients_match(t.grad, numeric, label=f"{name}[{case}].{label}")


def test_matmul_gradients_random_shapes():
    rng = np.random.default_rng(17)
    for case in range(100):
        m, k, n = (int(rng.integers(1, 5)) for _ in range(3))
        a = Tensor(_rand(rng, m, k), requires_grad=True)
        b = Tensor(_rand(rng, k, n), requires_grad=True)
        weights = _rand(rng, m, n)

        def loss():
            return ad.reduce_sum(ad.mul(ad.matmul(a, b), Tensor(weights)))

        loss().backward()
        for t, label in ((a, "a"), (b, "b")):
            numeric = numeric_gradient(lambda: loss().item(), t)
            assert_gradients_match(t.grad, numeric, label=f"matmul[{case}].{label}")


def test_gather_scatter_concat_gradients():
    rng = np.random.default_rng(23)
    for case in range(100):
        rows, cols = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        x = Tensor(_rand(rng, rows, cols), requires_grad=True)
        y = Tensor(_rand(rng, rows, cols), requires_grad=True)
        idx = rng.integers(0, rows, size=int(rng.integers(1, 6)))
        buckets = int(rng.integers(1, 4))
        scatter_idx = rng.integers(0, buckets, size=idx.size)

        def loss():
            gathered = ad.gather_rows(x, idx)
            joined = ad.concat([gathered, ad.gather_rows(y, idx)], axis=-1)
            pooled = ad.scatter_add_rows(joined, scatter_idx, buckets)
            return ad.reduce_sum(ad.mul(pooled, Tensor(weights)))

        weights = _rand(rng, buckets, 2 * cols)
        loss().backward()
        for t, label in ((x, "gather"), (y, "concat")):
            numeric = numeric_gradient(lambda: loss().item(), t)
            assert_gradients_match(t.grad, numeric, label=f"{label}[{case}]")


def test_segment_softmax_gradients():
    rng = np.random.default_rng(29)
    for case in range(100):
        n_seg = int(rng.integers(1, 4))
        size = int(rng.integers(n_seg, 10))
        seg = rng.integers(0, n_seg, size=size)
        seg[:n_seg] = np.arange(n_seg)
        x = Tensor(_rand(rng, size), requires_grad=True)
        weights = _rand(rng, size)

        def loss():
            return ad.reduce_sum(ad.mul(ad.segment_softmax(x, seg, n_seg), Tensor(weights)))

        loss().backward()
        numeric = numeric_gradient(lambda: loss().item(), x)
        assert_gradients_match(x.grad, numeric, label=f"segment_softmax[{case}]")


def test_conv2d_gradients():
    rng = np.random.default_rng(31)
    for case in range(100):
        c_in, c_out = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        kh, kw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        h, w = kh + int(rng.integers(0, 3)), kw + int(rng.integers(0, 3))
        x = Tensor(_rand(rng, c_in, h, w), requires_grad=True)
        k = Tensor(_rand(rng, c_out, c_in, kh, kw), requires_grad=True)
        b = Tensor(_rand(rng, c_out), requires_grad=True)

        def loss():
            return ad.reduce_sum(ad.mul(ad.conv2d_valid(x, k, b), Tensor(weights)))

        weights = _rand(rng, c_out, h - kh + 1, w - kw + 1)
        loss().backward()
        for t, label in ((x, "input"), (k, "kernels"), (b, "bias")):
            numeric = numeric_gradient(lambda: loss().item(), t)
            assert_gradients_match(t.grad, numeric, label=f"conv[{case}].{label}")


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        out = ad.dropout(x, 0.0, np.random.default_rng(0), training=True)
        assert out is x

    def test_eval_mode_is_identity(self):
        x = Tensor([1.0, 2.0, 3.0])
        out = ad.dropout(x, 0.5, np.random.default_rng(0), training=False)
        assert out is x

    def test_training_uses_inverted_scaling(self):
        rng = np.random.default_rng(4)
        x = Tensor(np.ones(10000))
        out = ad.dropout(x, 0.25, rng, training=True).data
        kept = out[out != 0]
        np.testing.assert_allclose(kept, 1.0 / 0.75)
        assert abs(out.mean() - 1.0) < 0.05

    def test_gradient_matches_mask(self):
        x = Tensor(np.ones(50), requires_grad=True)
        rng = np.random.default_rng(5)
        out = ad.dropout(x, 0.5, rng, training=True)
        ad.reduce_sum(out).backward()
        np.testing.assert_allclose(x.grad, (out.data != 0) * 2.0)


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        opt = Adam({"p": p}, lr=0.1)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_magnitude_is_learning_rate(self):
        p = Tensor(np.array([0.5]), requires_grad=True)
        p.grad = np.array([1.0])
        Adam({"p": p}, lr=0.1).step()
        np.testing.assert_allclose(p.data, [0.4], atol=1e-6)

    def test_nan_gradient_rejected_with_name(self):
        p = Tensor(np.array([0.5]), requires_grad=True)
        p.grad = np.array([np.nan])
        opt = Adam({"weights": p}, lr=0.1)
        with pytest.raises(NumericError, match="weights"):
            opt.step()
        np.testing.assert_array_equal(p.data, [0.5])

    def test_matches_reference_trajectory(self):
        # explicit loop implementing the standard bias-corrected update
        rng = np.random.default_rng(6)
        values = rng.normal(size=4)
        grads = [rng.normal(size=4) for _ in range(5)]
        p = Tensor(values.copy(), requires_grad=True)
        opt = Adam({"p": p}, lr=0.01)
        ref, m, v = values.copy(), np.zeros(4), np.zeros(4)
        for t, g in enumerate(grads, start=1):
            p.grad = g.copy()
            opt.step()
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p.data, ref, atol=1e-12)
