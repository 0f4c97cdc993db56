"""
ops 单元测试
测试前向语义、形状规则与每个运算的梯度
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp


def _rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestConvolutions:
    """卷积运算"""

    def test_conv1d_dilated_matches_definition(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        rng = _rng(1)
        x = rng.normal(size=(2, 3, 7))
        w = rng.normal(size=(4, 2, 2))
        out = ops.conv1d_dilated(Tensor(x), Tensor(w), dilation=3).data

        assert out.shape == (4, 3, 4)
        expected = np.zeros((4, 3, 4))
        for c in range(4):
            for n in range(3):
                for t in range(4):
                    expected[c, n, t] = sum(
                        w[c, ci, j] * x[ci, n, t + j * 3] for ci in range(2) for j in range(2)
                    )
        np.testing.assert_allclose(out, expected, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(
        t_in=st.integers(min_value=2, max_value=16),
        k=st.integers(min_value=1, max_value=3),
        d=st.integers(min_value=1, max_value=5),
        batch=st.booleans(),
    )
    def test_conv1d_shape_rule(self, t_in, k, d, batch):
        """输出长度为 T − (k−1)·d；不足时报错"""
        from stimpute import ops
        from stimpute.exceptions import DimensionError
        from stimpute.tensor import Tensor

        shape = (2, 3, 2, t_in) if batch else (3, 2, t_in)
        x = Tensor(np.ones(shape))
        w = Tensor(np.ones((5, 3, k)))
        t_out = t_in - (k - 1) * d
        if t_out <= 0:
            with pytest.raises(DimensionError):
                ops.conv1d_dilated(x, w, d)
        else:
            out = ops.conv1d_dilated(x, w, d)
            assert out.shape == shape[:-3] + (5, 2, t_out)

    def test_conv1d_rejects_channel_mismatch(self):
        from stimpute import ops
        from stimpute.exceptions import DimensionError
        from stimpute.tensor import Tensor

        with pytest.raises(DimensionError):
            ops.conv1d_dilated(Tensor(np.ones((2, 3, 5))), Tensor(np.ones((4, 3, 2))), 1)

    @pytest.mark.parametrize("dilation", [0, -1, 1.5, True])
    def test_conv1d_rejects_bad_dilation(self, dilation):
        from stimpute import ops
        from stimpute.exceptions import ArgumentError
        from stimpute.tensor import Tensor

        with pytest.raises(ArgumentError):
            ops.conv1d_dilated(Tensor(np.ones((2, 3, 5))), Tensor(np.ones((4, 2, 2))), dilation)

    def test_conv1x1_is_channel_matmul(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        rng = _rng(2)
        x = rng.normal(size=(2, 3, 2, 4))
        w = rng.normal(size=(5, 3))
        b = rng.normal(size=5)
        out = ops.conv1x1(Tensor(x), Tensor(w), Tensor(b)).data

        expected = np.einsum("oc,bcnt->bont", w, x) + b[None, :, None, None]
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestElementwise:
    """逐元素运算"""

    def test_dispatch(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        a = Tensor(np.array([-1.0, 0.0, 2.0]))
        b = Tensor(np.array([3.0, 4.0, 5.0]))

        np.testing.assert_allclose(ops.elementwise("tanh", a).data, np.tanh(a.data))
        np.testing.assert_allclose(ops.elementwise("relu", a).data, [0.0, 0.0, 2.0])
        np.testing.assert_allclose(ops.elementwise("add", a, b).data, [2.0, 4.0, 7.0])
        np.testing.assert_allclose(ops.elementwise("mul", a, b).data, [-3.0, 0.0, 10.0])

    def test_unknown_kind_and_missing_operand(self):
        from stimpute import ops
        from stimpute.exceptions import ArgumentError
        from stimpute.tensor import Tensor

        a = Tensor(np.ones(2))
        with pytest.raises(ArgumentError):
            ops.elementwise("exp", a)
        with pytest.raises(ArgumentError):
            ops.elementwise("add", a)

    def test_binary_shapes_must_match(self):
        from stimpute import ops
        from stimpute.exceptions import DimensionError
        from stimpute.tensor import Tensor

        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones(2)), Tensor(np.ones(3)))

    def test_sigmoid_does_not_overflow(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        y = ops.sigmoid(Tensor(np.array([-1000.0, 0.0, 1000.0]))).data
        np.testing.assert_allclose(y, [0.0, 0.5, 1.0], atol=1e-12)

    def test_relu_subgradient_at_zero(self):
        from stimpute import ops
        from stimpute.tensor import Tape, Tensor

        a = Tensor(np.array([0.0, 1.0]), requires_grad=True)
        with Tape():
            loss = ops.reduce_sum(ops.relu(a))
        loss.backward()
        np.testing.assert_array_equal(a.grad, [0.0, 1.0])


class TestShapeOps:
    """形状类运算"""

    def test_concat_channels(self):
        from stimpute import ops
        from stimpute.exceptions import DimensionError
        from stimpute.tensor import Tensor

        a = Tensor(np.zeros((2, 1, 3, 4)))
        b = Tensor(np.ones((2, 2, 3, 4)))
        joined = ops.concat_channels(a, b)
        assert joined.shape == (2, 3, 3, 4)
        np.testing.assert_array_equal(joined.data[:, 1:], b.data)

        with pytest.raises(DimensionError):
            ops.concat_channels(a, Tensor(np.ones((2, 2, 3, 5))))

    def test_crop_time_keeps_last_steps(self):
        from stimpute import ops
        from stimpute.exceptions import ArgumentError
        from stimpute.tensor import Tensor

        x = Tensor(np.arange(10.0).reshape(1, 2, 5))
        np.testing.assert_array_equal(ops.crop_time(x, 2).data, [[[3.0, 4.0], [8.0, 9.0]]])
        with pytest.raises(ArgumentError):
            ops.crop_time(x, 6)

    def test_expand_embeddings(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        e = np.arange(6.0).reshape(3, 2)
        out = ops.expand_embeddings(Tensor(e), (4,), 5).data
        assert out.shape == (4, 2, 3, 5)
        np.testing.assert_array_equal(out[1, :, :, 3], e.T)

    def test_reshape_rejects_bad_size(self):
        from stimpute import ops
        from stimpute.exceptions import DimensionError
        from stimpute.tensor import Tensor

        with pytest.raises(DimensionError):
            ops.reshape(Tensor(np.ones(6)), (4,))


class TestAttentionOps:
    """softmax / layer_norm / 注意力"""

    @settings(max_examples=50, deadline=None)
    @given(
        hnp.arrays(
            np.float64,
            hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5),
            elements=st.floats(-50, 50),
        )
    )
    def test_softmax_rows_sum_to_one(self, x):
        from stimpute import ops
        from stimpute.tensor import Tensor

        y = ops.softmax(Tensor(x), axis=-1).data
        assert (y >= 0).all()
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)

    def test_softmax_stable_for_large_inputs(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        y = ops.softmax(Tensor(np.array([1000.0, 1000.0])), axis=-1).data
        np.testing.assert_allclose(y, [0.5, 0.5])

    def test_layer_norm_statistics(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        x = _rng(3).normal(3.0, 2.0, size=(2, 6, 3, 4))
        y = ops.layer_norm(Tensor(x), Tensor(np.ones(6)), Tensor(np.zeros(6)), 1e-12).data

        np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-10)
        np.testing.assert_allclose(y.var(axis=1), 1.0, atol=1e-6)

    def test_layer_norm_validates(self):
        from stimpute import ops
        from stimpute.exceptions import ArgumentError, DimensionError
        from stimpute.tensor import Tensor

        x = Tensor(np.ones((3, 2, 2)))
        with pytest.raises(DimensionError):
            ops.layer_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(3)))
        with pytest.raises(ArgumentError):
            ops.layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=0.0)

    def test_scores_and_weighted_sum(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        rng = _rng(4)
        q = rng.normal(size=(3, 4, 2))
        k = rng.normal(size=(3, 4, 2))
        h = rng.normal(size=(5, 4, 2))
        scores = ops.scaled_scores(Tensor(q), Tensor(k), 0.5).data
        assert scores.shape == (2, 4, 4)
        np.testing.assert_allclose(scores[1, 0, 3], 0.5 * q[:, 0, 1] @ k[:, 3, 1])

        alpha = np.full((2, 4, 4), 0.25)
        out = ops.weighted_sum(Tensor(alpha), Tensor(h)).data
        np.testing.assert_allclose(out, np.repeat(h.mean(axis=1, keepdims=True), 4, axis=1))

    def test_masked_mse(self):
        from stimpute import ops
        from stimpute.tensor import Tensor

        x_hat = Tensor(np.array([1.0, 2.0, 3.0]))
        x_true = np.array([0.0, 0.0, 0.0])
        mask = np.array([1.0, 0.0, 1.0])

        assert ops.masked_mse(x_hat, x_true, mask).item() == pytest.approx(5.0)
        assert ops.masked_mse(x_hat, x_true, np.zeros(3)).item() == 0.0


class TestOpGradients:
    """每个运算的有限差分检查"""

    @pytest.mark.parametrize(
        "build",
        [
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.conv1d_dilated(x, w["conv"], 2), ops.conv1d_dilated(x, w["conv"], 2))),
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.conv1x1(x, w["proj"], w["bias"]), ops.tanh(ops.conv1x1(x, w["proj"])))),
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.sigmoid(x), ops.tanh(x))),
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.layer_norm(x, w["gain"], w["beta"]), x)),
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.softmax(x, axis=-2), x)),
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.crop_time(x, 3), ops.crop_time(x, 3))),
            lambda ops, x, w: ops.reduce_sum(ops.mul(ops.concat_channels(x, x), ops.concat_channels(x, ops.tanh(x)))),
        ],
        ids=["conv1d", "conv1x1", "tanh_sigmoid", "layer_norm", "softmax", "crop_time", "concat"],
    )
    def test_input_gradient(self, build):
        from stimpute import ops
        from stimpute.gradcheck import grad_check
        from stimpute.tensor import Tensor

        rng = _rng(5)
        weights = {
            "conv": Tensor(rng.normal(size=(2, 3, 2))),
            "proj": Tensor(rng.normal(size=(2, 3))),
            "bias": Tensor(rng.normal(size=2)),
            "gain": Tensor(rng.normal(size=3)),
            "beta": Tensor(rng.normal(size=3)),
        }
        x = Tensor(rng.normal(size=(2, 3, 2, 5)))
        report = grad_check(lambda t: build(ops, t, weights), x)
        assert report.passed, report.to_dict()

    def test_attention_gradients(self):
        from stimpute import ops
        from stimpute.gradcheck import grad_check_params
        from stimpute.tensor import Tensor

        rng = _rng(6)
        params = {
            "h": Tensor(rng.normal(size=(2, 3, 4, 2))),
            "e": Tensor(rng.normal(size=(4, 2))),
            "wq": Tensor(rng.normal(size=(3, 5))),
            "wk": Tensor(rng.normal(size=(3, 5))),
        }

        def loss():
            h = params["h"]
            joined = ops.concat_channels(h, ops.expand_embeddings(params["e"], (2,), 2))
            q = ops.conv1x1(joined, params["wq"])
            k = ops.conv1x1(joined, params["wk"])
            alpha = ops.softmax(ops.scaled_scores(q, k, ops.inverse_sqrt(3)), axis=-1)
            out = ops.weighted_sum(alpha, h)
            return ops.reduce_sum(ops.mul(out, out))

        suite = grad_check_params(loss, params)
        assert suite.passed, suite.to_dict()

    def test_masked_mse_gradient(self):
        from stimpute import ops
        from stimpute.gradcheck import grad_check
        from stimpute.tensor import Tensor

        rng = _rng(7)
        x_true = rng.normal(size=(3, 4))
        mask = (rng.random((3, 4)) < 0.5).astype(np.float64)
        mask[0, 0] = 1.0

        report = grad_check(lambda t: ops.masked_mse(t, x_true, mask), Tensor(rng.normal(size=(3, 4))))
        assert report.passed
