import numpy as np
import pytest

from otfspredict.nn import functional as F
from otfspredict.nn.checkpoint import decode_checkpoint, encode_checkpoint
from otfspredict.nn.optim import Adam, AdamState, adam_step
from otfspredict.nn.tensor import Tensor, concat, no_grad

from gradcheck import max_rel_error, param

TOL = 1e-4


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = Tensor(rng.standard_normal((2, 1, 5, 5)))
        w = Tensor(np.ones((1, 1, 1, 1)))
        np.testing.assert_array_equal(F.conv2d(x, w).data, x.data)

    def test_hand_sum(self):
        out = F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 1, 1, 1)
        assert out.data.item() == 9.0

    def test_direct_loop_oracle(self, rng):
        x = rng.standard_normal((2, 3, 7, 6))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros_like(out)
        for i in range(out.shape[2]):
            for j in range(out.shape[3]):
                patch = xp[:, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                ref[:, :, i, j] = np.einsum("bcij,ocij->bo", patch, w) + b
        np.testing.assert_allclose(out, ref, atol=1e-12)

    @pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 4), (2, 0, 2), (1, 1, 1), (3, 2, 3)])
    def test_gradients(self, rng, stride, padding, k):
        x = param(rng, 2, 2, 6, 5)
        w = param(rng, 3, 2, k, k)
        b = param(rng, 3)
        assert max_rel_error(lambda x, w, b: F.conv2d(x, w, b, stride, padding), [x, w, b]) < TOL

    def test_edge_size_one(self, rng):
        x = param(rng, 1, 1, 1, 1)
        w = param(rng, 1, 1, 1, 1)
        assert max_rel_error(lambda x, w: F.conv2d(x, w), [x, w]) < TOL

    def test_rejects_empty_output(self):
        with pytest.raises(ValueError):
            F.conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            F.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


class TestConvTranspose:
    @pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 4), (2, 0, 2), (1, 1, 3)])
    def test_adjoint_identity(self, rng, stride, padding, k):
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, k, k))
        y_shape = F.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding).shape
        y = rng.standard_normal(y_shape)
        lhs = np.sum(F.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding).data * y)
        rhs = np.sum(x * F.conv_transpose2d(Tensor(y), Tensor(w), stride=stride, padding=padding).data)
        assert abs(lhs - rhs) < 1e-10

    def test_doubles_spatial_dims(self, rng):
        out = F.conv_transpose2d(Tensor(rng.standard_normal((1, 2, 4, 4))), Tensor(rng.standard_normal((2, 3, 4, 4))), stride=2, padding=1)
        assert out.shape == (1, 3, 8, 8)
        assert F.conv_transpose_output_size(4, 4, 2, 1) == 8

    @pytest.mark.parametrize("stride,padding,k", [(2, 1, 4), (1, 0, 2), (2, 0, 3)])
    def test_gradients(self, rng, stride, padding, k):
        x = param(rng, 2, 3, 3, 4)
        w = param(rng, 3, 2, k, k)
        b = param(rng, 2)
        assert max_rel_error(lambda x, w, b: F.conv_transpose2d(x, w, b, stride, padding), [x, w, b]) < TOL

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            F.conv_transpose2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 1, 2, 2))))

    @pytest.mark.parametrize("size,stride,padding,k", [(9, 2, 1, 4), (7, 3, 0, 2), (10, 3, 1, 3)])
    def test_adjoint_odd_sizes(self, rng, size, stride, padding, k):
        x = rng.standard_normal((1, 2, size, size))
        w = rng.standard_normal((3, 2, k, k))
        y_t = F.conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding)
        extra = size - F.conv_transpose_output_size(y_t.shape[2], k, stride, padding)
        assert 0 <= extra < stride
        y = rng.standard_normal(y_t.shape)
        back = F.conv_transpose2d(Tensor(y), Tensor(w), stride=stride, padding=padding, output_padding=extra).data
        assert back.shape == x.shape
        assert abs(np.sum(y_t.data * y) - np.sum(x * back)) < 1e-10

    def test_output_padding_gradients(self, rng):
        x, w = param(rng, 1, 2, 3, 3), param(rng, 2, 2, 3, 3)
        assert max_rel_error(lambda x, w: F.conv_transpose2d(x, w, stride=2, padding=1, output_padding=1), [x, w]) < TOL

    def test_output_padding_range(self):
        with pytest.raises(ValueError):
            F.conv_transpose2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), stride=2, output_padding=2)


class TestLeakyRelu:
    def test_values(self):
        out = F.leaky_relu(Tensor(np.array([2.0, -2.0])), 0.01).data
        np.testing.assert_allclose(out, [2.0, -0.02])

    def test_gradient(self, rng):
        x = Tensor(rng.choice([-1, 1], 20) * rng.uniform(0.1, 2.0, 20), requires_grad=True)
        assert max_rel_error(F.leaky_relu, [x]) < TOL
        x.grad = None
        F.leaky_relu(x).sum().backward()
        np.testing.assert_allclose(x.grad, np.where(x.data > 0, 1.0, 0.01))


class TestAttention:
    @staticmethod
    def params(rng, d):
        p = {}
        for n in "qkvo":
            p["w" + n] = param(rng, d, d, scale=0.5)
            p["b" + n] = param(rng, d, scale=0.1)
        return p

    def test_single_position(self, rng):
        p = self.params(rng, 8)
        _, w = F.multi_head_attention(Tensor(rng.standard_normal((1, 8))), p, heads=2, mask=F.causal_mask(1), return_weights=True)
        assert np.all(w == 1.0)

    def test_rows_sum_to_one(self, rng):
        p = self.params(rng, 8)
        _, w = F.multi_head_attention(Tensor(rng.standard_normal((3, 5, 8))), p, heads=4, mask=F.causal_mask(5), return_weights=True)
        assert np.max(np.abs(w.sum(axis=-1) - 1)) < 1e-12
        assert np.all(w[..., np.triu_indices(5, 1)[0], np.triu_indices(5, 1)[1]] == 0)

    def test_causal_perturbation_exact(self, rng):
        p = self.params(rng, 8)
        mask = F.causal_mask(6)
        for _ in range(10):
            z = rng.standard_normal((6, 8))
            base = F.multi_head_attention(Tensor(z), p, 2, mask).data
            j = rng.integers(1, 6)
            z2 = z.copy()
            z2[j] += rng.standard_normal(8) * 10
            out = F.multi_head_attention(Tensor(z2), p, 2, mask).data
            assert np.array_equal(out[:j], base[:j])
            assert not np.array_equal(out[j], base[j])

    def test_heads_must_divide(self, rng):
        with pytest.raises(ValueError):
            F.multi_head_attention(Tensor(rng.standard_normal((3, 6))), self.params(rng, 6), heads=4)

    def test_gradients(self, rng):
        p = self.params(rng, 6)
        z = param(rng, 2, 4, 6)
        names = list(p)
        fn = lambda z, *ws: F.multi_head_attention(z, dict(zip(names, ws)), 3, F.causal_mask(4))
        assert max_rel_error(fn, [z] + [p[n] for n in names]) < TOL


class TestLayerNorm:
    def test_constant_input(self):
        b = Tensor(np.array([0.5, -1.0, 2.0]))
        out = F.layer_norm(Tensor(np.full((2, 3), 7.0)), Tensor(np.ones(3)), b)
        np.testing.assert_allclose(out.data, np.broadcast_to(b.data, (2, 3)))

    def test_standardized(self, rng):
        out = F.layer_norm(Tensor(rng.standard_normal((4, 64)) * 3 + 1), Tensor(np.ones(64)), Tensor(np.zeros(64)), eps=0.0).data
        assert np.max(np.abs(out.mean(axis=-1))) < 1e-10
        assert np.max(np.abs(out.var(axis=-1) - 1)) < 1e-10

    def test_gradients(self, rng):
        x, g, b = param(rng, 3, 5), param(rng, 5), param(rng, 5)
        assert max_rel_error(F.layer_norm, [x, g, b]) < TOL


class TestFeedForward:
    def test_identity_weights(self, rng):
        z = rng.uniform(0.1, 1.0, (3, 4))
        eye, zero = Tensor(np.eye(4)), Tensor(np.zeros(4))
        np.testing.assert_allclose(F.feed_forward(Tensor(z), eye, zero, eye, zero).data, z)

    def test_hand_case(self):
        z = Tensor(np.array([[1.0, -2.0]]))
        w1 = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b1 = Tensor(np.array([0.0, 1.0]))
        w2 = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        b2 = Tensor(np.array([0.5, 0.5]))
        # hidden pre-activation: [1-6, 2-8+1] = [-5, -5] -> leaky -> [-0.05, -0.05]
        np.testing.assert_allclose(F.feed_forward(z, w1, b1, w2, b2).data, [[0.45, 0.45]])

    def test_gradients(self, rng):
        ws = [param(rng, 2, 3, 4), param(rng, 4, 5), param(rng, 5), param(rng, 5, 4), param(rng, 4)]
        assert max_rel_error(F.feed_forward, ws) < TOL


class TestMse:
    def test_zero(self, rng):
        x = rng.standard_normal(5)
        assert F.mse_loss(Tensor(x), x).data == 0.0

    def test_ones(self):
        assert F.mse_loss(Tensor(np.ones(4)), np.zeros(4)).data == 1.0

    def test_gradient(self, rng):
        p, t = param(rng, 2, 3), rng.standard_normal((2, 3))
        F.mse_loss(p, t).backward()
        np.testing.assert_allclose(p.grad, 2 * (p.data - t) / 6)
        p2 = param(rng, 2, 3)
        assert max_rel_error(lambda p: F.mse_loss(p, t), [p2]) < TOL


class TestBackward:
    def test_scalar_chain(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        (x * 3.0).backward()
        assert x.grad == 3.0

    def test_composite_graph(self, rng):
        x = param(rng, 2, 1, 5, 5)
        w = param(rng, 2, 1, 3, 3)
        t = rng.standard_normal((2, 2, 3, 3))
        assert max_rel_error(lambda x, w: F.mse_loss(F.leaky_relu(F.conv2d(x, w)), t), [x, w]) < TOL

    def test_twice_is_error(self):
        x = Tensor(np.array(1.5), requires_grad=True)
        y = x * x
        y.backward()
        with pytest.raises(RuntimeError):
            y.backward()

    def test_unreachable_gets_zero_via_adam(self):
        used = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        opt = Adam({"used": used, "unused": unused})
        (used * 2.0).sum().backward()
        assert unused.grad is None
        opt.step()
        np.testing.assert_array_equal(unused.data, np.ones(3))
        assert not np.array_equal(used.data, np.ones(3))

    def test_shared_subexpression(self, rng):
        x = param(rng, 3)
        assert max_rel_error(lambda x: (x * x + x) * x, [x]) < TOL

    def test_reshape_transpose_concat_getitem(self, rng):
        a, b = param(rng, 2, 3), param(rng, 2, 3)
        fn = lambda a, b: concat([a.reshape(3, 2), b.transpose(1, 0).reshape(3, 2)], axis=0)[1:4] * 2.0
        assert max_rel_error(fn, [a, b]) < TOL

    def test_no_grad_records_nothing(self, rng):
        x = param(rng, 3)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        st = AdamState()
        adam_step(p, {"w": np.zeros(2)}, st)
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])
        assert st.step == 1

    def test_first_step_magnitude(self):
        # bias-corrected m/sqrt(v) = g/|g| on step one, so the move is lr * g/(|g| + eps)
        p = {"w": np.array([0.0])}
        adam_step(p, {"w": np.array([1.0])}, AdamState(lr=1e-3))
        assert p["w"][0] == pytest.approx(-1e-3 * 1.0 / (1.0 + 1e-8), rel=1e-12)

    def test_constant_gradient_steps(self):
        p = {"w": np.array([0.0])}
        st = AdamState(lr=0.1)
        for _ in range(5):
            adam_step(p, {"w": np.array([1.0])}, st)
        assert p["w"][0] == pytest.approx(-0.5, rel=1e-6)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(3)
            p = {"w": rng.standard_normal(5)}
            st = AdamState()
            for _ in range(10):
                adam_step(p, {"w": rng.standard_normal(5)}, st)
            return p["w"]

        assert np.array_equal(run(), run())

    def test_shape_check(self):
        with pytest.raises(ValueError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


class TestCheckpoint:
    def test_round_trip(self, rng):
        tensors = {"a": rng.standard_normal((2, 3)).astype(np.float32), "b.bias": np.arange(4, dtype=np.float32), "s": np.array(1.5, dtype=np.float32)}
        buf = encode_checkpoint(tensors)
        back = decode_checkpoint(buf)
        assert list(back) == list(tensors)
        for k in tensors:
            assert np.array_equal(back[k], tensors[k])
        assert encode_checkpoint(back) == buf
