"""test_layers -- layers against slow, obviously-correct oracles

Convolution is compared with a nested-loop cross-correlation, batch
normalization and Adam with scalar arithmetic.

"""

import math
import threading
import unittest

import numpy as np

from .layers import (Adam, BatchNorm2d, Conv2d, Linear, MissingGradientError,
                     batchnorm, conv2d, concat, sigmoid, zero_grad)
from .tensor import (ShapeError, Tensor, backward, default_dtype, no_grad,
                     precision, set_precision)


def conv_oracle(x, w, b, stride, pad):
    N, C, H, W = x.shape
    O, _, kH, kW = w.shape
    xp = np.zeros((N, C, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - kH) // stride + 1
    Wo = (W + 2 * pad - kW) // stride + 1
    out = np.zeros((N, O, Ho, Wo))
    for n in range(N):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0 if b is None else b[o]
                    for c in range(C):
                        for u in range(kH):
                            for v in range(kW):
                                acc += (xp[n, c, i * stride + u,
                                           j * stride + v] * w[o, c, u, v])
                    out[n, o, i, j] = acc
    return out


class TestConv2d(unittest.TestCase):
    cases = [
        # (N, C, H, W), (O, k), stride, pad
        ((1, 1, 5, 5), (1, 3), 1, 0),
        ((2, 3, 6, 6), (4, 3), 1, 1),
        ((2, 2, 7, 5), (3, 3), 2, 1),
        ((1, 3, 4, 4), (2, 1), 1, 0),
        ((3, 2, 9, 9), (2, 5), 2, 2),
    ]

    def test_matches_nested_loops(self):
        rng = np.random.default_rng(11)
        with precision('float64'):
            for (xs, (O, k), stride, pad) in self.cases:
                x = rng.standard_normal(xs)
                w = rng.standard_normal((O, xs[1], k, k))
                b = rng.standard_normal(O)
                got = conv2d(Tensor(x), Tensor(w), Tensor(b),
                             stride, pad).data
                want = conv_oracle(x, w, b, stride, pad)
                self.assertEqual(got.shape, want.shape)
                self.assertLess(np.abs(got - want).max(), 1e-12)

    def test_output_side(self):
        x = Tensor(np.zeros((1, 3, 224, 224)))
        w = Tensor(np.zeros((8, 3, 3, 3)))
        self.assertEqual(conv2d(x, w, stride=2, padding=1).shape,
                         (1, 8, 112, 112))

    def test_too_small(self):
        with self.assertRaises(ShapeError):
            conv2d(Tensor(np.zeros((1, 1, 2, 2))),
                   Tensor(np.zeros((1, 1, 3, 3))))

    def test_input_gradient_is_transposed_conv(self):
        """d(sum(conv))/dx counts how many windows cover each pixel.
        """
        with precision('float64'):
            x = Tensor(np.zeros((1, 1, 4, 4)), requires_grad=True)
            w = Tensor(np.ones((1, 1, 3, 3)))
            backward(conv2d(x, w).sum())
        self.assertEqual(x.grad[0, 0].tolist(),
                         [[1, 2, 2, 1], [2, 4, 4, 2],
                          [2, 4, 4, 2], [1, 2, 2, 1]])


class TestBatchNorm(unittest.TestCase):
    def test_training_scalar_oracle(self):
        values = [1.0, 2.0, 4.0, 9.0]
        with precision('float64'):
            x = Tensor(np.array(values).reshape(4, 1, 1, 1))
            rm, rv = Tensor([0.0]), Tensor([1.0])
            out = batchnorm(x, Tensor([1.5]), Tensor([0.25]), rm, rv,
                            training=True)
        mu = sum(values) / 4
        var = sum((v - mu) ** 2 for v in values) / 4
        for got, v in zip(out.data.reshape(-1), values):
            want = 1.5 * (v - mu) / math.sqrt(var + 1e-5) + 0.25
            self.assertAlmostEqual(float(got), want, places=12)
        self.assertAlmostEqual(float(rm.data[0]), 0.1 * mu, places=12)
        self.assertAlmostEqual(float(rv.data[0]),
                               0.9 + 0.1 * var * 4 / 3, places=12)

    def test_eval_uses_running_stats(self):
        bn = BatchNorm2d('bn', 2)
        bn.running_mean.data = np.array([1.0, -1.0], dtype=np.float32)
        bn.running_var.data = np.array([4.0, 1.0], dtype=np.float32)
        bn.train(False)
        out = bn(Tensor(np.full((1, 2, 1, 1), 3.0)))
        np.testing.assert_allclose(out.data.reshape(-1),
                                   [2 / math.sqrt(4 + 1e-5),
                                    4 / math.sqrt(1 + 1e-5)], rtol=1e-6)
        self.assertEqual(bn.running_mean.data.tolist(), [1.0, -1.0])

    def test_running_stats_not_trainable(self):
        names = [n for n, t in BatchNorm2d('g.bn1', 3).named_tensors()
                 if t.requires_grad]
        self.assertEqual(names, ['g.bn1.gamma', 'g.bn1.beta'])


class TestInit(unittest.TestCase):
    def test_independent_of_build_order(self):
        a1 = Conv2d('g.conv1', 3, 8, 3, seed=5)
        a2 = Linear('r.fc1', 8, 4, seed=5)
        b2 = Linear('r.fc1', 8, 4, seed=5)
        b1 = Conv2d('g.conv1', 3, 8, 3, seed=5)
        self.assertTrue((a1.weight.data == b1.weight.data).all())
        self.assertTrue((a2.weight.data == b2.weight.data).all())

    def test_names_and_seeds_differ(self):
        base = Linear('r.fc1', 8, 4, seed=5).weight.data
        self.assertFalse((Linear('r.fc2', 8, 4, seed=5).weight.data ==
                          base).all())
        self.assertFalse((Linear('r.fc1', 8, 4, seed=6).weight.data ==
                          base).all())

    def test_glorot_limit(self):
        w = Linear('m.fc', 100, 50, seed=0).weight.data
        limit = math.sqrt(6.0 / 150) * (1 + 1e-6)  # float32 rounding
        self.assertLessEqual(np.abs(w).max(), limit)


class TestAdam(unittest.TestCase):
    def test_three_steps_scalar_oracle(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        grads = [0.5, -0.2, 0.1]
        with precision('float64'):
            w = Tensor([1.0], requires_grad=True)
        opt = Adam([('w', w)], lr=lr, beta1=b1, beta2=b2, eps=eps)

        want, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            w.grad = np.array([g])
            opt.step()
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            want -= lr * (m / (1 - b1 ** t)) / (
                math.sqrt(v / (1 - b2 ** t)) + eps)
            self.assertLess(abs(float(w.data[0]) - want), 1e-12)
        self.assertEqual(opt.steps, 3)

    def test_zero_gradient_means_no_update(self):
        w = Tensor([0.25, -0.5], requires_grad=True)
        opt = Adam([('w', w)], lr=0.1)
        before = w.data.copy()
        for _ in range(3):
            zero_grad([('w', w)])
            opt.step()
        self.assertTrue((w.data == before).all())

    def test_missing_gradient(self):
        w = Tensor([1.0], requires_grad=True)
        with self.assertRaises(MissingGradientError):
            Adam([('w', w)]).step()

    def test_state_round_trip(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        opt = Adam([('w', w)], lr=0.1)
        w.grad = np.array([0.3, -0.3], dtype=w.data.dtype)
        opt.step()
        other = Adam([('w', Tensor([1.0, 2.0], requires_grad=True))])
        other.load_state(opt.state())
        self.assertEqual(other.steps, 1)
        self.assertTrue((other.m['w'] == opt.m['w']).all())
        self.assertTrue((other.v['w'] == opt.v['w']).all())


class TestConcat(unittest.TestCase):
    def test_gradient_splits(self):
        with precision('float64'):
            a = Tensor(np.ones((2, 3)), requires_grad=True)
            b = Tensor(np.ones((2, 2)), requires_grad=True)
            weights = Tensor(np.arange(10.0).reshape(2, 5))
            backward((concat([a, b]) * weights).sum())
        self.assertEqual(a.grad.tolist(), [[0, 1, 2], [5, 6, 7]])
        self.assertEqual(b.grad.tolist(), [[3, 4], [8, 9]])


class TestSigmoid(unittest.TestCase):
    def test_strictly_inside_unit_interval(self):
        for name in ('float32', 'float64'):
            with precision(name):
                s = sigmoid(Tensor([-100.0, -30.0, 30.0, 100.0])).data
            self.assertEqual(s.dtype, np.dtype(name))
            self.assertTrue(((s > 0) & (s < 1)).all(), (name, s))

    def test_float32_close_to_exact(self):
        x = np.linspace(-8, 8, 33)
        with precision('float32'):
            s = sigmoid(Tensor(x)).data
        self.assertLess(float(np.abs(s - 1 / (1 + np.exp(-x))).max()), 1e-7)

    def test_saturated_logits_pass_no_gradient(self):
        with precision('float64'):
            x = Tensor([-31.0, 0.0, 31.0], requires_grad=True)
            backward(sigmoid(x).sum())
        self.assertEqual(x.grad.tolist(), [0.0, 0.25, 0.0])


class TestRunMode(unittest.TestCase):
    def test_threads_keep_their_own_mode(self):
        seen = {}

        def worker():
            x = Tensor([1.0, 2.0], requires_grad=True)
            seen['dtype'] = default_dtype()
            seen['recorded'] = (x * 2).requires_grad
            set_precision('float64')

        with precision('float64'), no_grad():
            t = threading.Thread(target=worker)
            t.start()
            t.join()
            self.assertIs(default_dtype(), np.float64)
            x = Tensor([1.0], requires_grad=True)
            self.assertFalse((x * 2).requires_grad)
        self.assertEqual(seen, {'dtype': np.float32, 'recorded': True})
        self.assertIs(default_dtype(), np.float32)


if __name__ == '__main__':
    unittest.main()
