'''layers -- differentiable layers and the optimizer shared by all networks
--------------------------------------------------------------------------

Functional primitives (:func:`conv2d`, :func:`batchnorm`, :func:`relu`,
...) operate on :class:`~itpcqa.tensor.Tensor` values; the layer
classes (:class:`Conv2d`, :class:`BatchNorm2d`, :class:`Linear`) own
named parameters and call them.

  >>> relu(Tensor([-1.0, 0.0, 2.0])).data.tolist()
  [0.0, 0.0, 2.0]

  >>> global_avg_pool(Tensor([[[[1.0, 2.0], [3.0, 4.0]]]])).data.tolist()
  [[2.5]]

  >>> concat([Tensor(np.zeros((1, 64))), Tensor(np.ones((1, 64)))]).shape
  (1, 128)

Convolution is cross-correlation: the kernel is not flipped::

  >>> x = Tensor(np.ones((1, 1, 3, 3)))
  >>> conv2d(x, Tensor(np.ones((1, 1, 3, 3)))).data.tolist()
  [[[[9.0]]]]

Gradient reversal is the identity going forward and negates (and
scales) the gradient coming back::

  >>> w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
  >>> r = grad_reverse(w, 1.0)
  >>> r.data.tolist()
  [1.0, 2.0, 3.0]
  >>> backward(r.sum())
  >>> w.grad.tolist()
  [-1.0, -1.0, -1.0]

Parameter initialization depends only on (seed, layer name, shape), so
the order in which an architecture is built does not matter::

  >>> a = Linear('M.fc1', 4, 3, seed=7)
  >>> b = Linear('M.fc1', 4, 3, seed=7)
  >>> bool((a.weight.data == b.weight.data).all())
  True

'''

from collections import OrderedDict
import hashlib
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, ShapeError, backward  # noqa: F401 (doctest)

log = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LOGIT_CLAMP = 30.0


class MissingGradientError(ValueError):
    pass


def conv2d(x, weight, bias=None, stride=1, padding=0):
    '''2-D cross-correlation of an NCHW batch with symmetric zero padding.

    Output side is floor((H + 2p - kH) / stride) + 1.

    >>> conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    Traceback (most recent call last):
      ...
    itpcqa.tensor.ShapeError: conv2d: input has 2 channels, kernel expects 3
    '''
    N, C, H, W = x.shape
    O, Ci, kH, kW = weight.shape
    if Ci != C:
        raise ShapeError('conv2d: input has %d channels, kernel expects %d'
                         % (C, Ci))
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    Ho = (H + 2 * p - kH) // stride + 1
    Wo = (W + 2 * p - kW) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError('conv2d: %dx%d input too small for %dx%d kernel'
                         % (H, W, kH, kW))
    windows = sliding_window_view(xp, (kH, kW), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    # (N*Ho*Wo, C*kH*kW)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(N * Ho * Wo, -1)
    wmat = weight.data.reshape(O, -1)
    out = (cols @ wmat.T).reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, O, 1, 1)
    out = np.ascontiguousarray(out)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(N * Ho * Wo, O)
        dw = (g2.T @ cols).reshape(weight.shape)
        dcols = (g2 @ wmat).reshape(N, Ho, Wo, C, kH, kW)
        dxp = np.zeros_like(xp)
        for i in range(kH):
            for j in range(kW):
                dxp[:, :, i:i + stride * Ho:stride,
                    j:j + stride * Wo:stride] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p:p + H, p:p + W]
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return dx, dw, db

    inputs = (x, weight) + ((bias,) if bias is not None else ())
    return Tensor._result(out, inputs, lambda g: back(g)[:len(inputs)],
                          'conv2d')


def batchnorm(x, gamma, beta, running_mean, running_var, training,
              momentum=BN_MOMENTUM, eps=BN_EPS):
    '''Per-channel normalization of an NCHW batch.

    In training mode, normalize by batch statistics and update the
    running statistics; in eval mode, use the running statistics.

    >>> x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2))
    >>> one = lambda v: Tensor([v])
    >>> out = batchnorm(x, one(2.0), one(1.0), one(0.0), one(1.0),
    ...                 training=False)
    >>> np.allclose(out.data, 2 * x.data + 1, atol=1e-4)
    True

    >>> batchnorm(Tensor(np.ones((1, 1, 1, 1))), one(1.0), one(0.0),
    ...           one(0.0), one(1.0), training=True)
    Traceback (most recent call last):
      ...
    itpcqa.tensor.ShapeError: batchnorm: 1 values per channel; need >= 2
    '''
    C = x.shape[1]
    axes = (0, 2, 3)
    shape = (1, C, 1, 1)
    g4 = gamma.data.reshape(shape)
    if training:
        n = x.size // C
        if n < 2:
            raise ShapeError('batchnorm: %d values per channel; need >= 2'
                             % n)
        mu = x.data.mean(axis=axes, keepdims=True)
        centered = x.data - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        std = np.sqrt(var + eps)
        xhat = centered / std
        running_mean.data = ((1 - momentum) * running_mean.data +
                             momentum * mu.reshape(C))
        running_var.data = ((1 - momentum) * running_var.data +
                            momentum * var.reshape(C) * n / (n - 1))

        def back(g):
            dxhat = g * g4
            dx = (n * dxhat - dxhat.sum(axis=axes, keepdims=True) -
                  xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
                  ) / (n * std)
            return (dx, (g * xhat).sum(axis=axes),
                    g.sum(axis=axes))
    else:
        std = np.sqrt(running_var.data.reshape(shape) + eps)
        xhat = (x.data - running_mean.data.reshape(shape)) / std

        def back(g):
            return (g * g4 / std, (g * xhat).sum(axis=axes),
                    g.sum(axis=axes))

    out = xhat * g4 + beta.data.reshape(shape)
    return Tensor._result(out, (x, gamma, beta), back, 'batchnorm')


def relu(x):
    mask = x.data > 0
    return Tensor._result(np.where(mask, x.data, 0).astype(x.data.dtype),
                          (x,), lambda g: (g * mask,), 'relu')


def sigmoid(x):
    '''Logistic function of logits clamped to [-30, 30].

    Outputs stay strictly inside (0, 1) in the working precision, even
    where float32 would round to 0 or 1::

    >>> s = sigmoid(Tensor([-1000.0, 0.0, 1000.0])).data
    >>> bool((s > 0).all() and (s < 1).all()), float(s[1])
    (True, 0.5)
    '''
    dtype = x.data.dtype
    z = np.clip(x.data.astype(np.float64), -LOGIT_CLAMP, LOGIT_CLAMP)
    inside = (x.data >= -LOGIT_CLAMP) & (x.data <= LOGIT_CLAMP)
    s = np.clip((1.0 / (1.0 + np.exp(-z))).astype(dtype),
                np.nextafter(dtype.type(0), dtype.type(1)),
                np.nextafter(dtype.type(1), dtype.type(0)))
    return Tensor._result(s, (x,), lambda g: (g * s * (1 - s) * inside,),
                          'sigmoid')


def global_avg_pool(x):
    '''(N, C, H, W) -> (N, C)
    '''
    N, C, H, W = x.shape

    def back(g):
        return (np.broadcast_to(g.reshape(N, C, 1, 1) / (H * W),
                                x.shape).copy(),)
    return Tensor._result(x.data.mean(axis=(2, 3)), (x,), back,
                          'global_avg_pool')


def fully_connected(x, weight, bias=None):
    '''Affine map of (N, in) rows by a (out, in) weight.
    '''
    out = x @ weight.transpose()
    return out if bias is None else out + bias


def concat(tensors, axis=1):
    '''Join along the channel axis.

    >>> concat([Tensor(np.zeros((1, 2))), Tensor(np.zeros((2, 2)))])
    Traceback (most recent call last):
      ...
    itpcqa.tensor.ShapeError: concat: shapes (1, 2) and (2, 2) off axis 1
    '''
    first = tensors[0].shape
    for t in tensors[1:]:
        if (len(t.shape) != len(first) or
                any(a != b for ax, (a, b) in enumerate(zip(first, t.shape))
                    if ax != axis)):
            raise ShapeError('concat: shapes %s and %s off axis %d'
                             % (first, t.shape, axis))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))
    return Tensor._result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors), back, 'concat')


def grad_reverse(x, lam=1.0):
    if lam < 0:
        raise ValueError('grad_reverse: lambda must be >= 0, got %s' % lam)
    return Tensor._result(x.data.copy(), (x,), lambda g: (-lam * g,),
                          'grad_reverse')


def _init_rng(seed, name):
    digest = hashlib.sha256(name.encode('utf-8')).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], 'little')])


def glorot_uniform(seed, name, shape, fan_in, fan_out):
    '''Uniform in +/- sqrt(6 / (fan_in + fan_out)), keyed by (seed, name).
    '''
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return _init_rng(seed, name).uniform(-limit, limit, size=shape)


class Layer(object):
    '''A named set of parameter tensors; `requires_grad` marks trainable.
    '''
    def __init__(self, name):
        self.name = name
        self.tensors = OrderedDict()

    def __repr__(self):
        return '%s(%s)' % (self.__class__.__name__, self.name)

    def _add(self, key, data, trainable=True):
        t = Tensor(data, requires_grad=trainable)
        self.tensors['%s.%s' % (self.name, key)] = t
        return t

    def named_tensors(self):
        return list(self.tensors.items())

    def train(self, mode=True):
        pass


class Conv2d(Layer):
    def __init__(self, name, in_channels, out_channels, kernel, stride=1,
                 padding=0, seed=0):
        Layer.__init__(self, name)
        shape = (out_channels, in_channels, kernel, kernel)
        area = kernel * kernel
        self.weight = self._add('weight', glorot_uniform(
            seed, name + '.weight', shape,
            in_channels * area, out_channels * area))
        self.bias = self._add('bias', np.zeros(out_channels))
        self.stride, self.padding = stride, padding

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Layer):
    def __init__(self, name, channels):
        Layer.__init__(self, name)
        self.gamma = self._add('gamma', np.ones(channels))
        self.beta = self._add('beta', np.zeros(channels))
        self.running_mean = self._add('running_mean', np.zeros(channels),
                                      trainable=False)
        self.running_var = self._add('running_var', np.ones(channels),
                                     trainable=False)
        self.training = True

    def train(self, mode=True):
        self.training = mode

    def __call__(self, x):
        return batchnorm(x, self.gamma, self.beta, self.running_mean,
                         self.running_var, self.training)


class Linear(Layer):
    def __init__(self, name, in_features, out_features, seed=0):
        Layer.__init__(self, name)
        self.weight = self._add('weight', glorot_uniform(
            seed, name + '.weight', (out_features, in_features),
            in_features, out_features))
        self.bias = self._add('bias', np.zeros(out_features))

    def __call__(self, x):
        return fully_connected(x, self.weight, self.bias)


def zero_grad(params):
    for _, p in params:
        p.zero_grad()


class Adam(object):
    '''Adaptive-moment optimizer over named trainable tensors.

    Owns the optimizer state: first/second moments per parameter and a
    strictly increasing step counter. Gradients are left untouched;
    zeroing them is the caller's job.

    >>> w = Tensor([1.0], requires_grad=True)
    >>> opt = Adam([('w', w)], lr=0.1)
    >>> opt.step()
    Traceback (most recent call last):
      ...
    itpcqa.layers.MissingGradientError: no gradient for trainable parameter w
    >>> w.grad = np.array([2.0], dtype=w.data.dtype)
    >>> opt.step()
    >>> float(w.data[0]) < 1.0, opt.steps
    (True, 1)
    '''
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [(n, p) for n, p in params if p.requires_grad]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.steps = 0
        self.m = OrderedDict((n, np.zeros_like(p.data))
                             for n, p in self.params)
        self.v = OrderedDict((n, np.zeros_like(p.data))
                             for n, p in self.params)

    def __repr__(self):
        return 'Adam(%d params, lr=%s, step=%d)' % (
            len(self.params), self.lr, self.steps)

    def step(self):
        for name, p in self.params:
            if p.grad is None:
                raise MissingGradientError(
                    'no gradient for trainable parameter %s' % name)
        self.steps += 1
        t = self.steps
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * (g * g)
            mhat = self.m[name] / (1 - b1 ** t)
            vhat = self.v[name] / (1 - b2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state(self):
        '''Named arrays for checkpointing.
        '''
        out = OrderedDict([('adam.step', np.array([self.steps],
                                                  dtype=np.int64))])
        for n in self.m:
            out['adam.m.' + n] = self.m[n]
            out['adam.v.' + n] = self.v[n]
        return out

    def load_state(self, state):
        self.steps = int(state['adam.step'][0])
        for n in self.m:
            self.m[n] = state['adam.m.' + n].astype(self.m[n].dtype)
            self.v[n] = state['adam.v.' + n].astype(self.v[n].dtype)
