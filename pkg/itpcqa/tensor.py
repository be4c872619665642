'''tensor -- dense n-dimensional arrays with reverse-mode differentiation
------------------------------------------------------------------------

A :class:`Tensor` wraps a numpy array. Arithmetic on tensors that
require gradients records a :class:`Node` for each executed operation;
:func:`backward` visits those nodes once each, in reverse topological
order, and leaves d(root)/d(leaf) in each leaf's `grad`::

  >>> w = Tensor([3.0], requires_grad=True)
  >>> backward((w * w).sum())
  >>> w.grad.tolist()
  [6.0]

Gradients reaching a leaf along several paths are summed::

  >>> w = Tensor([[1.0, 1.0], [1.0, 1.0]], requires_grad=True)
  >>> backward(w.sum() + w.sum())
  >>> w.grad.tolist()
  [[2.0, 2.0], [2.0, 2.0]]

  >>> w = Tensor([1.0, 2.0], requires_grad=True)
  >>> t = Tensor([0.0, 0.0])
  >>> backward(((w - t) * (w - t)).mean())
  >>> w.grad.tolist()
  [1.0, 2.0]

A graph can be consumed only once::

  >>> loss = (w * 2.0).sum()
  >>> backward(loss)
  >>> backward(loss)
  Traceback (most recent call last):
    ...
  itpcqa.tensor.GraphConsumedError: graph already consumed

Gradients accumulate until the caller zeroes them; `w` has now seen
three backward passes::

  >>> w.grad.tolist()
  [3.0, 4.0]

Precision
*********

Precision is a run mode: 32-bit for training and inference, 64-bit for
gradient verification::

  >>> Tensor([1.0]).data.dtype
  dtype('float32')
  >>> with precision('float64'):
  ...     Tensor([1.0]).data.dtype
  dtype('float64')

Every operation produces a fresh output buffer; there are no views with
overlapping writes.

'''

from collections import namedtuple
from contextlib import contextmanager
import threading

import numpy as np

DTYPES = {'float32': np.float32, 'float64': np.float64}


class ShapeError(ValueError):
    pass


class GraphConsumedError(RuntimeError):
    pass


class _Mode(threading.local):
    '''Per-thread run mode: precision and whether graphs are recorded.
    New threads start at float32 with recording on.
    '''
    def __init__(self):
        self.dtype = np.float32
        self.grad_enabled = True


_mode = _Mode()


def default_dtype():
    return _mode.dtype


def set_precision(name):
    '''
    >>> set_precision('float16')
    Traceback (most recent call last):
      ...
    ValueError: unknown precision: float16
    '''
    if name not in DTYPES:
        raise ValueError('unknown precision: %s' % name)
    _mode.dtype = DTYPES[name]


@contextmanager
def precision(name):
    saved = _mode.dtype
    set_precision(name)
    try:
        yield
    finally:
        _mode.dtype = saved


@contextmanager
def no_grad():
    '''Evaluate without recording a graph.

    >>> w = Tensor([1.0], requires_grad=True)
    >>> with no_grad():
    ...     (w * 2.0).requires_grad
    False
    '''
    saved = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = saved


class Node(object):
    '''One executed differentiable operation.

    `backward` maps the gradient of the output to a tuple of gradients,
    one per input (None where an input needs none).
    '''
    def __init__(self, name, inputs, backward):
        self.name = name
        self.inputs = inputs
        self.backward = backward
        self.consumed = False

    def __repr__(self):
        return 'Node(%s)' % self.name


class Tensor(object):
    # make ndarray (op) Tensor defer to Tensor's reflected operators
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.array(data, dtype=dtype or _mode.dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self._node = None

    @classmethod
    def _result(cls, data, inputs, backward, name):
        '''Wrap a freshly computed array; record a node when needed.
        '''
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._node = None
        out.requires_grad = (_mode.grad_enabled and
                             any(t.requires_grad for t in inputs))
        if out.requires_grad:
            out._node = Node(name, inputs, backward)
        return out

    def __repr__(self):
        return 'Tensor(shape=%s%s)' % (
            self.shape, ', requires_grad' if self.requires_grad else '')

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    '''Sum `grad` down to `shape`, undoing numpy broadcasting.

    >>> _unbroadcast(np.ones((2, 3)), (3,)).tolist()
    [2.0, 2.0, 2.0]
    >>> _unbroadcast(np.ones((2, 3)), (2, 1)).tolist()
    [[3.0], [3.0]]
    '''
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return Tensor._result(a.data + b.data, (a, b), back, 'add')


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return Tensor._result(a.data - b.data, (a, b), back, 'sub')


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))
    return Tensor._result(a.data * b.data, (a, b), back, 'mul')


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return Tensor._result(a.data / b.data, (a, b), back, 'div')


def neg(a):
    return Tensor._result(-a.data, (a,), lambda g: (-g,), 'neg')


def power(a, exponent):
    '''Raise to a constant real exponent.
    '''
    exponent = float(exponent)

    def back(g):
        return (g * exponent * a.data ** (exponent - 1.0),)
    return Tensor._result(a.data ** exponent, (a,), back, 'pow')


def exp(a):
    out = np.exp(a.data)
    return Tensor._result(out, (a,), lambda g: (g * out,), 'exp')


def log(a):
    return Tensor._result(np.log(a.data), (a,),
                          lambda g: (g / a.data,), 'log')


def clip(a, lo, hi):
    '''Clamp to [lo, hi]; gradient passes only inside the interval.
    '''
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._result(np.clip(a.data, lo, hi), (a,),
                          lambda g: (g * inside,), 'clip')


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError('matmul: %s @ %s' % (a.shape, b.shape))

    def back(g):
        return g @ b.data.T, a.data.T @ g
    return Tensor._result(a.data @ b.data, (a, b), back, 'matmul')


def transpose(a):
    if a.ndim != 2:
        raise ShapeError('transpose needs a matrix, got %s' % (a.shape,))
    return Tensor._result(a.data.T.copy(), (a,),
                          lambda g: (g.T,), 'transpose')


def tsum(a, axis=None, keepdims=False):
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    return Tensor._result(out, (a,), back, 'sum')


def mean(a, axis=None, keepdims=False):
    n = a.size if axis is None else np.prod(
        [a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    out = a.data.reshape(shape).copy()
    return Tensor._result(out, (a,),
                          lambda g: (g.reshape(a.shape),), 'reshape')


class Graph(object):
    '''The executed operations reachable from a root, in topological order.
    '''
    def __init__(self, tensors):
        self.tensors = tensors

    @classmethod
    def from_root(cls, root):
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if t._node is None:
                continue
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t._node.consumed:
                raise GraphConsumedError('graph already consumed')
            stack.append((t, True))
            for parent in t._node.inputs:
                if parent._node is not None and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def run(self, root, seed_grad):
        grads = {id(root): seed_grad}
        for t in reversed(self.tensors):
            node = t._node
            g = grads.pop(id(t), None)
            if g is not None:
                for parent, pg in zip(node.inputs, node.backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    if parent._node is None:
                        _accumulate(parent, pg)
                    elif id(parent) in grads:
                        grads[id(parent)] = grads[id(parent)] + pg
                    else:
                        grads[id(parent)] = pg
            node.consumed = True
            node.backward = None


def _accumulate(leaf, g):
    g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
    leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


def backward(root):
    '''Populate `grad` of every leaf reachable from the scalar `root`.

    >>> backward(Tensor([1.0, 2.0], requires_grad=True))
    Traceback (most recent call last):
      ...
    itpcqa.tensor.ShapeError: backward needs a scalar root, got shape (2,)
    '''
    if root.size != 1:
        raise ShapeError('backward needs a scalar root, got shape %s' %
                         (root.shape,))
    seed = np.ones_like(root.data)
    if root._node is None:
        if not root.requires_grad:
            raise ValueError('root does not participate in a graph')
        _accumulate(root, seed)
        return
    Graph.from_root(root).run(root, seed)


class GradCheckReport(namedtuple('GradCheckReport',
                                 ['name', 'errors', 'tolerance'])):
    '''Max relative error per input of a gradient check.
    '''
    @property
    def max_error(self):
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def __str__(self):
        return '%s max_rel_err=%.3e %s' % (
            self.name, self.max_error, 'ok' if self.passed else 'FAIL')


def relative_error(a, n):
    '''|a - n| / max(|a|, |n|, 1e-8), elementwise.

    >>> float(relative_error(np.array(1.0), np.array(1.0)))
    0.0
    '''
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)),
                                      1e-8)


def gradient_check(op_under_test, input_shapes, tolerance=1e-5, seed=0,
                   low=-1.0, high=1.0, margin=0.0, max_coords=None,
                   name=None, step=1e-5):
    '''Compare analytic gradients with central finite differences.

    Inputs are drawn uniformly from [low, high] with a generator seeded
    by `seed`, then pushed `margin` away from zero. The output is
    reduced to a scalar by a fixed random projection so that every
    entry of the Jacobian contributes. With `max_coords`, only that many
    seeded coordinates of each input are perturbed.

    >>> from itpcqa import layers
    >>> r = gradient_check(layers.relu, [(3, 3)], margin=1e-3)
    >>> r.passed, r.max_error < 1e-6
    (True, True)
    '''
    with precision('float64'):
        rng = np.random.default_rng(seed)
        arrays = [rng.uniform(low, high, size=shape)
                  for shape in input_shapes]
        if margin:
            arrays = [np.where(a >= 0, a + margin, a - margin)
                      for a in arrays]
        inputs = [Tensor(a, requires_grad=True) for a in arrays]
        out = op_under_test(*inputs)
        proj = rng.standard_normal(out.shape)
        backward((out * Tensor(proj)).sum())

        def objective():
            with no_grad():
                return float((op_under_test(*inputs).data * proj).sum())

        errors = []
        for t in inputs:
            analytic = t.grad if t.grad is not None else np.zeros_like(
                t.data)
            h = step * max(1.0, float(np.abs(t.data).max()))
            coords = list(np.ndindex(*t.shape))
            if max_coords is not None and len(coords) > max_coords:
                picks = rng.choice(len(coords), max_coords, replace=False)
                coords = [coords[i] for i in sorted(picks)]
            worst = 0.0
            for idx in coords:
                saved = t.data[idx]
                t.data[idx] = saved + h
                up = objective()
                t.data[idx] = saved - h
                down = objective()
                t.data[idx] = saved
                numeric = (up - down) / (2 * h)
                worst = max(worst,
                            float(relative_error(analytic[idx], numeric)))
            errors.append(worst)
    return GradCheckReport(name or getattr(op_under_test, '__name__', 'op'),
                           errors, tolerance)
