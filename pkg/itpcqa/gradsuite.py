'''gradsuite -- finite-difference checks of every differentiable piece
--------------------------------------------------------------------

Each check runs :func:`~itpcqa.tensor.gradient_check` in 64-bit mode
with inputs kept away from non-smooth points; gradient reversal, whose
backward is not the derivative of its forward, is held to
:func:`reversal_check` instead::

  >>> reports = run_suite(include_pipeline=False)
  >>> all(r.passed for r in reports), len(reports) > 15
  (True, True)
  >>> print(reports[0])  # doctest: +ELLIPSIS
  relu max_rel_err=... ok

'''

from collections import namedtuple
import logging

import numpy as np

from . import layers
from .losses import (LossConfig, DomainBatch, objective, loss_ccel,
                     loss_mmd, loss_regression, rank_surrogate)
from .models import Networks
from .tensor import (GradCheckReport, Tensor, backward, exp, gradient_check,
                     log as tlog, precision, relative_error)

log = logging.getLogger(__name__)

LAYER_TOLERANCE = 1e-5
PIPELINE_TOLERANCE = 1e-4
KINK_MARGIN = 1e-3

Check = namedtuple('Check', ['name', 'op', 'shapes', 'options'])


def _bn(x, gamma, beta):
    C = x.shape[1]
    return layers.batchnorm(x, gamma, beta, Tensor(np.zeros(C)),
                            Tensor(np.ones(C)), training=True)


def _bn_eval(x, gamma, beta):
    C = x.shape[1]
    return layers.batchnorm(x, gamma, beta, Tensor(np.full(C, 0.1)),
                            Tensor(np.full(C, 0.7)), training=False)


def layer_checks():
    smooth = {}
    kinked = dict(margin=KINK_MARGIN)
    positive = dict(low=0.5, high=2.0)
    return [
        Check('relu', layers.relu, [(3, 3)], kinked),
        Check('sigmoid', layers.sigmoid, [(3, 4)], dict(low=-4, high=4)),
        Check('conv2d', lambda x, w, b: layers.conv2d(x, w, b, 1, 1),
              [(1, 2, 8, 8), (3, 2, 3, 3), (3,)], smooth),
        Check('conv2d_stride2', lambda x, w, b: layers.conv2d(x, w, b, 2, 1),
              [(2, 2, 5, 5), (4, 2, 3, 3), (4,)], smooth),
        Check('conv2d_1x1', lambda x, w: layers.conv2d(x, w),
              [(1, 3, 4, 4), (2, 3, 1, 1)], smooth),
        Check('batchnorm', _bn, [(4, 3, 4, 4), (3,), (3,)], smooth),
        Check('batchnorm_eval', _bn_eval, [(4, 3, 4, 4), (3,), (3,)],
              smooth),
        Check('global_avg_pool', layers.global_avg_pool, [(2, 3, 4, 4)],
              smooth),
        Check('fully_connected', layers.fully_connected,
              [(4, 5), (3, 5), (3,)], smooth),
        Check('concat', lambda a, b: layers.concat([a, b]),
              [(2, 3), (2, 4)], smooth),
        Check('exp', exp, [(2, 3)], smooth),
        Check('log', tlog, [(2, 3)], positive),
        Check('div', lambda a, b: a / b, [(2, 3), (2, 3)], positive),
        Check('matmul', lambda a, b: a @ b, [(2, 3), (3, 4)], smooth),
        Check('mean_axis', lambda a: a.mean(axis=1), [(3, 4)], smooth),
    ]


def loss_checks():
    labels = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    probs = dict(low=0.05, high=0.95)
    return [
        Check('loss_regression', lambda p: loss_regression(p, labels),
              [(6,)], {}),
        Check('loss_ccel_d0', lambda s, t: loss_ccel(s, t, 0),
              [(5,), (5,)], probs),
        Check('loss_ccel_d1', lambda s, t: loss_ccel(s, t, 1),
              [(5,), (5,)], probs),
        Check('loss_mmd_rbf', lambda s, t: loss_mmd(s, t, 'rbf', sigma2=2.0),
              [(4, 5), (4, 5)], {}),
        Check('loss_mmd_linear', lambda s, t: loss_mmd(s, t, 'linear'),
              [(4, 5), (4, 5)], {}),
        Check('rank_surrogate', lambda p: rank_surrogate(p, labels),
              [(6,)], dict(low=-0.2, high=0.2)),
    ]


def reversal_check(lam=0.5, seed=0, shape=(3, 4)):
    '''grad_reverse against its contract rather than finite differences:
    identity forward, -lam times the upstream gradient backward.

    >>> print(reversal_check())
    grad_reverse max_rel_err=0.000e+00 ok
    '''
    with precision('float64'):
        rng = np.random.default_rng([seed, 7])
        x = Tensor(rng.uniform(-1, 1, shape), requires_grad=True)
        upstream = rng.standard_normal(shape)
        y = layers.grad_reverse(x, lam)
        backward((y * Tensor(upstream)).sum())
        errors = [float(relative_error(y.data, x.data).max()),
                  float(relative_error(x.grad, -lam * upstream).max())]
    return GradCheckReport('grad_reverse', errors, LAYER_TOLERANCE)


def _swapped(holder, attr, thunk):
    def op(value):
        saved = getattr(holder, attr)
        setattr(holder, attr, value)
        try:
            return thunk()
        finally:
            setattr(holder, attr, saved)
    return op


def pipeline_checks(seed=0, size=32, batch=4):
    '''L_all through G, M, D and R, with d held fixed.

    Checks the gradient reaching the source pixels and the weights of
    the mapper, discriminator and regressor. Upstream of the reversal,
    G and M descend mu2 L_R - lam mu1 L_da, so their finite differences
    are taken of that; D and R are checked against L_all itself.
    '''
    with precision('float64'):
        nets = Networks.build('HSCNN', seed=seed)
    rng = np.random.default_rng([seed, size])
    xs = rng.random((batch, 3, size, size))
    xt = rng.random((batch, 3, size, size))
    labels = np.linspace(0, 1, batch)
    cfg = LossConfig()

    def total(source=None):
        with precision('float64'):
            src = Tensor(xs) if source is None else source
            batch_ = DomainBatch(src, labels, Tensor(xt))
            return objective(batch_, nets, cfg, 'ALL', lam=lam, d=1)

    def l_all(source=None):
        return total(source).total

    def reversed_side(source=None):
        # value of mu2 L_R - lam mu1 L_da, gradient graph of L_all
        obj = total(source)
        with precision('float64'):
            seen = (obj.loss_r.item() * cfg.mu2 -
                    obj.loss_da.item() * cfg.mu1 * lam)
            return obj.total + Tensor(seen - obj.total.item())

    lam = 1.0
    opts = dict(low=0.0, high=1.0, max_coords=8, step=1e-6)
    head = dict(low=-0.3, high=0.3, max_coords=8, step=1e-6)
    checks = [Check('pipeline_source_pixels', reversed_side,
                    [xs.shape], opts)]
    for name, layer, f in [('M.fc2', nets.M.fc[1], reversed_side),
                           ('D.fc1', nets.D.fc1, l_all),
                           ('R.fc1', nets.R.fc1, l_all)]:
        checks.append(Check('pipeline_%s.weight' % name,
                            _swapped(layer, 'weight', f),
                            [layer.weight.shape], head))
    return checks


def run_check(check, tolerance, seed=0):
    report = gradient_check(check.op, check.shapes, tolerance=tolerance,
                            seed=seed, name=check.name, **check.options)
    log.info('%s', report)
    return report


def run_suite(seed=0, include_pipeline=True):
    reports = [run_check(c, LAYER_TOLERANCE, seed)
               for c in layer_checks() + loss_checks()]
    reports.append(reversal_check(seed=seed))
    log.info('%s', reports[-1])
    if include_pipeline:
        reports += [run_check(c, PIPELINE_TOLERANCE, seed)
                    for c in pipeline_checks(seed)]
    return reports
