'''losses -- training objectives
--------------------------------

Regression is mean squared error over the source batch::

  >>> import numpy as np
  >>> from itpcqa.tensor import Tensor
  >>> l2 = loss_regression(Tensor([0.2, 0.8]), np.array([0.0, 1.0]))
  >>> round(l2.item(), 6)
  0.04

The conditional cross-entropy loss flips the discriminator's source
label when flag d is set::

  >>> ds, dt = Tensor([0.8]), Tensor([0.3])
  >>> [round(loss_ccel(ds, dt, d).item(), 4) for d in (0, 1)]
  [0.5798, 1.9661]

With d = 0 it is the plain adversarial loss::

  >>> half = Tensor([0.5])
  >>> round(loss_adv(half, half).item(), 4)
  1.3863

The flag itself compares rank correlations with and without the mapper;
the margin must be strictly exceeded::

  >>> decide_flag(0.70, 0.55, 0.1), decide_flag(0.65, 0.55, 0.1)
  (1, 0)

'''

from collections import namedtuple
import logging

import numpy as np

from .layers import concat, grad_reverse, sigmoid
from .metrics import srocc, UndefinedCorrelation
from .tensor import Tensor, clip, exp as texp, log as tlog, no_grad

log = logging.getLogger(__name__)

VARIANTS = ('ALL', 'R_ONLY', 'T1_MMD', 'T2_ADV', 'T3_SROCC')
KERNELS = ('rbf', 'linear')
RANK_TEMPERATURE = 0.05
SIGMA2_FLOOR = 1e-12


class DomainBatch(namedtuple('DomainBatch', ['source', 'labels', 'target'])):
    '''Source images (N, 3, S, S) with labels in [0, 1]; unlabeled targets.
    '''


class LossConfig(namedtuple('LossConfig', [
        'mu1', 'mu2', 'epsilon', 'similarity', 'mmd_kernel', 'clamp'])):
    '''
    >>> LossConfig(similarity='rmse').check()
    Traceback (most recent call last):
      ...
    ValueError: similarity must be srocc; rmse would reverse the flag test
    '''
    def __new__(cls, mu1=1.0, mu2=1.0, epsilon=0.1, similarity='srocc',
                mmd_kernel='rbf', clamp=1e-7):
        return super(LossConfig, cls).__new__(
            cls, mu1, mu2, epsilon, similarity, mmd_kernel, clamp)

    def check(self):
        if self.similarity != 'srocc':
            raise ValueError('similarity must be srocc; %s would reverse '
                             'the flag test' % self.similarity)
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError('mu1, mu2 must be >= 0')
        if self.epsilon < 0:
            raise ValueError('epsilon must be >= 0')
        if self.mmd_kernel not in KERNELS:
            raise ValueError('unknown mmd kernel: %s' % self.mmd_kernel)
        if not 0 < self.clamp < 0.5:
            raise ValueError('clamp must be in (0, 0.5)')
        return self


def loss_regression(pred, labels):
    err = pred - Tensor(np.asarray(labels), dtype=pred.data.dtype)
    return (err * err).mean()


def decide_flag(mapped, unmapped, epsilon):
    return 1 if mapped > unmapped + epsilon else 0


def flag_d(source_feats, labels, nets, epsilon):
    '''1 iff the mapper improves source SROCC by more than `epsilon`.

    Evaluated without gradients; an undefined correlation yields 0.
    '''
    with no_grad():
        mapped = nets.R(nets.M(source_feats)).data
        unmapped = nets.R(source_feats).data
    try:
        return decide_flag(srocc(mapped, labels), srocc(unmapped, labels),
                           epsilon)
    except UndefinedCorrelation:
        return 0


def loss_ccel(d_src, d_tgt, d, clamp=1e-7):
    '''-mean log|D_src - d| - mean log(1 - D_tgt), probabilities clamped.

    `d` is a constant; with d = 0 the source term is -log D_src.

    >>> delta = 1e-7
    >>> loss_ccel(Tensor([1 - delta]), Tensor([delta]), 0).item() < 1e-6
    True
    '''
    ps = clip(d_src, clamp, 1 - clamp)
    pt = clip(d_tgt, clamp, 1 - clamp)
    src = ps if d == 0 else 1 - ps
    return -tlog(src).mean() - tlog(1 - pt).mean()


def loss_adv(d_src, d_tgt, clamp=1e-7):
    return loss_ccel(d_src, d_tgt, 0, clamp)


def rbf_bandwidth(union):
    '''Half the median pairwise squared distance, floored.

    >>> rbf_bandwidth(np.array([[0.0], [1.0], [3.0]]))
    2.0
    '''
    z = np.asarray(union, dtype=np.float64)
    sq = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    iu = np.triu_indices(len(z), k=1)
    return max(float(np.median(sq[iu])) / 2, SIGMA2_FLOOR)


def loss_mmd(feats_src, feats_tgt, kernel='rbf', sigma2=None):
    '''Biased MMD^2 between source and target features.

    >>> round(loss_mmd(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]]),
    ...                kernel='linear').item(), 6)
    2.0
    '''
    if kernel == 'linear':
        diff = feats_src.mean(axis=0) - feats_tgt.mean(axis=0)
        return (diff * diff).sum()
    if kernel != 'rbf':
        raise ValueError('unknown mmd kernel: %s' % kernel)
    ns, nt = feats_src.shape[0], feats_tgt.shape[0]
    if min(ns, nt) < 2:
        raise ValueError('rbf mmd needs >= 2 samples per domain')
    z = concat([feats_src, feats_tgt], axis=0)
    if sigma2 is None:
        sigma2 = rbf_bandwidth(z.data)
    n = ns + nt
    sq = (z * z).sum(axis=1)
    dist = sq.reshape(n, 1) + sq.reshape(1, n) - 2 * (z @ z.transpose())
    k = texp(dist * (-0.5 / sigma2))
    w = np.concatenate([np.full(ns, 1.0 / ns), np.full(nt, -1.0 / nt)])
    return (k * Tensor(np.outer(w, w), dtype=k.data.dtype)).sum()


def rank_surrogate(pred, labels, tau=RANK_TEMPERATURE):
    '''Soft count of discordant pairs among pairs with distinct labels.

    Each pair contributes sigmoid(-(p_i - p_j) sign(y_i - y_j) / tau).

    Near 0 when predictions order the labels, near 1 when reversed.

    >>> y = np.array([0.0, 0.5, 1.0])
    >>> rank_surrogate(Tensor([0.0, 1.0, 2.0]), y).item() < 1e-6
    True
    >>> rank_surrogate(Tensor([2.0, 1.0, 0.0]), y).item() > 0.999
    True
    '''
    y = np.asarray(labels, dtype=np.float64)
    n = len(y)
    sign = np.sign(y[:, None] - y[None, :])
    mask = np.triu(np.ones((n, n)), k=1) * (sign != 0)
    count = mask.sum()
    if not count:
        return Tensor(0.0, dtype=pred.data.dtype)
    diff = pred.reshape(n, 1) - pred.reshape(1, n)
    z = diff * Tensor(-sign / tau, dtype=pred.data.dtype)
    return (sigmoid(z) * Tensor(mask / count, dtype=pred.data.dtype)).sum()


def loss_t3_surrogate(pred, labels):
    return loss_regression(pred, labels) + rank_surrogate(pred, labels)


Objective = namedtuple('Objective', ['total', 'loss_r', 'loss_da', 'd'])


def objective(batch, nets, cfg, variant='ALL', lam=1.0, d=None):
    '''Total loss for one batch under a loss variant.

    L_R is always taken on R(M(G(x_s))). Source and target go through
    G in separate passes. The target is not forwarded when its term
    carries no weight.

    :param d: force the flag; computed from the batch when None
    '''
    if variant not in VARIANTS:
        raise ValueError('unknown loss variant: %s' % variant)
    g_src = nets.G(batch.source)
    feats_src = nets.M(g_src)
    pred = nets.R(feats_src)
    loss_r = loss_regression(pred, batch.labels)
    if d is None:
        d = flag_d(g_src, batch.labels, nets, cfg.epsilon)
    zero = Tensor(0.0, dtype=loss_r.data.dtype)

    def total(da):
        return loss_r * cfg.mu2 + da * cfg.mu1

    if variant == 'R_ONLY' or (cfg.mu1 == 0 and variant != 'T3_SROCC'):
        return Objective(loss_r * cfg.mu2, loss_r, zero, d)
    if variant == 'T3_SROCC':
        da = rank_surrogate(pred, batch.labels)
        return Objective(total(da), loss_r, da, d)

    g_tgt = nets.G(batch.target)
    if variant == 'T1_MMD':
        da = loss_mmd(g_src, g_tgt, cfg.mmd_kernel)
        return Objective(total(da), loss_r, da, d)

    d_src = nets.D(grad_reverse(feats_src, lam))
    d_tgt = nets.D(grad_reverse(nets.M(g_tgt), lam))
    if variant == 'T2_ADV':
        da = loss_adv(d_src, d_tgt, cfg.clamp)
    else:
        da = loss_ccel(d_src, d_tgt, d, cfg.clamp)
    return Objective(total(da), loss_r, da, d)


def loss_all(batch, nets, cfg, lam=1.0, d=None):
    '''mu1 * CCEL + mu2 * L_R
    '''
    return objective(batch, nets, cfg, 'ALL', lam, d).total
