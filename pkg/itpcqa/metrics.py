'''metrics -- agreement between predicted and subjective quality
----------------------------------------------------------------

  >>> srocc([1, 2, 3, 4], [1, 3, 2, 4])
  0.8
  >>> round(plcc([0, 1, 2], [0, 2, 3]), 5)
  0.98198
  >>> rmse([1, 2], [1, 2])
  0.0

Correlation of a constant is undefined, not zero::

  >>> srocc([1, 1, 1], [1, 2, 3])
  Traceback (most recent call last):
    ...
  itpcqa.metrics.UndefinedCorrelation: constant input

Before PLCC and RMSE, predictions are mapped onto the subjective scale
with a monotone 4-parameter logistic fitted by simplex descent.

'''

from collections import namedtuple
import logging

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from scipy.stats import rankdata

log = logging.getLogger(__name__)

MAX_ITER = 2000
MIN_SLOPE = 1e-6
MIN_FIT = 5


class UndefinedCorrelation(ValueError):
    pass


class InsufficientData(ValueError):
    pass


def _pair(x, y, least):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ValueError('length mismatch: %d vs %d' % (len(x), len(y)))
    if len(x) < least:
        raise InsufficientData('need >= %d samples, got %d' %
                               (least, len(x)))
    return x, y


def _pearson(x, y):
    xm, ym = x - x.mean(), y - y.mean()
    sxx, syy = (xm * xm).sum(), (ym * ym).sum()
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation('constant input')
    r = (xm * ym).sum() / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def plcc(x, y):
    x, y = _pair(x, y, 3)
    return _pearson(x, y)


def srocc(x, y):
    '''Pearson correlation of average ranks.

    >>> srocc([1, 2, 2, 3], [1, 2, 3, 4]) > 0.9
    True
    '''
    x, y = _pair(x, y, 3)
    return _pearson(rankdata(x), rankdata(y))


def rmse(x, y):
    x, y = _pair(x, y, 1)
    return float(np.sqrt(((x - y) ** 2).mean()))


def logistic(x, beta):
    '''(b1 - b2) / (1 + exp(-(x - b3) / |b4|)) + b2
    '''
    b1, b2, b3, b4 = beta
    slope = max(abs(b4), MIN_SLOPE)
    return (b1 - b2) * expit((np.asarray(x) - b3) / slope) + b2


VqegFit = namedtuple('VqegFit', ['mapped', 'beta', 'iterations',
                                 'residual', 'fallback'])


def vqeg_map(objective, subjective):
    '''Fit the logistic of `objective` to `subjective`.

    Falls back to the identity mapping (`fallback` set) when the fit
    does not beat a straight line in squared error.

    >>> x = np.linspace(0, 1, 40)
    >>> fit = vqeg_map(x, logistic(x, (1, 0, 0.5, 0.1)))
    >>> fit.fallback, bool(rmse(fit.mapped, logistic(x, (1, 0, 0.5, 0.1)))
    ...                    <= 1e-3)
    (False, True)

    >>> vqeg_map([1, 2, 3], [1, 2, 3])
    Traceback (most recent call last):
      ...
    itpcqa.metrics.InsufficientData: need >= 5 samples, got 3
    '''
    x, y = _pair(objective, subjective, MIN_FIT)
    if x.std() == 0:
        log.warning('constant predictions; logistic fit skipped')
        return VqegFit(x, None, 0, float(((x - y) ** 2).sum()), True)
    beta0 = np.array([y.max(), y.min(), x.mean(), x.std() / 4])

    def sse(beta):
        return float(((logistic(x, beta) - y) ** 2).sum())

    result = minimize(sse, beta0, method='Nelder-Mead',
                      options=dict(maxiter=MAX_ITER, xatol=1e-10,
                                   fatol=1e-14))
    beta = tuple(float(b) for b in result.x)
    slope, icept = np.polyfit(x, y, 1)
    linear = float(((slope * x + icept - y) ** 2).sum())
    if not result.fun < linear:
        log.warning('logistic fit (sse %g) no better than linear (%g); '
                    'using identity', result.fun, linear)
        return VqegFit(x, beta, int(result.nit), float(result.fun), True)
    return VqegFit(logistic(x, beta), beta, int(result.nit),
                   float(result.fun), False)


class EvalReport(namedtuple('EvalReport', [
        'n', 'srocc', 'plcc_raw', 'plcc_mapped', 'rmse_mapped', 'beta',
        'iterations', 'residual', 'fallback'])):
    '''Evaluation summary; undefined correlations are None.

    >>> r = evaluate_predictions([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])
    >>> r.srocc, r.plcc_mapped, r.rmse_mapped
    (1.0, 1.0, 0.0)
    >>> r.csv_header().split(',')[:5]
    ['n', 'srocc', 'plcc_raw', 'plcc_mapped', 'rmse_mapped']
    '''
    fields = ['n', 'srocc', 'plcc_raw', 'plcc_mapped', 'rmse_mapped',
              'beta1', 'beta2', 'beta3', 'beta4', 'iterations', 'residual',
              'fallback']

    @classmethod
    def csv_header(cls):
        return ','.join(cls.fields)

    def csv_values(self):
        beta = self.beta or (None,) * 4
        return [self.n, self.srocc, self.plcc_raw, self.plcc_mapped,
                self.rmse_mapped] + list(beta) + [
                    self.iterations, self.residual, int(self.fallback)]

    def csv_row(self):
        return ','.join('' if v is None else
                        '%d' % v if isinstance(v, int) else '%.6f' % v
                        for v in self.csv_values())

    def __str__(self):
        def show(v):
            return 'undefined' if v is None else '%.4f' % v
        return '\n'.join([
            'n            %d' % self.n,
            'srocc        %s' % show(self.srocc),
            'plcc_raw     %s' % show(self.plcc_raw),
            'plcc_mapped  %s' % show(self.plcc_mapped),
            'rmse_mapped  %s' % show(self.rmse_mapped),
            'logistic     %s' % ('identity (fallback)' if self.fallback
                                 else ' '.join('%.4g' % b
                                               for b in self.beta)),
        ])


def _defined(f, *args):
    try:
        return f(*args)
    except UndefinedCorrelation:
        return None


def evaluate_predictions(pred, labels):
    x, y = _pair(pred, labels, MIN_FIT)
    fit = vqeg_map(x, y)
    return EvalReport(
        n=len(x), srocc=_defined(srocc, x, y), plcc_raw=_defined(plcc, x, y),
        plcc_mapped=_defined(plcc, fit.mapped, y),
        rmse_mapped=rmse(fit.mapped, y), beta=fit.beta,
        iterations=fit.iterations, residual=fit.residual,
        fallback=fit.fallback)
