"""test_metrics -- correlations and the logistic mapping
"""

import math
import unittest

import numpy as np

from .metrics import (InsufficientData, UndefinedCorrelation,
                      evaluate_predictions, logistic, plcc, rmse, srocc,
                      vqeg_map)


def average_ranks(values):
    ranks = []
    for v in values:
        below = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(below + (equal + 1) / 2.0)
    return ranks


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


class TestCorrelations(unittest.TestCase):
    def test_srocc_rank_formula_without_ties(self):
        rng = np.random.default_rng(30)
        for _ in range(500):
            n = int(rng.integers(3, 40))
            x, y = rng.permutation(n * 3)[:n], rng.standard_normal(n)
            rx, ry = average_ranks(x.tolist()), average_ranks(y.tolist())
            d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
            want = 1 - 6 * d2 / (n * (n * n - 1))
            self.assertLess(abs(srocc(x, y) - want), 1e-12)

    def test_srocc_with_ties(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            n = int(rng.integers(3, 30))
            # few distinct values: plenty of ties
            x = rng.integers(0, 5, n).tolist()
            y = rng.integers(0, 5, n).tolist()
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            want = pearson(average_ranks(x), average_ranks(y))
            self.assertLess(abs(srocc(x, y) - want), 1e-12)

    def test_srocc_known_values(self):
        self.assertAlmostEqual(srocc([1, 2, 3, 4, 5], [5, 6, 7, 8, 7]),
                               pearson([1, 2, 3, 4, 5], [1, 2, 3.5, 5, 3.5]),
                               places=12)
        self.assertEqual(srocc([1, 2, 3], [3, 2, 1]), -1.0)
        self.assertEqual(srocc([1, 2, 3], [1, 4, 9]), 1.0)

    def test_plcc_and_rmse_scalar_oracle(self):
        x = [0.1, 0.4, 0.35, 0.8, 0.9]
        y = [1.0, 2.2, 1.9, 3.9, 4.1]
        self.assertAlmostEqual(plcc(x, y), pearson(x, y), places=12)
        want = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)) / 5)
        self.assertAlmostEqual(rmse(x, y), want, places=12)

    def test_undefined_and_short(self):
        with self.assertRaises(UndefinedCorrelation):
            plcc([1, 2, 3], [4, 4, 4])
        with self.assertRaises(InsufficientData):
            srocc([1, 2], [2, 1])
        with self.assertRaises(ValueError):
            rmse([1, 2], [1, 2, 3])


class TestLogisticMapping(unittest.TestCase):
    def test_fit_beats_linear_on_sigmoid_data(self):
        rng = np.random.default_rng(32)
        x = rng.uniform(0, 1, 60)
        y = logistic(x, (5.0, 1.0, 0.4, 0.08)) + rng.normal(0, 0.05, 60)
        fit = vqeg_map(x, y)
        self.assertFalse(fit.fallback)
        slope, icept = np.polyfit(x, y, 1)
        linear = float(((slope * x + icept - y) ** 2).sum())
        self.assertLess(fit.residual, linear)
        self.assertAlmostEqual(fit.residual,
                               float(((fit.mapped - y) ** 2).sum()),
                               places=9)

    def test_recovers_known_logistic(self):
        rng = np.random.default_rng(34)
        beta = (4.5, 1.5, 0.5, 0.12)
        x = rng.uniform(0, 1, 80)
        y = logistic(x, beta) + rng.normal(0, 0.01, 80)
        fit = vqeg_map(x, y)
        self.assertFalse(fit.fallback)
        self.assertLessEqual(rmse(fit.mapped, y), 0.02 * np.ptp(y))
        grid = logistic(np.linspace(-1, 2, 1000), fit.beta)
        steps = np.diff(grid)
        self.assertTrue((steps >= 0).all() or (steps <= 0).all())

    def test_mapping_is_monotone(self):
        rng = np.random.default_rng(33)
        x = rng.uniform(-2, 2, 40)
        y = np.tanh(2 * x) + rng.normal(0, 0.1, 40)
        fit = vqeg_map(x, y)
        order = np.argsort(x)
        steps = np.diff(fit.mapped[order])
        self.assertTrue((steps >= -1e-12).all() or (steps <= 1e-12).all())

    def test_constant_predictions_fall_back(self):
        fit = vqeg_map([0.5] * 6, [1, 2, 3, 4, 5, 6])
        self.assertTrue(fit.fallback)
        self.assertIsNone(fit.beta)


class TestEvaluate(unittest.TestCase):
    labels = [0.1, 0.3, 0.2, 0.9, 0.5, 0.7, 0.4]

    def test_ideal_predictor(self):
        r = evaluate_predictions(self.labels, self.labels)
        self.assertEqual(r.n, 7)
        self.assertAlmostEqual(r.srocc, 1.0, places=12)
        self.assertAlmostEqual(r.plcc_mapped, 1.0, places=6)
        self.assertLess(r.rmse_mapped, 1e-3)

    def test_constant_predictor(self):
        r = evaluate_predictions([0.5] * 7, self.labels)
        self.assertIsNone(r.srocc)
        self.assertIsNone(r.plcc_mapped)
        self.assertTrue(r.fallback)
        row = r.csv_row().split(',')
        self.assertEqual(row[:2], ['7', ''])
        self.assertIn('undefined', str(r))

    def test_too_few(self):
        with self.assertRaises(InsufficientData):
            evaluate_predictions([1, 2, 3, 4], [1, 2, 3, 4])


if __name__ == '__main__':
    unittest.main()
