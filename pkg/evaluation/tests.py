import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from evaluation.metrics import (
    MetricRecord, annotate, evaluate, format_improvement, improvement, mean_record,
)
from evaluation.reports import METRIC_FIELDS, metric_row, render_csv, write_metrics_csv
from pnpdepth.errors import ConfigurationError, EmptyEvaluationError


def _record(rmse, mae=0.1, mre=0.01):
    return MetricRecord(rmse_m=rmse, mae_m=mae, mre=mre, delta1=0.9, delta2=0.95, delta3=0.99, n_pixels=10)


class MetricTests(SimpleTestCase):

    def test_known_values(self):
        gt = np.array([1.0, 2.0, 4.0, 2.0])
        pred = np.array([1.0, 2.4, 3.0, 2.0])
        m = evaluate(pred, gt)
        self.assertAlmostEqual(m.rmse_m, np.sqrt((0.16 + 1.0) / 4))
        self.assertAlmostEqual(m.mae_m, 1.4 / 4)
        self.assertAlmostEqual(m.mre, (0.2 + 0.25) / 4)
        # razones: 1, 1.2, 1.333, 1
        self.assertAlmostEqual(m.delta1, 0.75)
        self.assertAlmostEqual(m.delta2, 1.0)
        self.assertEqual(m.n_pixels, 4)

    def test_perfect_prediction(self):
        gt = np.linspace(1.0, 5.0, 12).reshape(1, 3, 4)
        m = evaluate(gt.reshape(1, 1, 3, 4), gt)
        self.assertEqual(m.rmse_m, 0.0)
        self.assertEqual((m.delta1, m.delta2, m.delta3), (1.0, 1.0, 1.0))

    def test_valid_mask_restricts_pixels(self):
        gt = np.array([1.0, 1.0, 1.0])
        pred = np.array([1.0, 1.0, 100.0])
        m = evaluate(pred, gt, valid=np.array([1, 1, 0]))
        self.assertEqual(m.rmse_m, 0.0)
        self.assertEqual(m.n_pixels, 2)

    def test_non_positive_predictions_are_clamped(self):
        m = evaluate(np.array([0.0, -1.0]), np.array([1.0, 1.0]))
        self.assertEqual(m.delta3, 0.0)
        self.assertTrue(np.isfinite(m.mre))

    def test_empty_set(self):
        with self.assertRaises(EmptyEvaluationError):
            evaluate(np.ones(3), np.ones(3), valid=np.zeros(3))

    def test_ground_truth_must_be_positive(self):
        with self.assertRaises(ConfigurationError):
            evaluate(np.ones(2), np.array([1.0, 0.0]))

    def test_size_mismatch(self):
        with self.assertRaises(ConfigurationError):
            evaluate(np.ones(3), np.ones(4))

    def test_two_pixel_example(self):
        m = evaluate(np.array([2.0, 2.0]), np.array([1.0, 2.0]))
        self.assertAlmostEqual(m.rmse_m, np.sqrt(0.5), delta=1e-12)
        self.assertAlmostEqual(m.mae_m, 0.5, delta=1e-12)
        self.assertAlmostEqual(m.mre, 0.5, delta=1e-12)
        self.assertEqual(m.delta1, 0.5)

    def test_doubled_prediction(self):
        gt = np.random.default_rng(1).uniform(0.5, 10.0, size=(1, 8, 8))
        m = evaluate(2.0 * gt, gt)
        self.assertAlmostEqual(m.mre, 1.0, delta=1e-12)
        # 2 > 1.25³ = 1.953
        self.assertEqual(m.delta3, 0.0)

    def test_scaling_both_maps(self):
        rng = np.random.default_rng(2)
        gt = rng.uniform(0.5, 10.0, size=(1, 16, 16))
        pred = gt * rng.uniform(0.6, 1.6, size=gt.shape)
        base = evaluate(pred, gt)
        for c in (0.25, 3.0, 10.0):
            scaled = evaluate(c * pred, c * gt)
            self.assertAlmostEqual(scaled.rmse_m, c * base.rmse_m, delta=1e-12 * c * base.rmse_m)
            self.assertAlmostEqual(scaled.mae_m, c * base.mae_m, delta=1e-12 * c * base.mae_m)
            self.assertAlmostEqual(scaled.mre, base.mre, delta=1e-12)
            self.assertEqual((scaled.delta1, scaled.delta2, scaled.delta3),
                             (base.delta1, base.delta2, base.delta3))

    def test_matches_per_pixel_loop(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            gt = rng.uniform(0.5, 10.0, size=(16, 16))
            pred = rng.uniform(0.1, 12.0, size=(16, 16))
            sq = ab = rel = 0.0
            hits = [0, 0, 0]
            for p, d in zip(pred.ravel().tolist(), gt.ravel().tolist()):
                sq += (p - d) ** 2
                ab += abs(p - d)
                rel += abs(p - d) / d
                r = p / d
                worst = max(r, 1.0 / r)
                for j in range(3):
                    hits[j] += worst < 1.25 ** (j + 1)
            n = gt.size
            m = evaluate(pred, gt)
            self.assertAlmostEqual(m.rmse_m, (sq / n) ** 0.5, delta=1e-12)
            self.assertAlmostEqual(m.mae_m, ab / n, delta=1e-12)
            self.assertAlmostEqual(m.mre, rel / n, delta=1e-12)
            self.assertEqual((m.delta1, m.delta2, m.delta3), tuple(h / n for h in hits))

    def test_mean_record(self):
        m = mean_record([_record(1.0), _record(3.0)])
        self.assertEqual(m.rmse_m, 2.0)
        self.assertEqual(m.n_pixels, 20)
        with self.assertRaises(EmptyEvaluationError):
            mean_record([])


class ImprovementTests(SimpleTestCase):

    def test_relative_improvement(self):
        gains = improvement(_record(0.8933), _record(0.5021))
        self.assertEqual(format_improvement(gains['rmse_m']), '+43.8%')

    def test_identical_records(self):
        gains = improvement(_record(0.5), _record(0.5))
        self.assertEqual({format_improvement(v) for v in gains.values()}, {'0.0%'})

    def test_zero_baseline(self):
        gains = improvement(_record(0.0), _record(0.1))
        self.assertIsNone(gains['rmse_m'])
        self.assertEqual(format_improvement(gains['rmse_m']), 'n/a')

    def test_regression_is_negative(self):
        self.assertEqual(format_improvement(improvement(_record(1.0), _record(1.02))['rmse_m']), '-2.0%')

    def test_annotate(self):
        self.assertEqual(annotate(0.5021, 43.79), '0.5021 (+43.8%)')


class ReportTests(SimpleTestCase):

    def test_rows_and_header(self):
        before, after = _record(0.8933), _record(0.5021)
        rows = [metric_row('plain_cnn', before, 31, 1.01), metric_row('plain_cnn+pnp', after, 31, 1.01, before)]
        text = render_csv(rows, METRIC_FIELDS)
        lines = text.splitlines()
        self.assertEqual(lines[0], 'method,n_samples,pct_samples,rmse,mae,mre,d1,d2,d3')
        self.assertIn('0.8933', lines[1])
        self.assertIn('0.5021 (+43.8%)', lines[2])
        self.assertIn('90.00', lines[2])

    def test_written_file_is_stable(self):
        rows = [metric_row('m', _record(0.3), 10, 0.5)]
        with tempfile.TemporaryDirectory() as tmp:
            a = write_metrics_csv(Path(tmp) / 'a.csv', rows).read_bytes()
            b = write_metrics_csv(Path(tmp) / 'b.csv', rows).read_bytes()
        self.assertEqual(a, b)
