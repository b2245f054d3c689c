import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from ..criteria import register_criterion, std_scores, unregister_criterion
from ..engine import Metric
from ..pruner import PruneConfig, prune_copy
from ..sweep import (ACCURACY, NEGATIVE_LOSS, CurveSample, SweepConfig, ThresholdCurve, auc, build_curve,
                     compare_criteria, compare_layer_selections, default_threshold_domain, metric_value,
                     plateau_threshold, refine)
from .factories import tiny_model, toy_dataset


def sigmoid_metric(width=0.05, center=0.5):
    def evaluate_threshold(threshold):
        metric = 1.0 / (1.0 + math.exp((threshold - center) / width))
        return CurveSample(threshold=threshold, fraction_pruned=threshold, metric=metric)
    return evaluate_threshold


def largest_gap(samples):
    metrics = np.sort([sample.metric for sample in samples])
    return float(np.diff(metrics).max())


def curve_of(points):
    return ThresholdCurve(samples=[CurveSample(threshold=float(i), fraction_pruned=x, metric=m)
                                   for i, (x, m) in enumerate(points)])


class RefineTestCase(SimpleTestCase):
    """
    TestCase for adaptive threshold refinement.

    Checks:
    - the gap target is met with fewer evaluations than the coarsest uniform
      grid achieving it
    - a constant metric needs only the two endpoints
    - the evaluation budget is respected and reported
    """

    def test_beats_uniform_grid(self):
        evaluate_threshold = sigmoid_metric()
        samples, converged = refine(evaluate_threshold, 0.0, 1.0, max_gap=0.1, max_evals=64)
        self.assertTrue(converged)
        self.assertLessEqual(largest_gap(samples), 0.1)

        grid_size = next(n for n in range(2, 65)
                         if largest_gap([evaluate_threshold(t) for t in np.linspace(0.0, 1.0, n)]) <= 0.1)
        self.assertLessEqual(len(samples), grid_size)

    def test_parallel_rounds(self):
        samples, converged = refine(sigmoid_metric(), 0.0, 1.0, max_gap=0.1, max_evals=64, workers=3)
        self.assertTrue(converged)
        self.assertLessEqual(largest_gap(samples), 0.1)
        self.assertEqual(len({sample.threshold for sample in samples}), len(samples))

    def test_constant_metric(self):
        calls = []

        def evaluate_threshold(threshold):
            calls.append(threshold)
            return CurveSample(threshold=threshold, fraction_pruned=threshold, metric=0.7)

        samples, converged = refine(evaluate_threshold, -1.0, 2.0, max_gap=0.02, max_evals=32)
        self.assertTrue(converged)
        self.assertEqual(calls, [-1.0, 2.0])
        self.assertEqual(len(samples), 2)

    def test_budget(self):
        samples, converged = refine(sigmoid_metric(), 0.0, 1.0, max_gap=0.01, max_evals=2)
        self.assertFalse(converged)
        self.assertEqual([sample.threshold for sample in samples], [0.0, 1.0])
        samples, converged = refine(sigmoid_metric(), 0.0, 1.0, max_gap=1e-6, max_evals=9)
        self.assertFalse(converged)
        self.assertEqual(len(samples), 9)

    def test_one_filter_apart_is_not_split(self):
        def evaluate_threshold(threshold):
            removed = int(threshold >= 0.5)
            return CurveSample(threshold=threshold, fraction_pruned=removed / 4, metric=1.0 - 0.5 * removed,
                               filters_removed=removed)

        samples, converged = refine(evaluate_threshold, 0.0, 1.0, max_gap=0.02, max_evals=32)
        self.assertTrue(converged)
        self.assertEqual(len(samples), 2)

    def test_one_filter_apart_is_split_without_shortcut(self):
        """
        Test Case:
            in progressive mode one removed filter more can hide a different
            removal set, so such pairs keep being bisected
        """

        def evaluate_threshold(threshold):
            removed = int(threshold >= 0.5)
            metric = 1.0 - 0.5 * removed if threshold < 0.75 else 0.9
            return CurveSample(threshold=threshold, fraction_pruned=removed / 4, metric=metric,
                               filters_removed=removed)

        samples, converged = refine(evaluate_threshold, 0.0, 1.0, max_gap=0.02, max_evals=6,
                                    count_shortcut=False)
        self.assertFalse(converged)
        self.assertEqual(len(samples), 6)

    def test_build_curve_uses_shortcut_in_static_mode_only(self):
        model = tiny_model()
        for mode, shortcut in (('static', True), ('progressive', False)):
            with self.subTest(mode=mode):
                config = SweepConfig('std:rank', mode=mode, max_evals=3, per_class=1)
                with mock.patch('pruning.sweep.refine', wraps=refine) as wrapped:
                    build_curve(model, toy_dataset(count=12), config)
                self.assertIs(wrapped.call_args.args[6], shortcut)


class AucTestCase(SimpleTestCase):

    def test_constant_curve(self):
        curve = curve_of([(0.1, 0.8), (0.4, 0.8), (0.7, 0.8)])
        self.assertAlmostEqual(auc(curve), 0.8, delta=1e-9)

    def test_triangle(self):
        self.assertAlmostEqual(auc(curve_of([(0.0, 1.0), (1.0, 0.0)])), 0.5, delta=1e-9)

    def test_constant_extensions(self):
        """
        Test Case:
            one sample at x = 0.5 with metric 0.6 integrates to 0.6; samples at
            0.25 / 0.75 extend flat to both ends
        """

        self.assertAlmostEqual(auc(curve_of([(0.5, 0.6)])), 0.6)
        self.assertAlmostEqual(auc(curve_of([(0.25, 1.0), (0.75, 0.0)])), 0.25 + 0.25 + 0.0)

    def test_permutation_invariance(self):
        samples = [CurveSample(threshold=t, fraction_pruned=x, metric=m)
                   for t, x, m in ((0.0, 0.0, 0.99), (0.3, 0.2, 0.97), (0.5, 0.45, 0.9), (0.9, 0.8, 0.3))]
        self.assertAlmostEqual(auc(samples), auc(list(reversed(samples))), delta=1e-12)
        self.assertAlmostEqual(auc(samples), auc([samples[2], samples[0], samples[3], samples[1]]), delta=1e-12)

    def test_duplicate_x_keeps_largest_threshold(self):
        samples = [CurveSample(threshold=0.2, fraction_pruned=0.5, metric=0.0),
                   CurveSample(threshold=0.1, fraction_pruned=0.5, metric=1.0)]
        self.assertAlmostEqual(auc(samples), 0.0)

    def test_parameter_axis(self):
        samples = [CurveSample(threshold=0.0, fraction_pruned=0.0, metric=1.0, parameter_fraction=0.0),
                   CurveSample(threshold=1.0, fraction_pruned=0.5, metric=0.0, parameter_fraction=1.0)]
        self.assertAlmostEqual(auc(samples, 'parameters'), 0.5)
        self.assertAlmostEqual(auc(samples, 'filters'), 0.25)

    def test_empty_curve(self):
        with self.assertRaises(ValueError):
            auc([])


class CurveTestCase(SimpleTestCase):
    """Curves of a real (tiny) model, CSV files and plateau selection."""

    def setUp(self):
        self.model = tiny_model(seed=2)
        self.data = toy_dataset(count=30)

    def test_build_curve(self):
        before = self.model.clone()
        config = SweepConfig('std:minmax', max_gap=0.05, max_evals=10)
        curve = build_curve(self.model, self.data, config)

        for original, current in zip(before.layers, self.model.layers):
            for name, value in original.params().items():
                np.testing.assert_array_equal(current.params()[name], value)
        self.assertLessEqual(curve.evaluations, 10)
        self.assertEqual(curve.kinds, 'both')
        self.assertEqual(curve.criterion, 'std:minmax')
        thresholds = [sample.threshold for sample in curve.samples]
        self.assertEqual(thresholds, sorted(thresholds))
        fractions = [sample.fraction_pruned for sample in curve.samples]
        self.assertEqual(fractions, sorted(fractions))
        self.assertEqual(fractions[0], 0.0)
        self.assertEqual(fractions[-1], 9 / 12)
        self.assertGreaterEqual(auc(curve), 0.0)
        self.assertLessEqual(auc(curve), 1.0)

    def test_two_evaluations(self):
        curve = build_curve(self.model, self.data, SweepConfig('mean_abs', max_evals=2))
        self.assertEqual(curve.evaluations, 2)

    def test_default_threshold_domain(self):
        t_min, t_max = default_threshold_domain(self.model, 'max_abs')
        self.assertLess(t_min, t_max)
        _, low = prune_copy(self.model, PruneConfig('max_abs', t_min))
        _, high = prune_copy(self.model, PruneConfig('max_abs', t_max))
        self.assertEqual(low.filters_removed, 0)
        self.assertTrue(all(record.filters_after == 1 for record in high.layers))

    def test_csv_round_trip(self):
        curve = build_curve(self.model, self.data, SweepConfig('range', max_evals=4, max_gap=0.01))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = curve.to_csv(Path(tmpdir) / 'curve.csv')
            lines = path.read_text(encoding='utf-8').splitlines()
            restored = ThresholdCurve.from_csv(path)
        self.assertEqual(lines[0], 'threshold,fraction_pruned,metric')
        self.assertEqual(len(lines), curve.evaluations + 1)
        self.assertEqual([(s.threshold, s.fraction_pruned, s.metric) for s in restored.samples],
                         [(s.threshold, s.fraction_pruned, s.metric) for s in curve.samples])

    def test_plateau_threshold(self):
        curve = ThresholdCurve(samples=[
            CurveSample(threshold=0.0, fraction_pruned=0.0, metric=0.90),
            CurveSample(threshold=0.2, fraction_pruned=0.3, metric=0.895),
            CurveSample(threshold=0.3, fraction_pruned=0.5, metric=0.892),
            CurveSample(threshold=0.35, fraction_pruned=0.5, metric=0.891),
            CurveSample(threshold=0.6, fraction_pruned=0.8, metric=0.40),
        ])
        self.assertEqual(plateau_threshold(curve, 0.01).threshold, 0.3)
        self.assertEqual(plateau_threshold(curve, 0.0).threshold, 0.0)
        self.assertEqual(plateau_threshold(curve, 1.0).threshold, 0.6)

    def test_metric_value(self):
        metric = Metric(top1_accuracy=0.75, mean_loss=0.4, samples=4)
        self.assertEqual(metric_value(metric, ACCURACY), 0.75)
        self.assertEqual(metric_value(metric, NEGATIVE_LOSS), -0.4)


class SweepConfigTestCase(SimpleTestCase):

    def test_invalid_values(self):
        for values in ({'max_gap': 0.0}, {'max_evals': 1}, {'metric': 'f1'}, {'workers': 0},
                       {'threshold_domain': (1.0, 1.0)}):
            with self.subTest(values=values), self.assertRaises(ValueError):
                SweepConfig('std', **values)

    def test_from_settings(self):
        config = SweepConfig.from_settings('std', max_gap=None, max_evals=5)
        self.assertEqual((config.max_gap, config.max_evals, config.per_class), (0.02, 5, 100))


class CompareTestCase(SimpleTestCase):
    """
    TestCase for criterion ranking and layer-selection comparison.
    """

    def test_higher_auc_ranks_first(self):
        curves = {'std': curve_of([(0.0, 0.5), (1.0, 0.5)]), 'range': curve_of([(0.0, 0.9), (1.0, 0.9)])}
        with mock.patch('pruning.sweep.build_curve', side_effect=lambda model, data, config:
                        curves[config.criterion.spec]):
            rows = compare_criteria(None, None, [SweepConfig('std'), SweepConfig('range')])
        self.assertEqual([row.criterion for row in rows], ['range', 'std'])
        self.assertAlmostEqual(rows[0].auc, 0.9)
        self.assertEqual([row.best for row in rows], [True, False])

    def test_ties_broken_by_name(self):
        register_criterion('a_std', std_scores, column_local=True)
        self.addCleanup(unregister_criterion, 'a_std')
        model, data = tiny_model(seed=3), toy_dataset(count=24)
        rows = compare_criteria(model, data, [SweepConfig('std', max_evals=5), SweepConfig('a_std', max_evals=5)])
        self.assertEqual(rows[0].auc, rows[1].auc)
        self.assertEqual([row.criterion for row in rows], ['a_std', 'std'])
        self.assertEqual(set(rows[0].to_dict()), {'criterion', 'auc', 'evaluations', 'converged', 'best'})

    def test_mismatched_configs(self):
        with self.assertRaises(ValueError):
            compare_criteria(None, None, [SweepConfig('std', prunable_kinds='conv'), SweepConfig('range')])
        with self.assertRaises(ValueError):
            compare_criteria(None, None, [])

    def test_layer_selections(self):
        rows = compare_layer_selections(tiny_model(seed=4), toy_dataset(count=24),
                                        SweepConfig('std:minmax', max_evals=6), drop_tolerance=0.05)
        self.assertEqual([row.kinds for row in rows], ['conv', 'dense', 'both'])
        for row in rows:
            with self.subTest(kinds=row.kinds):
                self.assertLessEqual(row.flops_after, row.flops_before)
                self.assertGreaterEqual(row.flops_reduction, 0.0)
                self.assertEqual(set(row.to_dict()), {'kinds', 'threshold', 'fraction_pruned', 'metric',
                                                      'flops_before', 'flops_after', 'flops_reduction'})
