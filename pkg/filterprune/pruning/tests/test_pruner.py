import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from ..criteria import ApplicationMode, get_criterion
from ..engine import evaluate, forward
from ..exceptions import NothingToPruneError
from ..network import infer_shapes
from ..pruner import (ALL_KINDS, CONV, DENSE, PruneConfig, _remove_filters, kinds_label, parse_kinds, prune,
                      prune_copy, removed_filters, removed_sets, score_all, target_indices)
from ..storage import load, save
from .factories import conv_pool_dense_model, dense_model, random_inputs, random_model, rng, tiny_model, toy_dataset


def assert_same_parameters(test, first, second):
    test.assertEqual(len(first.layers), len(second.layers))
    for left, right in zip(first.layers, second.layers):
        for name, value in left.params().items():
            np.testing.assert_array_equal(right.params()[name], value)


class KindsTestCase(SimpleTestCase):

    def test_parse_kinds(self):
        self.assertEqual(parse_kinds('conv'), frozenset({CONV}))
        self.assertEqual(parse_kinds('dense'), frozenset({DENSE}))
        self.assertEqual(parse_kinds('both'), ALL_KINDS)
        self.assertEqual(parse_kinds('conv, dense'), ALL_KINDS)
        self.assertEqual(parse_kinds(['conv2d']), frozenset({CONV}))
        for value in ('pool', '', ','):
            with self.subTest(value=value), self.assertRaises(ValueError):
                parse_kinds(value)

    def test_labels(self):
        self.assertEqual([kinds_label(parse_kinds(v)) for v in ('conv', 'dense', 'both')], ['conv', 'dense', 'both'])


class ScoreTestCase(SimpleTestCase):
    """
    TestCase for ``score_all``.

    Test Case:
        one dense layer (I=2, H=3) with columns [1, 1], [0, 0], [2, -2]
    """

    def setUp(self):
        self.model = dense_model(np.array([[1.0, 0.0, 2.0], [1.0, 0.0, -2.0]]))

    def test_raw_scores(self):
        table = score_all(self.model, PruneConfig('mean_abs', 0.0))
        self.assertEqual(list(table), [1])
        np.testing.assert_allclose(table[1].raw, [1.0, 0.0, 2.0])
        np.testing.assert_allclose(table[1].normalized, [1.0, 0.0, 2.0])

    def test_minmax_scores(self):
        table = score_all(self.model, PruneConfig('mean_abs:minmax', 0.0))
        np.testing.assert_allclose(table[1].normalized, [0.5, 0.0, 1.0])

    def test_selected_kinds_only(self):
        model = tiny_model()
        self.assertEqual(list(score_all(model, PruneConfig('std', 0.0, prunable_kinds='conv'))), [0, 2])
        self.assertEqual(list(score_all(model, PruneConfig('std', 0.0))), [0, 2, 4, 5])


class RemovedFiltersTestCase(SimpleTestCase):

    def test_strictly_below_threshold(self):
        np.testing.assert_array_equal(removed_filters([0.1, 0.5, 0.3], 0.3), [0])

    def test_best_filter_survives(self):
        """
        Checks:
        - when every score is below the threshold the highest one stays
        - ties keep the first highest filter
        """

        np.testing.assert_array_equal(removed_filters([0.1, 0.5, 0.3], 1.0), [0, 2])
        np.testing.assert_array_equal(removed_filters([0.5, 0.5], 1.0), [1])
        np.testing.assert_array_equal(removed_filters([0.2], np.inf), [])


class PruneTestCase(SimpleTestCase):
    """
    TestCase for ``prune``.

    Checks thresholds at both ends, the zero-filter exactness oracle,
    downstream surgery, monotonicity and the report.
    """

    def test_threshold_below_all_scores(self):
        model = tiny_model(channel_norm=True)
        pruned, report = prune_copy(model, PruneConfig('std', -np.inf))
        assert_same_parameters(self, model, pruned)
        self.assertEqual(report.filters_removed, 0)
        self.assertEqual(report.fraction_removed, 0.0)
        self.assertEqual(report.parameters_before, report.parameters_after)

    def test_threshold_above_all_scores(self):
        model = tiny_model(channel_norm=True)
        pruned, report = prune_copy(model, PruneConfig('range', np.inf))
        self.assertEqual(pruned.filter_counts(), {0: 1, 3: 1, 5: 1, 6: 3})
        self.assertEqual(report.filters_before, 3 + 4 + 5)
        self.assertEqual(report.filters_removed, 9)
        self.assertLess(report.fraction_removed, 1.0)
        self.assertEqual(forward(pruned, random_inputs(pruned)).shape, (20, 3))

    def test_zero_filters_removed_exactly(self):
        """
        Test Case:
            conv (3, 3, 1, 4) whose filters 1 and 3 are all zero with zero bias;
            a threshold between 0 and the smallest positive mean_abs score removes
            exactly those, the dense layer loses 2 * 2 * 2 input rows and the
            outputs do not change
        """

        generator = rng(12)
        conv_weights = generator.normal(size=(3, 3, 1, 4))
        conv_weights[..., [1, 3]] = 0.0
        conv_bias = generator.uniform(0.0, 0.1, size=4)
        conv_bias[[1, 3]] = 0.0
        model = conv_pool_dense_model(conv_weights, conv_bias, generator.normal(size=(16, 3)),
                                      generator.normal(size=3))
        scores = get_criterion('mean_abs').apply(model.layers[0])
        threshold = scores[[0, 2]].min() / 2
        inputs = random_inputs(model, count=20, seed=13)
        expected = forward(model, inputs)

        pruned, report = prune_copy(model, PruneConfig('mean_abs', threshold))
        self.assertEqual(removed_sets(report), {0: frozenset({1, 3})})
        self.assertEqual(pruned.layers[3].weights.shape, (8, 3))
        np.testing.assert_allclose(forward(pruned, inputs), expected, atol=1e-6, rtol=0)

    def test_dense_rows_follow_flatten_order(self):
        model = tiny_model()
        original = model.layers[4].weights.copy()
        pruned = model.clone()
        _remove_filters(pruned, 2, np.array([1, 3]))
        keep = np.array([i for i in range(original.shape[0]) if i % 4 in (0, 2)])
        np.testing.assert_array_equal(pruned.layers[4].weights, original[keep])

    def test_channel_norm_slices(self):
        model = tiny_model(channel_norm=True)
        norm = model.layers[1]
        norm.gamma = np.array([1.0, 2.0, 3.0])
        norm.beta = np.array([0.1, 0.2, 0.3])
        norm.running_mean = np.array([-1.0, 0.0, 1.0])
        norm.running_var = np.array([0.5, 1.5, 2.5])
        _remove_filters(model, 0, np.array([1]))
        np.testing.assert_array_equal(norm.gamma, [1.0, 3.0])
        np.testing.assert_array_equal(norm.beta, [0.1, 0.3])
        np.testing.assert_array_equal(norm.running_mean, [-1.0, 1.0])
        np.testing.assert_array_equal(norm.running_var, [0.5, 2.5])
        self.assertEqual(model.layers[3].weights.shape[2], 2)

    def test_conv_only_selection_repairs_dense_input(self):
        model = tiny_model()
        pruned, _ = prune_copy(model, PruneConfig('std', np.inf, prunable_kinds='conv'))
        self.assertEqual(pruned.filter_counts(), {0: 1, 2: 1, 4: 5, 5: 3})
        self.assertEqual(pruned.layers[4].weights.shape, (9, 5))

    def test_output_layer(self):
        model = tiny_model()
        self.assertNotIn(5, target_indices(model, PruneConfig('std', 0.0)))
        pruned, _ = prune_copy(model, PruneConfig('std', np.inf, protect_output_layer=False))
        self.assertEqual(pruned.layers[5].filters, 1)

    def test_nothing_to_prune(self):
        with self.assertRaises(NothingToPruneError):
            prune(dense_model(np.ones((2, 3))), PruneConfig('std', 0.5))
        with self.assertRaises(NothingToPruneError):
            prune(dense_model(np.ones((2, 3))), PruneConfig('std', 0.5, prunable_kinds='conv',
                                                            protect_output_layer=False))

    def test_removed_sets_grow_with_threshold(self):
        model = tiny_model(seed=4)
        scores = np.concatenate([s.normalized for s in score_all(model, PruneConfig('std:minmax', 0.0)).values()])
        previous = None
        for threshold in np.quantile(scores, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]):
            _, report = prune_copy(model, PruneConfig('std:minmax', threshold))
            current = removed_sets(report)
            if previous is not None:
                for index, removed in previous.items():
                    self.assertLessEqual(removed, current[index])
            previous = current

    def test_first_layer_identical_in_both_modes(self):
        model = tiny_model(seed=6)
        threshold = float(np.median(get_criterion('mean_abs').apply(model.layers[0])))
        _, static = prune_copy(model, PruneConfig('mean_abs', threshold, mode='static'))
        _, progressive = prune_copy(model, PruneConfig('mean_abs', threshold, mode='progressive'))
        self.assertEqual(static.layers[0].removed_indices, progressive.layers[0].removed_indices)

    def test_progressive_rescores_after_upstream_surgery(self):
        model = tiny_model(seed=7)
        criterion = get_criterion('mean_abs')
        threshold = float(np.median(criterion.apply(model.layers[0])))
        _, report = prune_copy(model, PruneConfig(criterion, threshold, mode=ApplicationMode.PROGRESSIVE))

        intermediate = model.clone()
        first = np.array(report.layers[0].removed_indices)
        if first.size:
            _remove_filters(intermediate, 0, first)
        expected = removed_filters(criterion.apply(intermediate.layers[2]), threshold)
        self.assertEqual(report.layers[1].removed_indices, tuple(int(i) for i in expected))

    def test_report(self):
        model = tiny_model()
        pruned, report = prune_copy(model, PruneConfig('std:rank', 0.5, prunable_kinds='both'))
        payload = json.loads(report.to_json())
        self.assertEqual(set(payload), {'layers', 'totals', 'config'})
        self.assertEqual(payload['config'], {'criterion': 'std:rank', 'threshold': 0.5, 'mode': 'static',
                                             'kinds': 'both', 'protect_output_layer': True})
        self.assertEqual([entry['layer_index'] for entry in payload['layers']], [0, 2, 4])
        totals = payload['totals']
        self.assertEqual(totals['parameters_after'], pruned.parameter_count())
        self.assertEqual(totals['filters_removed'],
                         sum(len(entry['removed_indices']) for entry in payload['layers']))
        for entry in payload['layers']:
            self.assertEqual(entry['filters_after'], pruned.layers[entry['layer_index']].filters)
        self.assertLessEqual(totals['flops_after'], totals['flops_before'])

    def test_input_model_untouched_by_copy(self):
        model = tiny_model()
        before = model.clone()
        prune_copy(model, PruneConfig('std', np.inf))
        assert_same_parameters(self, before, model)


class PruneFuzzTestCase(SimpleTestCase):
    """Random models and thresholds: the pruned model stays usable."""

    def test_random_models(self):
        generator = rng(21)
        tmpdir = tempfile.TemporaryDirectory()
        self.addCleanup(tmpdir.cleanup)
        path = Path(tmpdir.name) / 'pruned.cpmf'
        criteria = ['std', 'range:minmax', 'mean_abs:rank', 'max_abs:percentile']
        for case in range(25):
            model = random_model(generator, channel_norm=bool(case % 2))
            spec = criteria[case % len(criteria)]
            config = PruneConfig(spec, float(generator.uniform(-0.1, 1.1)),
                                 mode=('static', 'progressive')[case % 2],
                                 prunable_kinds=('both', 'conv', 'dense')[case % 3])
            with self.subTest(case=case):
                if not target_indices(model, config):
                    continue
                pruned, report = prune_copy(model, config)
                infer_shapes(pruned)
                self.assertTrue(all(count >= 1 for count in pruned.filter_counts().values()))
                self.assertEqual(pruned.class_count, model.class_count)
                for record in report.layers:
                    self.assertEqual(record.filters_after, record.filters_before - len(record.removed_indices))
                save(pruned, path)
                restored = load(path)
                inputs = random_inputs(restored, count=4, seed=case)
                self.assertEqual(forward(restored, inputs).shape, (4, model.class_count))

    def test_zero_filters_removed_exactly_on_random_models(self):
        """
        Test Case:
            a random proper subset of one layer's filters is zeroed (weights
            and bias); mean_abs at half the smallest positive score removes
            exactly that subset and leaves the outputs unchanged
        """

        generator = rng(31)
        for case in range(15):
            model = random_model(generator)
            config = PruneConfig('mean_abs', 0.0)
            candidates = [i for i in target_indices(model, config) if model.layers[i].filters >= 2]
            with self.subTest(case=case):
                if not candidates:
                    continue
                index = int(generator.choice(candidates))
                layer = model.layers[index]
                count = int(generator.integers(1, layer.filters))
                zeroed = np.sort(generator.choice(layer.filters, size=count, replace=False))
                layer.weights[..., zeroed] = 0.0
                layer.bias[zeroed] = 0.0
                scores = np.concatenate([config.criterion.apply(model.layers[i])
                                         for i in target_indices(model, config)])
                threshold = scores[scores > 0].min() / 2
                inputs = random_inputs(model, count=8, seed=case)
                expected = forward(model, inputs)

                pruned, report = prune_copy(model, config.with_threshold(threshold))
                removed = {i: s for i, s in removed_sets(report).items() if s}
                self.assertEqual(removed, {index: frozenset(int(i) for i in zeroed)})
                np.testing.assert_allclose(forward(pruned, inputs), expected, atol=1e-10, rtol=0)

    def test_pruned_model_evaluates(self):
        model = tiny_model()
        pruned, _ = prune_copy(model, PruneConfig('std', np.inf))
        metric = evaluate(pruned, toy_dataset(count=12))
        self.assertEqual(metric.samples, 12)
