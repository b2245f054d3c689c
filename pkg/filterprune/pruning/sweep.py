"""
Threshold curves: how the validation metric responds to the fraction of
filters a threshold removes.

Thresholds are refined adaptively. Both ends of the threshold domain are
evaluated first; afterwards the samples are ordered by metric and the
adjacent pair with the largest metric gap is split at the midpoint of its
thresholds, until every gap is at most ``max_gap`` or ``max_evals``
thresholds have been evaluated. Each threshold prunes a fresh clone of the
model, so the input model is never touched.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conf import pruning_settings
from .criteria import ApplicationMode, get_criterion
from .datasets import balanced_subset
from .engine import evaluate
from .exceptions import NothingToPruneError
from .pruner import (ALL_KINDS, CONV, DENSE, PruneConfig, kinds_label, parse_kinds, prune_copy, score_all,
                     target_indices)

logger = logging.getLogger(__name__)

ACCURACY = 'accuracy'
NEGATIVE_LOSS = 'negative_loss'
METRICS = (ACCURACY, NEGATIVE_LOSS)
X_AXES = ('filters', 'parameters')
CSV_FIELDS = ('threshold', 'fraction_pruned', 'metric')


@dataclass(frozen=True)
class CurveSample:
    """
    One evaluated threshold.

    ``filters_removed`` is None for samples that do not come from pruning
    (e.g. read back from CSV).
    """

    threshold: float
    fraction_pruned: float
    metric: float
    parameter_fraction: float = 0.0
    filters_removed: int = None

    def x(self, x_axis='filters'):
        return self.parameter_fraction if x_axis == 'parameters' else self.fraction_pruned


@dataclass
class ThresholdCurve:
    """
    Samples of a threshold function, sorted by threshold.

    Attributes:
    - samples: CurveSample list
    - converged: False when ``max_evals`` ran out before the gap target
    - criterion: criterion spec the curve was built with
    - kinds: 'conv', 'dense' or 'both'
    """

    samples: list
    converged: bool = True
    criterion: str = ''
    kinds: str = ''

    def __post_init__(self):
        self.samples = sorted(self.samples, key=lambda s: s.threshold)

    def __len__(self):
        return len(self.samples)

    @property
    def evaluations(self):
        return len(self.samples)

    def max_gap(self):
        """Largest difference between metric-adjacent samples."""
        metrics = np.sort([s.metric for s in self.samples])
        return float(np.diff(metrics).max()) if metrics.size > 1 else 0.0

    def to_csv(self, path, x_axis='filters'):
        """
        Write ``threshold,fraction_pruned,metric`` rows (plus
        ``parameter_fraction`` for the parameters x-axis), sorted by threshold.
        """

        fields = CSV_FIELDS + (('parameter_fraction',) if x_axis == 'parameters' else ())
        path = Path(path)
        with path.open('w', newline='', encoding='utf-8') as stream:
            writer = csv.writer(stream, lineterminator='\n')
            writer.writerow(fields)
            for sample in self.samples:
                writer.writerow([repr(float(getattr(sample, name))) for name in fields])
        return path

    @classmethod
    def from_csv(cls, path, **kwargs):
        with Path(path).open(newline='', encoding='utf-8') as stream:
            rows = list(csv.DictReader(stream))
        samples = [CurveSample(threshold=float(row['threshold']), fraction_pruned=float(row['fraction_pruned']),
                               metric=float(row['metric']),
                               parameter_fraction=float(row.get('parameter_fraction') or 0.0))
                   for row in rows]
        return cls(samples=samples, **kwargs)


@dataclass(frozen=True)
class SweepConfig:
    """
    Attributes:
    - criterion: Criterion or spec string
    - mode: ApplicationMode
    - prunable_kinds: layer kinds considered prunable
    - threshold_domain: (t_min, t_max); None derives it from the scores
    - max_gap: largest acceptable metric gap between neighbours
    - max_evals: evaluation budget (at least the two endpoints)
    - metric: 'accuracy' or 'negative_loss'
    - per_class, subset_seed: class-balanced validation subset
    - workers: threads evaluating thresholds concurrently
    """

    criterion: object
    mode: ApplicationMode = ApplicationMode.STATIC
    prunable_kinds: frozenset = ALL_KINDS
    threshold_domain: tuple = None
    max_gap: float = 0.02
    max_evals: int = 32
    metric: str = ACCURACY
    per_class: int = 100
    subset_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'criterion', get_criterion(self.criterion))
        object.__setattr__(self, 'mode', ApplicationMode(self.mode))
        object.__setattr__(self, 'prunable_kinds', parse_kinds(self.prunable_kinds))
        if self.threshold_domain is not None:
            t_min, t_max = (float(t) for t in self.threshold_domain)
            if not t_min < t_max:
                raise ValueError(f"threshold domain needs t_min < t_max, got {self.threshold_domain}")
            object.__setattr__(self, 'threshold_domain', (t_min, t_max))
        if self.max_gap <= 0:
            raise ValueError(f"max_gap must be positive, got {self.max_gap}")
        if self.max_evals < 2:
            raise ValueError(f"max_evals must be at least 2, got {self.max_evals}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")

    @classmethod
    def from_settings(cls, criterion, **overrides):
        """Defaults from ``PRUNING['SWEEP']`` with ``None``-free overrides applied."""
        defaults = pruning_settings()['SWEEP']
        values = {'max_gap': defaults['max_gap'], 'max_evals': defaults['max_evals'],
                  'per_class': defaults['per_class']}
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(criterion=criterion, **values)

    def prune_config(self, threshold):
        return PruneConfig(criterion=self.criterion, threshold=threshold, mode=self.mode,
                           prunable_kinds=self.prunable_kinds)

    def validation_subset(self, dataset):
        return balanced_subset(dataset, self.per_class, self.subset_seed)


def default_threshold_domain(model, criterion, kinds=ALL_KINDS):
    """
    Threshold range from "nothing pruned" to "every target layer at one filter".

    t_min is the smallest (normalized) score of any target layer, so
    ``score < t_min`` removes nothing; t_max lies 1% of the score span above
    the largest score.
    """

    config = PruneConfig(criterion=criterion, threshold=0.0, prunable_kinds=kinds)
    targets = target_indices(model, config)
    if not targets:
        raise NothingToPruneError(f"model has no prunable {kinds_label(config.prunable_kinds)} layer")
    table = score_all(model, config)
    scores = np.concatenate([table[index].normalized for index in targets])
    low, high = float(scores.min()), float(scores.max())
    span = high - low or abs(high) or 1.0
    return low, high + 0.01 * span


def _splittable(lower, upper, count_shortcut=True):
    middle = (lower.threshold + upper.threshold) / 2
    if middle in (lower.threshold, upper.threshold):
        return False
    if count_shortcut and lower.filters_removed is not None and upper.filters_removed is not None:
        # one filter apart: any threshold in between reproduces one of the two
        return abs(lower.filters_removed - upper.filters_removed) > 1
    return True


def _gaps(samples):
    ordered = sorted(samples, key=lambda s: (s.metric, s.threshold))
    return [(upper.metric - lower.metric, lower, upper) for lower, upper in zip(ordered, ordered[1:])]


def refine(evaluate_threshold, t_min, t_max, max_gap, max_evals, workers=1, count_shortcut=True):
    """
    Adaptively sample ``evaluate_threshold`` over ``[t_min, t_max]``.

    Args:
        evaluate_threshold: callable, threshold -> CurveSample
        t_min, t_max: domain endpoints, evaluated first
        max_gap: stop once every metric-adjacent gap is at most this
        max_evals: evaluation budget
        workers: with more than one worker, up to ``workers`` of the
            largest gaps are split concurrently in each round
        count_shortcut: skip pairs whose removed-filter counts differ by at
            most one; only sound when removal sets are nested (static mode)

    Returns:
        tuple: (samples, converged)
    """

    def run(thresholds):
        if workers > 1 and len(thresholds) > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                return list(executor.map(evaluate_threshold, thresholds))
        return [evaluate_threshold(t) for t in thresholds]

    samples = run([t_min, t_max])
    while True:
        candidates = [gap for gap in _gaps(samples)
                      if gap[0] > max_gap and _splittable(gap[1], gap[2], count_shortcut)]
        if not candidates:
            return samples, True
        budget = max_evals - len(samples)
        if budget <= 0:
            return samples, False
        candidates.sort(key=lambda gap: -gap[0])
        thresholds = [(lower.threshold + upper.threshold) / 2 for _, lower, upper in candidates[:min(workers, budget)]]
        samples.extend(run(thresholds))


def metric_value(metric, name=ACCURACY):
    return metric.top1_accuracy if name == ACCURACY else -metric.mean_loss


def build_curve(model, data, config):
    """
    Threshold curve of ``model`` on ``data`` (a Dataset or Batch list).

    Returns:
        ThresholdCurve: samples sorted by threshold; ``converged`` is False
        when the evaluation budget ran out
    """

    t_min, t_max = config.threshold_domain or default_threshold_domain(
        model, config.criterion, config.prunable_kinds)

    def evaluate_threshold(threshold):
        pruned, report = prune_copy(model, config.prune_config(threshold))
        value = metric_value(evaluate(pruned, data), config.metric)
        logger.info("Threshold %.6g: %.2f%% of filters pruned, %s %.4f", threshold,
                    100 * report.fraction_removed, config.metric, value)
        return CurveSample(threshold=threshold, fraction_pruned=report.fraction_removed, metric=value,
                           parameter_fraction=report.parameter_fraction,
                           filters_removed=report.filters_removed)

    samples, converged = refine(evaluate_threshold, t_min, t_max, config.max_gap, config.max_evals,
                                config.workers, config.mode is ApplicationMode.STATIC)
    if not converged:
        logger.warning("Sweep of %s stopped after %d evaluations with gaps above %g",
                       config.criterion.spec, len(samples), config.max_gap)
    return ThresholdCurve(samples=samples, converged=converged, criterion=config.criterion.spec,
                          kinds=kinds_label(config.prunable_kinds))


def _points(samples, x_axis):
    latest = {}
    for sample in sorted(samples, key=lambda s: (s.x(x_axis), s.threshold)):
        latest[sample.x(x_axis)] = sample.metric
    xs = np.array(list(latest), dtype=np.float64)
    metrics = np.array(list(latest.values()), dtype=np.float64)
    if xs[0] > 0.0:
        xs, metrics = np.concatenate(([0.0], xs)), np.concatenate(([metrics[0]], metrics))
    if xs[-1] < 1.0:
        xs, metrics = np.concatenate((xs, [1.0])), np.concatenate((metrics, [metrics[-1]]))
    return xs, metrics


def auc(curve, x_axis='filters'):
    """
    Trapezoidal area under the metric over the pruned fraction.

    The curve is extended with constant metric to x = 0 and x = 1; among
    samples sharing an x the one with the largest threshold counts.
    """

    samples = curve.samples if isinstance(curve, ThresholdCurve) else list(curve)
    if not samples:
        raise ValueError("cannot integrate an empty curve")
    xs, metrics = _points(samples, x_axis)
    return float(np.sum(np.diff(xs) * (metrics[1:] + metrics[:-1]) / 2))


def plateau_threshold(curve, drop_tolerance=0.01):
    """
    Sample at the plateau's edge: the largest pruned fraction whose metric is
    within ``drop_tolerance`` of the best metric (lowest threshold on ties).
    """

    best = max(sample.metric for sample in curve.samples)
    eligible = [s for s in curve.samples if s.metric >= best - drop_tolerance]
    return max(eligible, key=lambda s: (s.fraction_pruned, -s.threshold))


@dataclass
class RankingRow:
    criterion: str
    auc: float
    evaluations: int
    converged: bool
    best: bool = False
    curve: ThresholdCurve = field(default=None, repr=False)

    def to_dict(self):
        return {'criterion': self.criterion, 'auc': self.auc, 'evaluations': self.evaluations,
                'converged': self.converged, 'best': self.best}


def compare_criteria(model, data, configs, x_axis='filters', workers=1):
    """
    Rank criteria by the AUC of their threshold curves on one model.

    Rows are sorted by descending AUC, ties by criterion spec; the first row
    is marked best.

    Raises:
        ValueError: the configs disagree on layer kinds or metric
    """

    configs = list(configs)
    if not configs:
        raise ValueError("at least one sweep config is required")
    if len({(c.prunable_kinds, c.metric, c.mode) for c in configs}) > 1:
        raise ValueError("criteria can only be compared with the same layer kinds, mode and metric")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            curves = list(executor.map(lambda config: build_curve(model, data, config), configs))
    else:
        curves = [build_curve(model, data, config) for config in configs]
    rows = [RankingRow(criterion=config.criterion.spec, auc=auc(curve, x_axis), evaluations=curve.evaluations,
                       converged=curve.converged, curve=curve)
            for config, curve in zip(configs, curves)]
    rows.sort(key=lambda row: (-row.auc, row.criterion))
    rows[0].best = True
    return rows


@dataclass(frozen=True)
class LayerSelectionRow:
    kinds: str
    threshold: float
    fraction_pruned: float
    metric: float
    flops_before: int
    flops_after: int

    @property
    def flops_reduction(self):
        return (self.flops_before - self.flops_after) / self.flops_before if self.flops_before else 0.0

    def to_dict(self):
        return {'kinds': self.kinds, 'threshold': self.threshold, 'fraction_pruned': self.fraction_pruned,
                'metric': self.metric, 'flops_before': self.flops_before, 'flops_after': self.flops_after,
                'flops_reduction': self.flops_reduction}


def compare_layer_selections(model, data, config, drop_tolerance=0.01):
    """
    Prune conv only, dense only and both at each selection's own plateau
    threshold and report the resulting FLOPs.

    Selections without a prunable layer are skipped.
    """

    rows = []
    for kinds in (frozenset({CONV}), frozenset({DENSE}), ALL_KINDS):
        selection = replace(config, prunable_kinds=kinds, threshold_domain=None)
        try:
            curve = build_curve(model, data, selection)
        except NothingToPruneError:
            logger.info("No prunable %s layer; skipping", kinds_label(kinds))
            continue
        sample = plateau_threshold(curve, drop_tolerance)
        _, report = prune_copy(model, selection.prune_config(sample.threshold))
        rows.append(LayerSelectionRow(kinds=kinds_label(kinds), threshold=sample.threshold,
                                      fraction_pruned=sample.fraction_pruned, metric=sample.metric,
                                      flops_before=report.flops_before, flops_after=report.flops_after))
    return rows
