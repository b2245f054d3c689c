"""
Threshold pruning of whole filters with downstream weight surgery.

For every prunable layer of the selected kinds (the classifier head
excluded) filters scoring strictly below the threshold are removed. The
layers after it are then repaired up to and including the next prunable
layer:

- ChannelNorm layers lose the same channels from their four vectors
- a Flatten turns the removed channels into flat feature indices
- the next Conv2D loses input channels (weight axis 2), the next Dense
  loses input rows (weight axis 0)
"""

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .criteria import ApplicationMode, get_criterion, normalize
from .exceptions import NothingToPruneError, ShapeError, SurgeryInvariantError
from .flops import model_flops
from .network import ChannelNorm, Conv2D, Dense, Flatten, filter_matrix, flatten_index_map, infer_shapes
from .tensor import delete_indices

logger = logging.getLogger(__name__)

CONV = Conv2D.kind
DENSE = Dense.kind
ALL_KINDS = frozenset({CONV, DENSE})

_KIND_ALIASES = {
    'conv': frozenset({CONV}),
    'conv2d': frozenset({CONV}),
    'dense': frozenset({DENSE}),
    'both': ALL_KINDS,
    'all': ALL_KINDS,
}


def parse_kinds(value):
    """
    Normalize a layer-kind selection.

    Accepts 'conv', 'dense', 'both', a comma separated list of those or an
    iterable of kind names; returns a frozenset of layer kinds.
    """

    if isinstance(value, str):
        value = [part for part in value.split(',') if part.strip()]
    kinds = set()
    for part in value:
        try:
            kinds |= _KIND_ALIASES[part.strip().lower()]
        except KeyError as exc:
            raise ValueError(f"unknown layer kind {part!r}; choose conv, dense or both") from exc
    if not kinds:
        raise ValueError("at least one prunable layer kind is required")
    return frozenset(kinds)


def kinds_label(kinds):
    """'conv', 'dense' or 'both'."""
    if kinds == ALL_KINDS:
        return 'both'
    return 'conv' if CONV in kinds else 'dense'


@dataclass(frozen=True)
class PruneConfig:
    """
    Attributes:
    - criterion: Criterion or ``name[:normalization]`` spec
    - threshold: filters scoring below it are removed
    - mode: ApplicationMode (static scores are computed before any surgery)
    - prunable_kinds: layer kinds whose filters may be removed
    - protect_output_layer: never prune the final prunable layer
    """

    criterion: object
    threshold: float
    mode: ApplicationMode = ApplicationMode.STATIC
    prunable_kinds: frozenset = ALL_KINDS
    protect_output_layer: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'criterion', get_criterion(self.criterion))
        object.__setattr__(self, 'mode', ApplicationMode(self.mode))
        object.__setattr__(self, 'prunable_kinds', parse_kinds(self.prunable_kinds))
        object.__setattr__(self, 'threshold', float(self.threshold))
        if np.isnan(self.threshold):
            raise ValueError("threshold must not be NaN")

    def with_threshold(self, threshold):
        return PruneConfig(self.criterion, threshold, self.mode, self.prunable_kinds, self.protect_output_layer)

    def to_dict(self):
        return {
            'criterion': self.criterion.spec,
            'threshold': self.threshold,
            'mode': self.mode.value,
            'kinds': kinds_label(self.prunable_kinds),
            'protect_output_layer': self.protect_output_layer,
        }


@dataclass(frozen=True)
class LayerScores:
    layer_index: int
    kind: str
    raw: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class LayerPruneRecord:
    layer_index: int
    kind: str
    filters_before: int
    filters_after: int
    removed_indices: tuple

    def to_dict(self):
        return {**asdict(self), 'removed_indices': list(self.removed_indices)}


@dataclass
class PruneReport:
    """
    Outcome of one ``prune`` call.

    ``fraction_removed`` counts filters of the targeted layers only and is
    always below 1 (every layer keeps at least one filter).
    """

    config: PruneConfig
    layers: list = field(default_factory=list)
    parameters_before: int = 0
    parameters_after: int = 0
    flops_before: int = 0
    flops_after: int = 0

    @property
    def filters_before(self):
        return sum(record.filters_before for record in self.layers)

    @property
    def filters_removed(self):
        return sum(len(record.removed_indices) for record in self.layers)

    @property
    def fraction_removed(self):
        if not self.filters_before:
            return 0.0
        return self.filters_removed / self.filters_before

    @property
    def parameter_fraction(self):
        """Share of all model parameters removed by the surgery."""
        if not self.parameters_before:
            return 0.0
        return (self.parameters_before - self.parameters_after) / self.parameters_before

    @property
    def flops_reduction(self):
        if not self.flops_before:
            return 0.0
        return (self.flops_before - self.flops_after) / self.flops_before

    def to_dict(self):
        return {
            'layers': [record.to_dict() for record in self.layers],
            'totals': {
                'filters_before': self.filters_before,
                'filters_removed': self.filters_removed,
                'fraction_removed': self.fraction_removed,
                'parameters_before': self.parameters_before,
                'parameters_after': self.parameters_after,
                'flops_before': self.flops_before,
                'flops_after': self.flops_after,
                'flops_reduction': self.flops_reduction,
            },
            'config': self.config.to_dict(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def target_indices(model, config):
    """Layer indices whose filters ``config`` may remove."""

    indices = [i for i in model.prunable_indices() if model.layers[i].kind in config.prunable_kinds]
    if config.protect_output_layer:
        output = model.output_layer_index()
        indices = [i for i in indices if i != output]
    return indices


def score_all(model, config):
    """
    Raw and normalized scores of every prunable layer of the selected kinds.

    The classifier head is included. The model is not modified.

    Returns:
        dict: layer index -> LayerScores
    """

    criterion = get_criterion(config.criterion)
    table = {}
    for index in model.prunable_indices():
        layer = model.layers[index]
        if layer.kind not in config.prunable_kinds:
            continue
        raw = criterion.raw_scores(filter_matrix(layer))
        table[index] = LayerScores(layer_index=index, kind=layer.kind, raw=raw,
                                   normalized=normalize(raw, criterion.normalization))
    return table


def removed_filters(scores, threshold):
    """
    Indices to remove for one layer: every score below ``threshold``, except
    that the first highest-scoring filter survives when all would go.
    """

    scores = np.asarray(scores)
    removed = np.flatnonzero(scores < threshold)
    if removed.size == scores.size:
        keep = int(np.argmax(scores))
        removed = removed[removed != keep]
    return removed


def _remove_filters(model, index, removed):
    shapes = infer_shapes(model)
    layer = model.layers[index]
    layer.weights = delete_indices(layer.weights, layer.weights.ndim - 1, removed)
    layer.bias = delete_indices(layer.bias, 0, removed)
    indices = removed
    for position in range(index + 1, len(model.layers)):
        following = model.layers[position]
        if isinstance(following, ChannelNorm):
            for name in following.param_names:
                setattr(following, name, delete_indices(getattr(following, name), 0, indices))
        elif isinstance(following, Flatten):
            indices = flatten_index_map(shapes[position], indices)
        elif isinstance(following, Conv2D):
            following.weights = delete_indices(following.weights, 2, indices)
            break
        elif isinstance(following, Dense):
            following.weights = delete_indices(following.weights, 0, indices)
            break
    try:
        infer_shapes(model)
    except ShapeError as exc:
        raise SurgeryInvariantError(f"surgery on layer {index} broke the model: {exc}") from exc


def prune(model, config):
    """
    Remove low-scoring filters from ``model`` in place.

    Args:
        model: network to prune
        config: PruneConfig

    Returns:
        PruneReport

    Raises:
        NothingToPruneError: no layer of the selected kinds can be pruned
        SurgeryInvariantError: the repaired model fails shape inference
    """

    targets = target_indices(model, config)
    if not targets:
        raise NothingToPruneError(
            f"model has no prunable {kinds_label(config.prunable_kinds)} layer besides the output layer"
        )
    criterion = config.criterion
    parameters_before = model.parameter_count()
    flops_before = model_flops(model).total
    memo = {}
    if config.mode is ApplicationMode.STATIC:
        memo = {index: criterion.apply(model.layers[index]) for index in targets}

    records = []
    for index in targets:
        layer = model.layers[index]
        scores = memo[index] if index in memo else criterion.apply(layer)
        removed = removed_filters(scores, config.threshold)
        before = layer.filters
        if removed.size:
            _remove_filters(model, index, removed)
        logger.debug("Layer %d (%s): removed %d of %d filters", index, layer.kind, removed.size, before)
        records.append(LayerPruneRecord(layer_index=index, kind=layer.kind, filters_before=before,
                                        filters_after=layer.filters,
                                        removed_indices=tuple(int(i) for i in removed)))

    report = PruneReport(config=config, layers=records, parameters_before=parameters_before,
                         parameters_after=model.parameter_count(), flops_before=flops_before,
                         flops_after=model_flops(model).total)
    logger.info("Pruned %d of %d filters (%.2f%%) at threshold %g with %s",
                report.filters_removed, report.filters_before, 100 * report.fraction_removed,
                config.threshold, criterion.spec)
    return report


def prune_copy(model, config):
    """Prune a clone of ``model``; returns (pruned clone, report)."""

    pruned = model.clone()
    return pruned, prune(pruned, config)


def removed_sets(report):
    """Layer index -> frozenset of removed filter indices."""

    return {record.layer_index: frozenset(record.removed_indices) for record in report.layers}
