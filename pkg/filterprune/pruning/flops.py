"""
FLOPs accounting: multiply-accumulates counted twice (mul + add), bias and
activation work excluded.

- dense: 2 * I * H
- conv2d: 2 * k1 * k2 * rows * cols * I * H, with rows/cols the output extent
- every other layer: 0
"""

import logging
from dataclasses import asdict, dataclass, field

from .network import Conv2D, Dense, infer_shapes, output_shape

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerFlops:
    layer_index: int
    kind: str
    flops: int


@dataclass
class FlopsReport:
    """
    Per-layer and total FLOPs of one forward pass of a single input.

    Attributes:
    - layers: LayerFlops for every layer, in model order
    - total: sum of the per-layer counts
    """

    layers: list = field(default_factory=list)

    @property
    def total(self):
        return sum(entry.flops for entry in self.layers)

    def by_layer(self):
        return {entry.layer_index: entry.flops for entry in self.layers}

    def to_dict(self):
        return {'layers': [asdict(entry) for entry in self.layers], 'total': self.total}


def conv_flops(kernel, rows, cols, in_channels, filters):
    k1, k2 = kernel
    return 2 * k1 * k2 * rows * cols * in_channels * filters


def dense_flops(in_features, filters):
    return 2 * in_features * filters


def layer_flops(layer, input_shape):
    """
    FLOPs of ``layer`` for an input of FeatureShape ``input_shape``.

    Returns:
        int: exact count (python int, no overflow)
    """

    if isinstance(layer, Dense):
        return dense_flops(layer.in_features, layer.filters)
    if isinstance(layer, Conv2D):
        out = output_shape(layer, input_shape)
        return conv_flops(layer.kernel, out.rows, out.cols, layer.in_channels, layer.filters)
    return 0


def model_flops(model):
    """
    FlopsReport of ``model`` over its inferred shapes.

    Raises:
        ShapeError: the model does not pass shape inference
    """

    shapes = infer_shapes(model)
    return FlopsReport(layers=[
        LayerFlops(layer_index=index, kind=layer.kind, flops=layer_flops(layer, shapes[index]))
        for index, layer in enumerate(model.layers)
    ])


def flops_reduction(before, after):
    """Fractional reduction from ``before`` to ``after`` (reports or totals)."""

    before = before.total if isinstance(before, FlopsReport) else before
    after = after.total if isinstance(after, FlopsReport) else after
    if before == 0:
        return 0.0
    return (before - after) / before


def filter_flops(model, index):
    """
    FLOPs of a single filter of prunable layer ``index`` (its own layer only).

    For a conv layer this is ``2 * k1 * k2 * rows * cols * I``, for a dense
    layer ``2 * I``.
    """

    shapes = infer_shapes(model)
    layer = model.layers[index]
    if isinstance(layer, Conv2D):
        out = shapes[index + 1]
        return conv_flops(layer.kernel, out.rows, out.cols, layer.in_channels, 1)
    return dense_flops(layer.in_features, 1)
