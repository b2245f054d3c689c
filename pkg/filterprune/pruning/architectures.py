"""
Model construction: JSON architecture specs, the built-in A/B/C networks and
seeded weight initialization.

An architecture spec is a JSON object::

    {
        "input_shape": [28, 28, 1],
        "layers": [
            {"kind": "conv2d", "filters": 8, "kernel": 3, "padding": "same", "activation": "relu"},
            {"kind": "maxpool2d"},
            {"kind": "flatten"},
            {"kind": "dense", "units": 10, "activation": "softmax"}
        ]
    }
"""

import json
import logging
from pathlib import Path

import numpy as np

from .conf import float_dtype, pruning_settings
from .exceptions import KindError, ShapeError
from .network import (Activation, ChannelNorm, Conv2D, Dense, Dropout, FeatureShape, Flatten, MaxPool2D, Model,
                      infer_shapes, output_shape)

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = 'builtin:'


def _conv(filters):
    return {'kind': 'conv2d', 'filters': filters, 'kernel': 3, 'padding': 'same', 'activation': 'relu'}


def _dense(units, activation='relu'):
    return {'kind': 'dense', 'units': units, 'activation': activation}


POOL = {'kind': 'maxpool2d'}
FLATTEN = {'kind': 'flatten'}


def builtin_layers(name, classes=10):
    """
    Layer lists of the built-in VGG-style networks.

    - A: convolution heavy (five conv layers, one small hidden dense layer)
    - B: balanced (three conv layers, one hidden dense layer with about as
      many weights as all convolutions together on 28x28 inputs)
    - C: dense heavy (one thin conv layer, two wide dense layers)
    """

    layers = {
        'A': [_conv(32), _conv(32), POOL, _conv(64), _conv(64), POOL, _conv(64), POOL, FLATTEN,
              _dense(32), {'kind': 'dropout', 'rate': 0.25}],
        'B': [_conv(32), POOL, _conv(64), POOL, _conv(32), POOL, FLATTEN,
              _dense(128), {'kind': 'dropout', 'rate': 0.5}],
        'C': [_conv(8), POOL, FLATTEN, _dense(128), {'kind': 'dropout', 'rate': 0.5}, _dense(64)],
    }
    try:
        body = layers[name.upper()]
    except KeyError as exc:
        raise KindError(f"unknown builtin architecture {name!r}; choose A, B or C") from exc
    return [dict(layer) for layer in body] + [_dense(classes, 'softmax')]


def _kernel(value):
    if isinstance(value, int):
        return value, value
    k1, k2 = value
    return int(k1), int(k2)


def _build_layer(entry, shape, index, dtype):
    kind = entry.get('kind')
    try:
        if kind == 'conv2d':
            if not shape.is_spatial:
                raise ShapeError("conv2d layers need a spatial input")
            k1, k2 = _kernel(entry.get('kernel', 3))
            filters = int(entry['filters'])
            return Conv2D(weights=np.zeros((k1, k2, shape.channels, filters), dtype=dtype),
                          bias=np.zeros(filters, dtype=dtype),
                          padding=entry.get('padding', 'same'),
                          activation=entry.get('activation', 'relu'))
        if kind == 'dense':
            units = int(entry['units'])
            if shape.is_spatial:
                raise ShapeError("dense layers need a flatten before them")
            return Dense(weights=np.zeros((shape.features, units), dtype=dtype),
                         bias=np.zeros(units, dtype=dtype),
                         activation=entry.get('activation', 'relu'))
        if kind == 'maxpool2d':
            return MaxPool2D()
        if kind == 'flatten':
            return Flatten()
        if kind == 'activation':
            return Activation(function=entry.get('function', 'relu'))
        if kind == 'dropout':
            return Dropout(rate=entry.get('rate', 0.5))
        if kind == 'channel_norm':
            defaults = pruning_settings()['CHANNEL_NORM']
            channels = shape.last_axis
            return ChannelNorm(gamma=np.ones(channels, dtype=dtype), beta=np.zeros(channels, dtype=dtype),
                               running_mean=np.zeros(channels, dtype=dtype),
                               running_var=np.ones(channels, dtype=dtype),
                               epsilon=entry.get('epsilon', defaults['epsilon']),
                               momentum=entry.get('momentum', defaults['momentum']))
    except KindError as exc:
        raise KindError(f"layer {index} ({kind}): {exc}") from exc
    except ShapeError as exc:
        raise ShapeError(f"layer {index} ({kind}): {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeError(f"layer {index} ({kind}): malformed entry {entry}") from exc
    raise KindError(f"layer {index}: unknown kind {kind!r}")


def from_spec(spec, seed=None, dtype=None):
    """
    Build and initialize a model from an architecture spec.

    Args:
        spec: dict, JSON string path, or a ``builtin:<A|B|C>`` name
        seed: initialization seed (settings DEFAULT_SEED when omitted)
        dtype: parameter dtype (library dtype when omitted)

    Raises:
        ShapeError: layer parameters that cannot be chained
        KindError: unknown layer kinds or builtin names
    """

    if isinstance(spec, (str, Path)):
        spec = load_spec(spec)
    dtype = dtype or float_dtype()
    try:
        input_shape = tuple(int(d) for d in spec['input_shape'])
        entries = list(spec['layers'])
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeError("architecture spec needs 'input_shape' and 'layers'") from exc
    if len(input_shape) != 3:
        raise ShapeError(f"input_shape must be (rows, cols, channels), got {input_shape}")
    shape = FeatureShape.spatial(*input_shape)
    layers = []
    for index, entry in enumerate(entries):
        layer = _build_layer(entry, shape, index, dtype)
        shape = output_shape(layer, shape, index)
        layers.append(layer)
    model = Model(layers=layers, input_shape=input_shape, metadata={'architecture': spec.get('name', 'custom')})
    model.validate()
    initialize(model, seed)
    return model


def load_spec(reference, input_shape=(28, 28, 1), classes=10):
    """Resolve ``builtin:<name>`` or a JSON file path to a spec dict."""

    reference = str(reference)
    if reference.startswith(BUILTIN_PREFIX):
        name = reference[len(BUILTIN_PREFIX):]
        return {'name': f"builtin:{name.upper()}", 'input_shape': list(input_shape),
                'layers': builtin_layers(name, classes)}
    try:
        return json.loads(Path(reference).read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise ShapeError(f"{reference}: architecture spec is not valid JSON") from exc


def builtin(name, input_shape=(28, 28, 1), classes=10, seed=None):
    """Initialized built-in network ``name`` (A, B or C)."""

    return from_spec(load_spec(f"{BUILTIN_PREFIX}{name}", input_shape, classes), seed=seed)


def _uses_relu(model, index):
    layer = model.layers[index]
    if layer.activation == 'relu':
        return True
    following = model.layers[index + 1] if index + 1 < len(model.layers) else None
    return isinstance(following, Activation) and following.function == 'relu'


def initialize(model, seed=None):
    """
    Re-initialize ``model`` in place.

    Conv/dense weights are He-uniform when the layer feeds a relu and
    Glorot-uniform otherwise; biases, ChannelNorm shifts and means start at
    zero, scales and variances at one. Random numbers come from numpy's PCG64
    generator seeded with ``seed``.
    """

    seed = pruning_settings()['DEFAULT_SEED'] if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))
    for index, layer in enumerate(model.layers):
        if isinstance(layer, (Conv2D, Dense)):
            shape = layer.weights.shape
            receptive = int(np.prod(shape[:-2])) if len(shape) == 4 else 1
            fan_in, fan_out = receptive * shape[-2], receptive * shape[-1]
            if _uses_relu(model, index):
                limit = np.sqrt(6.0 / fan_in)
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
            layer.weights = rng.uniform(-limit, limit, size=shape).astype(layer.weights.dtype)
            layer.bias = np.zeros_like(layer.bias)
        elif isinstance(layer, ChannelNorm):
            layer.gamma = np.ones_like(layer.gamma)
            layer.beta = np.zeros_like(layer.beta)
            layer.running_mean = np.zeros_like(layer.running_mean)
            layer.running_var = np.ones_like(layer.running_var)
    infer_shapes(model)
    logger.debug("Initialized %d layers with seed %s", len(model.layers), seed)
    return model
