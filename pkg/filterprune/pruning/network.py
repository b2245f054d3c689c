"""
Sequential CNN representation.

Layers are plain dataclasses holding numpy parameter tensors; a ``Model`` is
an ordered list of them plus the input image shape. Activations are laid out
channels-last (rows, cols, channels) and ``Flatten`` emits features in row,
col, channel order. Convolutions use stride 1, pooling a 2x2 window with
stride 2.
"""

import copy
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .exceptions import KindError, ShapeError, TensorIndexError

PRUNABLE = 'prunable'
PASS_THROUGH = 'pass-through'
SHAPE_TRANSFORMING = 'shape-transforming'

PADDINGS = ('same', 'valid')
ACTIVATIONS = ('none', 'relu', 'softmax')


def _vector(values, name, length=None):
    values = np.ascontiguousarray(values)
    if values.ndim != 1 or (length is not None and values.shape[0] != length):
        expected = f"({length},)" if length is not None else "a vector"
        raise ShapeError(f"{name} must have shape {expected}, got {values.shape}")
    return values


def _choice(value, choices, name):
    if value not in choices:
        raise KindError(f"{name} must be one of {choices}, got {value!r}")
    return value


class Layer:
    """
    Base class of all layer records.

    Class attributes:
    - kind: serialized layer name
    - role: prunable, pass-through or shape-transforming
    - param_names: names of the parameter tensors in serialization order
    - buffer_names: parameters updated by the forward pass, never by SGD
    """

    kind: ClassVar[str] = ''
    role: ClassVar[str] = ''
    param_names: ClassVar[tuple] = ()
    buffer_names: ClassVar[tuple] = ()

    def params(self):
        """Parameter tensors by name, in ``param_names`` order."""
        return {name: getattr(self, name) for name in self.param_names}

    def trainable_params(self):
        return {name: value for name, value in self.params().items() if name not in self.buffer_names}

    def hyperparameters(self):
        """Non-tensor attributes needed to rebuild the layer."""
        return {}

    def parameter_count(self):
        return sum(int(p.size) for p in self.params().values())


@dataclass(eq=False)
class Conv2D(Layer):
    """
    2-D convolution, stride 1.

    Attributes:
    - weights: tensor (k1, k2, I, H)
    - bias: tensor (H,)
    - padding: 'same' or 'valid'
    - activation: 'none', 'relu' or 'softmax'
    """

    weights: np.ndarray
    bias: np.ndarray
    padding: str = 'same'
    activation: str = 'none'

    kind: ClassVar[str] = 'conv2d'
    role: ClassVar[str] = PRUNABLE
    param_names: ClassVar[tuple] = ('weights', 'bias')

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights)
        if self.weights.ndim != 4 or min(self.weights.shape) < 1:
            raise ShapeError(f"conv2d weights must be (k1, k2, I, H), got {self.weights.shape}")
        self.bias = _vector(self.bias, 'conv2d bias', self.filters)
        _choice(self.padding, PADDINGS, 'padding')
        _choice(self.activation, ACTIVATIONS, 'activation')

    @property
    def kernel(self):
        return tuple(self.weights.shape[:2])

    @property
    def in_channels(self):
        return self.weights.shape[2]

    @property
    def filters(self):
        return self.weights.shape[3]

    def hyperparameters(self):
        return {'padding': self.padding, 'activation': self.activation}


@dataclass(eq=False)
class Dense(Layer):
    """
    Fully connected layer.

    Attributes:
    - weights: tensor (I, H)
    - bias: tensor (H,)
    - activation: 'none', 'relu' or 'softmax'
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = 'none'

    kind: ClassVar[str] = 'dense'
    role: ClassVar[str] = PRUNABLE
    param_names: ClassVar[tuple] = ('weights', 'bias')

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights)
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise ShapeError(f"dense weights must be (I, H), got {self.weights.shape}")
        self.bias = _vector(self.bias, 'dense bias', self.filters)
        _choice(self.activation, ACTIVATIONS, 'activation')

    @property
    def in_features(self):
        return self.weights.shape[0]

    @property
    def filters(self):
        return self.weights.shape[1]

    def hyperparameters(self):
        return {'activation': self.activation}


@dataclass(eq=False)
class MaxPool2D(Layer):
    """2x2 max pooling with stride 2 (floor on odd extents)."""

    kind: ClassVar[str] = 'maxpool2d'
    role: ClassVar[str] = PASS_THROUGH


@dataclass(eq=False)
class Flatten(Layer):
    kind: ClassVar[str] = 'flatten'
    role: ClassVar[str] = SHAPE_TRANSFORMING


@dataclass(eq=False)
class Activation(Layer):
    """Standalone activation; ``function`` is 'none', 'relu' or 'softmax'."""

    function: str = 'relu'

    kind: ClassVar[str] = 'activation'
    role: ClassVar[str] = PASS_THROUGH

    def __post_init__(self):
        _choice(self.function, ACTIVATIONS, 'activation function')

    def hyperparameters(self):
        return {'function': self.function}


@dataclass(eq=False)
class Dropout(Layer):
    """Inverted dropout; identity at inference."""

    rate: float = 0.5

    kind: ClassVar[str] = 'dropout'
    role: ClassVar[str] = PASS_THROUGH

    def __post_init__(self):
        if not 0.0 <= float(self.rate) < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")
        self.rate = float(self.rate)

    def hyperparameters(self):
        return {'rate': self.rate}


@dataclass(eq=False)
class ChannelNorm(Layer):
    """
    Per-channel normalization over the last axis (batch-norm style).

    Attributes:
    - gamma, beta: learned scale and shift, shape (C,)
    - running_mean, running_var: inference statistics, shape (C,); moved by
      every training forward pass whatever the learning rate
    - epsilon: variance floor
    - momentum: running statistics decay used during training
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3
    momentum: float = 0.99

    kind: ClassVar[str] = 'channel_norm'
    role: ClassVar[str] = PASS_THROUGH
    param_names: ClassVar[tuple] = ('gamma', 'beta', 'running_mean', 'running_var')
    buffer_names: ClassVar[tuple] = ('running_mean', 'running_var')

    def __post_init__(self):
        self.gamma = _vector(self.gamma, 'channel_norm gamma')
        channels = self.gamma.shape[0]
        self.beta = _vector(self.beta, 'channel_norm beta', channels)
        self.running_mean = _vector(self.running_mean, 'channel_norm running_mean', channels)
        self.running_var = _vector(self.running_var, 'channel_norm running_var', channels)
        if np.any(self.running_var < 0):
            raise ShapeError("channel_norm running_var must be non-negative")
        if self.epsilon <= 0:
            raise ValueError(f"channel_norm epsilon must be positive, got {self.epsilon}")
        self.epsilon = float(self.epsilon)
        self.momentum = float(self.momentum)

    @property
    def channels(self):
        return self.gamma.shape[0]

    def hyperparameters(self):
        return {'epsilon': self.epsilon, 'momentum': self.momentum}


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, Dense, MaxPool2D, Flatten, Activation, Dropout, ChannelNorm)}


def classify(layer):
    """Role of ``layer``: PRUNABLE, PASS_THROUGH or SHAPE_TRANSFORMING."""

    if type(layer).kind not in LAYER_TYPES:
        raise KindError(f"unknown layer type {type(layer).__name__}")
    return layer.role


@dataclass(frozen=True)
class FeatureShape:
    """
    Shape of the activations at a layer boundary (batch axis excluded).

    Either spatial (rows, cols, channels) or flat (features).
    """

    rows: int = None
    cols: int = None
    channels: int = None
    features: int = None

    @classmethod
    def spatial(cls, rows, cols, channels):
        return cls(rows=int(rows), cols=int(cols), channels=int(channels))

    @classmethod
    def flat(cls, features):
        return cls(features=int(features))

    @property
    def is_spatial(self):
        return self.features is None

    @property
    def size(self):
        if self.is_spatial:
            return self.rows * self.cols * self.channels
        return self.features

    @property
    def last_axis(self):
        """Extent of the channel axis (channels, or features when flat)."""
        return self.channels if self.is_spatial else self.features

    def as_tuple(self):
        if self.is_spatial:
            return (self.rows, self.cols, self.channels)
        return (self.features,)


@dataclass(eq=False)
class Model:
    """
    Sequential network.

    Attributes:
    - layers: ordered layer records
    - input_shape: (rows, cols, channels) of one input image
    """

    layers: list
    input_shape: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layers = list(self.layers)
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ShapeError(f"input_shape must be (rows, cols, channels), got {self.input_shape}")

    def __len__(self):
        return len(self.layers)

    def clone(self):
        """Deep copy with fresh parameter arrays."""
        return copy.deepcopy(self)

    def astype(self, dtype):
        """Clone with every parameter tensor cast to ``dtype``."""
        cloned = self.clone()
        for layer in cloned.layers:
            for name, value in layer.params().items():
                setattr(layer, name, np.ascontiguousarray(value, dtype=dtype))
        return cloned

    @property
    def dtype(self):
        for layer in self.layers:
            for value in layer.params().values():
                return value.dtype
        return np.dtype(np.float32)

    def prunable_indices(self):
        return [i for i, layer in enumerate(self.layers) if layer.role == PRUNABLE]

    def output_layer_index(self):
        """Index of the final prunable layer (the classifier head)."""
        indices = self.prunable_indices()
        if not indices:
            raise ShapeError("model has no prunable layer")
        return indices[-1]

    @property
    def class_count(self):
        return self.layers[self.output_layer_index()].filters

    def parameter_count(self):
        return sum(layer.parameter_count() for layer in self.layers)

    def filter_counts(self):
        return {i: self.layers[i].filters for i in self.prunable_indices()}

    def validate(self):
        """Run shape inference and check there is an output layer."""
        shapes = infer_shapes(self)
        self.output_layer_index()
        return shapes


def output_shape(layer, shape, index=None):
    """
    Shape produced by ``layer`` for an input of ``shape``.

    Raises:
        ShapeError: the layer's parameters do not fit ``shape``
    """

    where = f"layer {index} ({layer.kind})" if index is not None else layer.kind
    if isinstance(layer, Conv2D):
        if not shape.is_spatial:
            raise ShapeError(f"{where}: expects a spatial input, got {shape.as_tuple()}")
        if layer.in_channels != shape.channels:
            raise ShapeError(f"{where}: expects {layer.in_channels} input channels, got {shape.channels}")
        if layer.padding == 'same':
            return FeatureShape.spatial(shape.rows, shape.cols, layer.filters)
        k1, k2 = layer.kernel
        rows, cols = shape.rows - k1 + 1, shape.cols - k2 + 1
        if rows < 1 or cols < 1:
            raise ShapeError(f"{where}: kernel {layer.kernel} larger than input {shape.as_tuple()}")
        return FeatureShape.spatial(rows, cols, layer.filters)
    if isinstance(layer, Dense):
        if shape.is_spatial:
            raise ShapeError(f"{where}: expects a flat input, got {shape.as_tuple()}")
        if layer.in_features != shape.features:
            raise ShapeError(f"{where}: expects {layer.in_features} inputs, got {shape.features}")
        return FeatureShape.flat(layer.filters)
    if isinstance(layer, MaxPool2D):
        if not shape.is_spatial or shape.rows < 2 or shape.cols < 2:
            raise ShapeError(f"{where}: needs a spatial input of at least 2x2, got {shape.as_tuple()}")
        return FeatureShape.spatial(shape.rows // 2, shape.cols // 2, shape.channels)
    if isinstance(layer, Flatten):
        if not shape.is_spatial:
            raise ShapeError(f"{where}: input is already flat")
        return FeatureShape.flat(shape.size)
    if isinstance(layer, ChannelNorm):
        if layer.channels != shape.last_axis:
            raise ShapeError(f"{where}: has {layer.channels} channels, input has {shape.last_axis}")
        return shape
    if isinstance(layer, (Activation, Dropout)):
        return shape
    raise KindError(f"{where}: unknown layer type {type(layer).__name__}")


def infer_shapes(model):
    """
    Feature shapes at every layer boundary.

    Returns:
        list[FeatureShape]: ``len(model.layers) + 1`` entries; entry ``i`` is
        the input of layer ``i``, the last entry the model output
    """

    shape = FeatureShape.spatial(*model.input_shape)
    shapes = [shape]
    for index, layer in enumerate(model.layers):
        shape = output_shape(layer, shape, index)
        shapes.append(shape)
    return shapes


def filter_matrix(layer):
    """
    D x H view of a prunable layer's weights; column h is filter h.

    For Conv2D, D = k1 * k2 * I and each column is the row-major flattening
    of ``weights[:, :, :, h]``; for Dense the weights are returned as is.
    """

    if isinstance(layer, Conv2D):
        return layer.weights.reshape(-1, layer.filters)
    if isinstance(layer, Dense):
        return layer.weights
    raise KindError(f"{type(layer).__name__} is not prunable")


def flatten_index_map(shape, removed_channels):
    """
    Flat feature indices produced by ``removed_channels`` after a Flatten.

    Args:
        shape: spatial FeatureShape entering the Flatten
        removed_channels: channel indices

    Returns:
        np.ndarray: sorted int64 indices ``(r * cols + c) * C + ch``

    Raises:
        TensorIndexError: a channel outside ``[0, C)``
    """

    if not shape.is_spatial:
        raise ShapeError(f"flatten input must be spatial, got {shape.as_tuple()}")
    channels = np.array(sorted(set(int(c) for c in removed_channels)), dtype=np.int64)
    if channels.size and (channels[0] < 0 or channels[-1] >= shape.channels):
        raise TensorIndexError(f"channels {channels.tolist()} out of range for {shape.channels} channels")
    positions = np.arange(shape.rows * shape.cols, dtype=np.int64)[:, None] * shape.channels
    return (positions + channels[None, :]).reshape(-1)
