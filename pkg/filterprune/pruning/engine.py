"""
Minimal training and inference engine.

Forward inference, softmax cross-entropy, reverse-mode gradients and
minibatch SGD with momentum for the sequential models of ``network``.
Convolutions are computed with im2col on channels-last activations.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .conf import pruning_settings
from .exceptions import NumericsError, ShapeError
from .network import Activation, ChannelNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2D
from .tensor import check_finite

logger = logging.getLogger(__name__)


@dataclass
class Batch:
    """
    A minibatch.

    Attributes:
    - inputs: tensor (N, rows, cols, channels)
    - labels: int array (N,)
    """

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.inputs.ndim != 4 or self.inputs.shape[0] < 1:
            raise ShapeError(f"batch inputs must be (N, rows, cols, channels), got {self.inputs.shape}")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise ShapeError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.inputs.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters of ``train``.

    Attributes:
    - learning_rate: SGD step size (>= 0)
    - momentum: momentum coefficient in [0, 1)
    - epochs: number of passes over the data (0 leaves the model untouched)
    - batch_size: samples per update
    - seed: seed of the shuffling and dropout generator
    - dropout: whether dropout layers are active while training
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    dropout: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    @classmethod
    def from_settings(cls, **overrides):
        """Defaults from ``PRUNING['TRAIN']`` with ``None``-free overrides applied."""
        values = dict(pruning_settings()['TRAIN'])
        values['seed'] = pruning_settings()['DEFAULT_SEED']
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass(frozen=True)
class Metric:
    """
    Evaluation result.

    Attributes:
    - top1_accuracy: correct / total
    - mean_loss: mean cross-entropy
    - samples: number of evaluated samples
    """

    top1_accuracy: float
    mean_loss: float
    samples: int

    def to_dict(self):
        return asdict(self)


# activations

def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def _activate(z, function):
    if function == 'relu':
        return np.maximum(z, 0)
    if function == 'softmax':
        return _softmax(z)
    return z


def _activation_backward(grad, out, function, skip_softmax):
    if function == 'relu':
        return grad * (out > 0)
    if function == 'softmax':
        if skip_softmax:
            return grad
        return out * (grad - (grad * out).sum(axis=-1, keepdims=True))
    return grad


# convolution

def _same_padding(kernel):
    before = (kernel - 1) // 2
    return before, kernel - 1 - before


def _im2col(x, layer):
    k1, k2 = layer.kernel
    if layer.padding == 'same':
        x = np.pad(x, ((0, 0), _same_padding(k1), _same_padding(k2), (0, 0)))
    n, channels = x.shape[0], x.shape[3]
    windows = sliding_window_view(x, (k1, k2), axis=(1, 2))  # (N, oh, ow, C, k1, k2)
    oh, ow = windows.shape[1], windows.shape[2]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, k1 * k2 * channels)
    return cols, x.shape, (oh, ow)


def _col2im(dcols, padded_shape, layer, out_hw, input_shape):
    k1, k2 = layer.kernel
    n, channels = padded_shape[0], padded_shape[3]
    oh, ow = out_hw
    dcols = dcols.reshape(n, oh, ow, k1, k2, channels)
    dx = np.zeros(padded_shape, dtype=dcols.dtype)
    for i in range(k1):
        for j in range(k2):
            dx[:, i:i + oh, j:j + ow, :] += dcols[:, :, :, i, j, :]
    if layer.padding == 'same':
        top, left = _same_padding(k1)[0], _same_padding(k2)[0]
        dx = dx[:, top:top + input_shape[1], left:left + input_shape[2], :]
    return dx


def _conv_forward(layer, x, state):
    cols, padded_shape, (oh, ow) = _im2col(x, layer)
    z = cols @ layer.weights.reshape(-1, layer.filters) + layer.bias
    out = _activate(z.reshape(x.shape[0], oh, ow, layer.filters), layer.activation)
    return out, (cols, padded_shape, (oh, ow), x.shape, out)


def _conv_backward(layer, grad, cache, skip_softmax):
    cols, padded_shape, out_hw, input_shape, out = cache
    dz = _activation_backward(grad, out, layer.activation, skip_softmax).reshape(-1, layer.filters)
    grads = {
        'weights': (cols.T @ dz).reshape(layer.weights.shape),
        'bias': dz.sum(axis=0),
    }
    dcols = dz @ layer.weights.reshape(-1, layer.filters).T
    return _col2im(dcols, padded_shape, layer, out_hw, input_shape), grads


# dense

def _dense_forward(layer, x, state):
    out = _activate(x @ layer.weights + layer.bias, layer.activation)
    return out, (x, out)


def _dense_backward(layer, grad, cache, skip_softmax):
    x, out = cache
    dz = _activation_backward(grad, out, layer.activation, skip_softmax)
    grads = {'weights': x.T @ dz, 'bias': dz.sum(axis=0)}
    return dz @ layer.weights.T, grads


# pooling

def _pool_forward(layer, x, state):
    n, rows, cols, channels = x.shape
    oh, ow = rows // 2, cols // 2
    windows = x[:, :2 * oh, :2 * ow, :].reshape(n, oh, 2, ow, 2, channels) \
        .transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, channels, 4)
    # first maximum wins so ties route the gradient to a single input
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, (x.shape, argmax)


def _pool_backward(layer, grad, cache, skip_softmax):
    input_shape, argmax = cache
    n, oh, ow, channels = grad.shape
    dwindows = np.zeros((n, oh, ow, channels, 4), dtype=grad.dtype)
    np.put_along_axis(dwindows, argmax[..., None], grad[..., None], axis=-1)
    dx = np.zeros(input_shape, dtype=grad.dtype)
    dx[:, :2 * oh, :2 * ow, :] = dwindows.reshape(n, oh, ow, channels, 2, 2) \
        .transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * oh, 2 * ow, channels)
    return dx, {}


# shape, activation and dropout layers

def _flatten_forward(layer, x, state):
    return x.reshape(x.shape[0], -1), x.shape


def _flatten_backward(layer, grad, cache, skip_softmax):
    return grad.reshape(cache), {}


def _activation_forward(layer, x, state):
    out = _activate(x, layer.function)
    return out, out


def _activation_layer_backward(layer, grad, cache, skip_softmax):
    return _activation_backward(grad, cache, layer.function, skip_softmax), {}


def _dropout_forward(layer, x, state):
    if not state['dropout'] or layer.rate == 0.0:
        return x, None
    keep = 1.0 - layer.rate
    mask = (state['rng'].random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    return x * mask, mask


def _dropout_backward(layer, grad, cache, skip_softmax):
    return (grad if cache is None else grad * cache), {}


# channel normalization

def _norm_forward(layer, x, state):
    axes = tuple(range(x.ndim - 1))
    if state['training']:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        decay = x.dtype.type(layer.momentum)
        layer.running_mean = (decay * layer.running_mean + (1 - decay) * mean).astype(layer.running_mean.dtype)
        layer.running_var = (decay * layer.running_var + (1 - decay) * var).astype(layer.running_var.dtype)
    else:
        mean, var = layer.running_mean, layer.running_var
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    x_hat = (x - mean) * inv_std
    out = layer.gamma * x_hat + layer.beta
    return out.astype(x.dtype, copy=False), (x_hat, inv_std, state['training'])


def _norm_backward(layer, grad, cache, skip_softmax):
    x_hat, inv_std, batch_statistics = cache
    axes = tuple(range(grad.ndim - 1))
    grads = {'gamma': (grad * x_hat).sum(axis=axes), 'beta': grad.sum(axis=axes)}
    dx_hat = grad * layer.gamma
    if not batch_statistics:
        return dx_hat * inv_std, grads
    count = grad.size // grad.shape[-1]
    dx = inv_std / count * (count * dx_hat - dx_hat.sum(axis=axes) - x_hat * (dx_hat * x_hat).sum(axis=axes))
    return dx, grads


_KERNELS = {
    Conv2D: (_conv_forward, _conv_backward),
    Dense: (_dense_forward, _dense_backward),
    MaxPool2D: (_pool_forward, _pool_backward),
    Flatten: (_flatten_forward, _flatten_backward),
    Activation: (_activation_forward, _activation_layer_backward),
    Dropout: (_dropout_forward, _dropout_backward),
    ChannelNorm: (_norm_forward, _norm_backward),
}


def outputs_probabilities(model):
    """True when the last layer ends in softmax (otherwise outputs are logits)."""

    last = model.layers[-1]
    if isinstance(last, Activation):
        return last.function == 'softmax'
    return getattr(last, 'activation', None) == 'softmax'


def _check_input(model, inputs):
    inputs = np.asarray(inputs)
    if inputs.ndim == 3:
        inputs = inputs[None]
    if inputs.ndim != 4 or tuple(inputs.shape[1:]) != model.input_shape:
        raise ShapeError(f"model expects inputs (N, {', '.join(map(str, model.input_shape))}), got {inputs.shape}")
    return inputs.astype(model.dtype, copy=False)


def _forward_pass(model, inputs, training=False, rng=None, dropout=True):
    state = {'training': training, 'dropout': training and dropout, 'rng': rng}
    x = _check_input(model, inputs)
    caches = []
    for index, layer in enumerate(model.layers):
        forward_kernel = _KERNELS[type(layer)][0]
        x, cache = forward_kernel(layer, x, state)
        check_finite(x, f"output of layer {index} ({layer.kind})")
        caches.append(cache)
    return x, caches


def forward(model, inputs):
    """
    Inference pass (dropout inactive, ChannelNorm on running statistics).

    Args:
        model: network to run
        inputs: tensor (N, rows, cols, channels) or a single image

    Returns:
        np.ndarray: model outputs (N, classes); class probabilities when the
        final activation is softmax

    Raises:
        ShapeError: inputs do not match ``model.input_shape``
        NumericsError: an activation became NaN or Inf
    """

    outputs, _ = _forward_pass(model, inputs)
    return outputs


def predict_probabilities(model, inputs):
    """Class probabilities, applying softmax when the model emits logits."""

    outputs = forward(model, inputs)
    return outputs if outputs_probabilities(model) else _softmax(outputs)


def _cross_entropy(probabilities, labels):
    floor = np.finfo(probabilities.dtype).tiny
    picked = probabilities[np.arange(labels.shape[0]), labels]
    return -np.log(np.maximum(picked, floor))


def loss_and_gradients(model, inputs, labels, training=False, rng=None, dropout=True):
    """
    Mean cross-entropy of a batch and its gradient for every parameter.

    Returns:
        tuple: (loss, probabilities, gradients) where ``gradients`` holds one
        dict per layer mapping parameter names to gradient tensors
    """

    labels = np.asarray(labels, dtype=np.int64)
    outputs, caches = _forward_pass(model, inputs, training=training, rng=rng, dropout=dropout)
    emits_probabilities = outputs_probabilities(model)
    probabilities = outputs if emits_probabilities else _softmax(outputs)
    if labels.min() < 0 or labels.max() >= probabilities.shape[1]:
        raise ShapeError(f"labels must be in [0, {probabilities.shape[1]})")
    loss = float(_cross_entropy(probabilities, labels).mean())
    # gradient w.r.t. the logits feeding the final softmax
    grad = probabilities.copy()
    grad[np.arange(labels.shape[0]), labels] -= 1
    grad /= labels.shape[0]
    gradients = [None] * len(model.layers)
    last = len(model.layers) - 1
    for index in range(last, -1, -1):
        layer = model.layers[index]
        backward_kernel = _KERNELS[type(layer)][1]
        grad, gradients[index] = backward_kernel(layer, grad, caches[index], emits_probabilities and index == last)
    return loss, probabilities, gradients


def evaluate(model, batches):
    """
    Top-1 accuracy and mean cross-entropy over a stream of batches.

    ``batches`` is an iterable of ``Batch`` or anything with a ``batches()``
    method (a Dataset). Argmax ties go to the lowest class index.
    """

    if hasattr(batches, 'batches'):
        batches = batches.batches()
    correct, total, loss_sum = 0, 0, 0.0
    for batch in batches:
        probabilities = predict_probabilities(model, batch.inputs)
        predictions = probabilities.argmax(axis=1)
        correct += int((predictions == batch.labels).sum())
        total += len(batch)
        loss_sum += float(_cross_entropy(probabilities, batch.labels).astype(np.float64).sum())
    if total == 0:
        raise ValueError("cannot evaluate on an empty stream")
    return Metric(top1_accuracy=correct / total, mean_loss=loss_sum / total, samples=total)


def train(model, dataset, config):
    """
    Minibatch SGD with momentum, in place.

    Each epoch shuffles the sample order (Fisher-Yates from a PCG64 generator
    seeded with ``config.seed``). Velocities follow ``v = m * v - lr * g``,
    ``p += v``.

    Args:
        model: network to update
        dataset: object with ``images``, ``labels`` and ``batches(batch_size, order)``
        config: TrainConfig

    Returns:
        list[Metric]: per-epoch training loss and accuracy

    Raises:
        NumericsError: the loss diverged (names epoch and batch)
    """

    rng = np.random.Generator(np.random.PCG64(config.seed))
    velocities = [{name: np.zeros_like(value) for name, value in layer.trainable_params().items()}
                  for layer in model.layers]
    learning_rate = model.dtype.type(config.learning_rate)
    momentum = model.dtype.type(config.momentum)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = np.arange(len(dataset))
        rng.shuffle(order)
        correct, total, loss_sum = 0, 0, 0.0
        for batch_number, batch in enumerate(dataset.batches(config.batch_size, order), start=1):
            try:
                loss, probabilities, gradients = loss_and_gradients(
                    model, batch.inputs, batch.labels, training=True, rng=rng, dropout=config.dropout)
            except NumericsError as exc:
                raise NumericsError(f"epoch {epoch}, batch {batch_number}: {exc}") from exc
            if not np.isfinite(loss):
                raise NumericsError(f"epoch {epoch}, batch {batch_number}: loss is not finite")
            for layer, grads, velocity in zip(model.layers, gradients, velocities):
                for name, grad in grads.items():
                    velocity[name] = momentum * velocity[name] - learning_rate * grad.astype(model.dtype, copy=False)
                    setattr(layer, name, getattr(layer, name) + velocity[name])
            correct += int((probabilities.argmax(axis=1) == batch.labels).sum())
            total += len(batch)
            loss_sum += loss * len(batch)
        metric = Metric(top1_accuracy=correct / total, mean_loss=loss_sum / total, samples=total)
        logger.info("Epoch %d/%d: loss %.4f, accuracy %.4f", epoch, config.epochs,
                    metric.mean_loss, metric.top1_accuracy)
        history.append(metric)
    return history
