"""
Dense float tensors.

A tensor is a C-contiguous numpy array of rank 1..4 in the library dtype
(see ``conf.float_dtype``). Everything here returns fresh arrays; callers may
treat tensors as immutable values.
"""

import math

import numpy as np

from .conf import float_dtype
from .exceptions import EmptyAxisError, NumericsError, ShapeError, TensorIndexError

MAX_RANK = 4
_MAX_ELEMENTS = 2 ** 63 - 1


def check_shape(shape):
    """
    Validate a tensor shape.

    Args:
        shape: sequence of axis extents

    Returns:
        tuple: the shape as a tuple of python ints

    Raises:
        ShapeError: rank outside 1..4, an extent below 1, or an element count
            that does not fit a signed 64-bit integer
    """

    dims = tuple(int(d) for d in shape)
    if not 1 <= len(dims) <= MAX_RANK:
        raise ShapeError(f"rank must be between 1 and {MAX_RANK}, got shape {dims}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"every dimension must be >= 1, got shape {dims}")
    if math.prod(dims) > _MAX_ELEMENTS:
        raise ShapeError(f"shape {dims} has too many elements")
    return dims


def as_tensor(data, dtype=None):
    """Copy ``data`` into a validated contiguous tensor of the library dtype."""

    array = np.array(data, dtype=dtype or float_dtype(), order='C', copy=True)
    check_shape(array.shape)
    return array


def row_major_strides(shape):
    """Element (not byte) strides of a row-major tensor of ``shape``."""

    dims = check_shape(shape)
    strides = [1] * len(dims)
    for axis in range(len(dims) - 2, -1, -1):
        strides[axis] = strides[axis + 1] * dims[axis + 1]
    return tuple(strides)


def linear_index(shape, index):
    """Offset of element ``index`` in the flat row-major data."""

    dims = check_shape(shape)
    if len(index) != len(dims):
        raise TensorIndexError(f"index {tuple(index)} does not match rank {len(dims)}")
    for position, (i, extent) in enumerate(zip(index, dims)):
        if not 0 <= i < extent:
            raise TensorIndexError(f"index {i} out of range for axis {position} of extent {extent}")
    return sum(i * stride for i, stride in zip(index, row_major_strides(dims)))


def check_finite(tensor, what='tensor'):
    """Raise NumericsError if ``tensor`` holds NaN or Inf."""

    if not np.all(np.isfinite(tensor)):
        raise NumericsError(f"{what} contains non-finite values")
    return tensor


def delete_indices(tensor, axis, indices):
    """
    Remove slices of ``tensor`` along ``axis``.

    Surviving slices keep their relative order and their exact bits. The
    input is not modified.

    Args:
        tensor: source tensor
        axis: axis to delete along
        indices: strictly increasing slice indices

    Returns:
        np.ndarray: new tensor with ``len(indices)`` fewer slices on ``axis``

    Raises:
        TensorIndexError: axis out of range, index out of range or indices
            not strictly increasing
        EmptyAxisError: every slice of the axis would be removed
    """

    if not 0 <= axis < tensor.ndim:
        raise TensorIndexError(f"axis {axis} out of range for rank {tensor.ndim}")
    indices = [int(i) for i in indices]
    if any(later <= earlier for earlier, later in zip(indices, indices[1:])):
        raise TensorIndexError(f"indices must be strictly increasing, got {indices}")
    extent = tensor.shape[axis]
    if indices and (indices[0] < 0 or indices[-1] >= extent):
        raise TensorIndexError(f"indices {indices} out of range for axis {axis} of extent {extent}")
    if len(indices) >= extent:
        raise EmptyAxisError(f"cannot delete all {extent} slices of axis {axis}")
    kept = np.delete(tensor, np.asarray(indices, dtype=np.intp), axis=axis)
    return np.ascontiguousarray(kept)


def reduce_over_rows(matrix, reducer):
    """
    Reduce a D x H matrix to H values, one per column.

    ``reducer`` receives the whole matrix (as float64) and must reduce along
    axis 0, e.g. ``lambda m: np.abs(m).max(axis=0)``.

    Raises:
        ShapeError: ``matrix`` is not 2-D or the reducer returned the wrong
            number of values
    """

    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ShapeError(f"expected a D x H matrix, got shape {matrix.shape}")
    values = np.asarray(reducer(matrix.astype(np.float64, copy=False)), dtype=np.float64).reshape(-1)
    if values.shape[0] != matrix.shape[1]:
        raise ShapeError(f"reducer returned {values.shape[0]} values for {matrix.shape[1]} columns")
    return values
