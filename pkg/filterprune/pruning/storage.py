"""
CPMF model files.

Layout (all integers little-endian):

    b"CPMF" | version u32 (=1) | manifest length u64 | UTF-8 JSON manifest |
    parameter tensors as float32, row-major, in manifest order
"""

import json
import logging
import math
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError, KindError, ShapeError
from .network import LAYER_TYPES, Model, infer_shapes

logger = logging.getLogger(__name__)

MAGIC = b'CPMF'
VERSION = 1
HEADER = struct.Struct('<4sIQ')
FLOAT = np.dtype('<f4')


def build_manifest(model):
    """JSON-ready description of ``model``: layers, hyperparameters and tensor shapes."""

    layers = []
    for layer in model.layers:
        layers.append({
            'kind': layer.kind,
            'config': layer.hyperparameters(),
            'params': [{'name': name, 'shape': list(value.shape)} for name, value in layer.params().items()],
        })
    return {
        'input_shape': list(model.input_shape),
        'layers': layers,
        'metadata': model.metadata,
    }


def save(model, path):
    """
    Write ``model`` to ``path`` in CPMF format.

    Parameters are stored as float32 regardless of the model dtype.

    Returns:
        Path: the written file
    """

    path = Path(path)
    manifest = json.dumps(build_manifest(model), sort_keys=True, separators=(',', ':')).encode('utf-8')
    with path.open('wb') as stream:
        stream.write(HEADER.pack(MAGIC, VERSION, len(manifest)))
        stream.write(manifest)
        for layer in model.layers:
            for value in layer.params().values():
                stream.write(np.ascontiguousarray(value, dtype=FLOAT).tobytes(order='C'))
    logger.info("Saved model with %d layers to %s", len(model.layers), path)
    return path


def _read_manifest(payload, path):
    if len(payload) < HEADER.size:
        raise FormatError(f"{path}: file too short for a CPMF header")
    magic, version, length = HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic bytes {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported CPMF version {version}")
    end = HEADER.size + length
    if len(payload) < end:
        raise FormatError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(payload[HEADER.size:end].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: manifest is not valid JSON") from exc
    return manifest, end


def _read_tensors(entry, payload, offset, path, index):
    params = {}
    for spec in entry.get('params', []):
        shape = tuple(int(d) for d in spec['shape'])
        name = str(spec['name'])
        if any(d < 0 for d in shape):
            raise FormatError(f"{path}: tensor {name!r} of layer {index} has a negative dimension {shape}")
        nbytes = math.prod(shape) * FLOAT.itemsize
        if offset + nbytes > len(payload):
            raise FormatError(f"{path}: tensor {name!r} of layer {index} declares {shape} but the data is truncated")
        params[name] = np.frombuffer(payload, dtype=FLOAT, count=math.prod(shape), offset=offset) \
            .astype(np.float32).reshape(shape)
        offset += nbytes
    return params, offset


def load(path):
    """
    Read a CPMF file.

    Raises:
        FormatError: bad magic/version, broken manifest, truncated or trailing data
        ShapeError: tensor shapes disagree with the layer structure
    """

    path = Path(path)
    payload = path.read_bytes()
    manifest, offset = _read_manifest(payload, path)
    layers = []
    try:
        entries = list(manifest['layers'])
        input_shape = manifest['input_shape']
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: manifest lacks layers or input_shape") from exc
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: layer {index} is not an object")
        layer_type = LAYER_TYPES.get(entry.get('kind'))
        if layer_type is None:
            raise FormatError(f"{path}: layer {index} has unknown kind {entry.get('kind')!r}")
        try:
            params, offset = _read_tensors(entry, payload, offset, path, index)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}: layer {index} has a malformed tensor entry") from exc
        if tuple(params) != layer_type.param_names:
            raise ShapeError(f"{path}: layer {index} expects tensors {layer_type.param_names}, got {tuple(params)}")
        try:
            layers.append(layer_type(**params, **entry.get('config', {})))
        except TypeError as exc:
            raise FormatError(f"{path}: layer {index} has an invalid config") from exc
        except (ShapeError, KindError) as exc:
            raise ShapeError(f"{path}: layer {index}: {exc}") from exc
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes after the last tensor")
    model = Model(layers=layers, input_shape=input_shape, metadata=manifest.get('metadata') or {})
    infer_shapes(model)
    logger.info("Loaded model with %d layers from %s", len(layers), path)
    return model
