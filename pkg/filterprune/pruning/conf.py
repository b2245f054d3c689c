"""
Access to the ``PRUNING`` settings block with library defaults.
"""

import copy
import os
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DATA_ROOT_ENV = 'PRUNING_DATA_ROOT'

DEFAULTS = {
    'FLOAT_DTYPE': 'float32',
    'DEFAULT_SEED': 0,
    'DATA_ROOT': 'data',
    'RECORD_RUNS': True,
    'VALIDATION_FRACTION': 0.1,
    'SPLIT_SEED': 0,
    'TRAIN': {
        'learning_rate': 0.01,
        'momentum': 0.9,
        'epochs': 5,
        'batch_size': 64,
        'dropout': True,
    },
    'SWEEP': {
        'max_gap': 0.02,
        'max_evals': 32,
        'per_class': 100,
        'drop_tolerance': 0.01,
        'x_axis': 'filters',
    },
    'CHANNEL_NORM': {
        'momentum': 0.99,
        'epsilon': 1e-3,
    },
}

_DTYPES = {
    'float32': np.float32,
    'float64': np.float64,
}


def pruning_settings():
    """
    Library settings: ``DEFAULTS`` overlaid with ``settings.PRUNING``.

    Nested dictionaries (TRAIN, SWEEP, CHANNEL_NORM) are merged key by key,
    so a project can override a single value. Without a configured Django
    project the defaults are returned as is.

    Returns:
        dict: fresh copy of the merged settings
    """

    merged = copy.deepcopy(DEFAULTS)
    try:
        overrides = getattr(settings, 'PRUNING', {})
    except ImproperlyConfigured:
        overrides = {}
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


def float_dtype():
    """Global tensor dtype (float32 unless the 64-bit test mode is switched on)."""

    name = pruning_settings()['FLOAT_DTYPE']
    try:
        return np.dtype(_DTYPES[name])
    except KeyError as exc:
        raise ImproperlyConfigured(
            f"PRUNING['FLOAT_DTYPE'] must be one of {sorted(_DTYPES)}, got {name!r}"
        ) from exc


def data_root():
    """Dataset root directory; the PRUNING_DATA_ROOT env var takes precedence."""

    env_value = os.environ.get(DATA_ROOT_ENV)
    if env_value:
        return Path(env_value)
    return Path(pruning_settings()['DATA_ROOT'])
