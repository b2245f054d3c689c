"""
Criterion functions: a prunable layer's D x H filter matrix in, H saliency
scores out (higher means more valuable).

Criteria are referred to by spec strings ``name[:normalization]`` such as
``std``, ``mean_abs:rank`` or ``max_abs:minmax``.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DomainError, KindError
from .network import filter_matrix
from .tensor import reduce_over_rows

logger = logging.getLogger(__name__)

RAW = 'raw'
MINMAX = 'minmax'
RANK = 'rank'
PERCENTILE = 'percentile'
NORMALIZATIONS = (RAW, MINMAX, RANK, PERCENTILE)


class ApplicationMode(Enum):
    """
    When criterion scores are computed relative to pruning.

    - STATIC: every layer is scored before any filter is removed
    - PROGRESSIVE: each layer is scored after upstream layers were pruned
    """

    STATIC = 'static'
    PROGRESSIVE = 'progressive'


def _check_rows(matrix):
    if matrix.shape[0] < 1:
        raise DomainError("criterion needs at least one weight per filter")
    return matrix


def std_scores(matrix):
    """Population standard deviation of every column."""
    return _check_rows(matrix).std(axis=0)


def range_scores(matrix):
    matrix = _check_rows(matrix)
    return matrix.max(axis=0) - matrix.min(axis=0)


def mean_abs_scores(matrix):
    return np.abs(_check_rows(matrix)).mean(axis=0)


def max_abs_scores(matrix):
    return np.abs(_check_rows(matrix)).max(axis=0)


def abs_range_scores(matrix):
    """max|w| - min|w| of every column."""
    magnitudes = np.abs(_check_rows(matrix))
    return magnitudes.max(axis=0) - magnitudes.min(axis=0)


def _column_score(scorer, col):
    col = np.asarray(col, dtype=np.float64).reshape(-1, 1)
    return float(reduce_over_rows(col, scorer)[0])


def score_std(col):
    return _column_score(std_scores, col)


def score_range(col):
    return _column_score(range_scores, col)


def score_mean_abs(col):
    return _column_score(mean_abs_scores, col)


def score_max_abs(col):
    return _column_score(max_abs_scores, col)


def score_abs_range(col):
    return _column_score(abs_range_scores, col)


@dataclass(frozen=True)
class _Registration:
    scorer: object
    column_local: bool


_REGISTRY = {
    'std': _Registration(std_scores, True),
    'range': _Registration(range_scores, True),
    'mean_abs': _Registration(mean_abs_scores, True),
    'max_abs': _Registration(max_abs_scores, True),
    'abs_range': _Registration(abs_range_scores, True),
}

BUILTIN_CRITERIA = ('std', 'range', 'mean_abs', 'max_abs')


def register_criterion(name, scorer, column_local=False):
    """
    Make a custom scorer available under ``name``.

    Args:
        name: registry key (no ':' allowed)
        scorer: callable mapping a float64 D x H matrix to H scores
        column_local: whether score h depends on column h only

    Raises:
        ValueError: the name is taken or malformed
    """

    if not name or ':' in name:
        raise ValueError(f"invalid criterion name {name!r}")
    if name in _REGISTRY:
        raise ValueError(f"criterion {name!r} is already registered")
    _REGISTRY[name] = _Registration(scorer, column_local)


def unregister_criterion(name):
    if name in BUILTIN_CRITERIA or name == 'abs_range':
        raise ValueError(f"cannot remove built-in criterion {name!r}")
    _REGISTRY.pop(name, None)


def available_criteria():
    return sorted(_REGISTRY)


def normalize(scores, normalization):
    """
    Rescale one layer's raw scores.

    - raw: unchanged
    - minmax: (s - min) / (max - min); all-equal scores map to 1.0
    - rank: ascending rank / (H - 1), ties ordered by filter index
    - percentile: |{k : s_k <= s_h}| / H, ties share a value

    A single-filter layer maps to [1.0] under every normalization but raw.
    """

    scores = np.asarray(scores, dtype=np.float64)
    if normalization == RAW:
        return scores
    count = scores.shape[0]
    if normalization not in NORMALIZATIONS:
        raise KindError(f"unknown normalization {normalization!r}; choose from {NORMALIZATIONS}")
    if count == 1:
        return np.ones(1)
    if normalization == MINMAX:
        low, high = scores.min(), scores.max()
        if high == low:
            return np.ones(count)
        return (scores - low) / (high - low)
    if normalization == RANK:
        ranks = np.empty(count)
        ranks[np.argsort(scores, kind='stable')] = np.arange(count)
        return ranks / (count - 1)
    return np.searchsorted(np.sort(scores), scores, side='right') / count


@dataclass(frozen=True)
class Criterion:
    """
    A named scorer plus the normalization applied to its output.

    Attributes:
    - name: registry name of the scorer
    - scorer: callable, D x H matrix -> H scores
    - normalization: raw, minmax, rank or percentile
    - column_local: score h depends only on column h
    """

    name: str
    scorer: object
    normalization: str = RAW
    column_local: bool = True

    @property
    def spec(self):
        """Spec string that ``get_criterion`` turns back into this criterion."""
        return self.name if self.normalization == RAW else f"{self.name}:{self.normalization}"

    def __str__(self):
        return self.spec

    def raw_scores(self, matrix):
        return reduce_over_rows(matrix, self.scorer)

    def scores(self, matrix):
        return normalize(self.raw_scores(matrix), self.normalization)

    def apply(self, layer):
        """Normalized scores of every filter of a prunable ``layer``."""
        return self.scores(filter_matrix(layer))


def get_criterion(spec):
    """
    Resolve ``name[:normalization]`` to a Criterion.

    Raises:
        KindError: unknown criterion name or normalization
    """

    if isinstance(spec, Criterion):
        return spec
    name, _, normalization = str(spec).strip().partition(':')
    normalization = normalization or RAW
    try:
        registration = _REGISTRY[name]
    except KeyError as exc:
        raise KindError(f"unknown criterion {name!r}; choose from {', '.join(available_criteria())}") from exc
    if normalization not in NORMALIZATIONS:
        raise KindError(f"unknown normalization {normalization!r}; choose from {', '.join(NORMALIZATIONS)}")
    return Criterion(name=name, scorer=registration.scorer, normalization=normalization,
                     column_local=registration.column_local)


def apply(criterion, layer):
    """Module-level form of ``Criterion.apply`` accepting a spec string."""

    return get_criterion(criterion).apply(layer)
