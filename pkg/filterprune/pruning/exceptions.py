"""
Exception hierarchy of the pruning library and its mapping to CLI exit codes.
"""

from enum import IntEnum


class PruningError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(PruningError, ValueError):
    """Tensor or layer shapes do not fit together."""


class TensorIndexError(PruningError, IndexError):
    """Axis or index outside of a tensor's extent."""


class EmptyAxisError(PruningError, ValueError):
    """An operation would leave an axis with no slices."""


class KindError(PruningError, TypeError):
    """A layer (or criterion spec) of the wrong kind was supplied."""


class FormatError(PruningError, ValueError):
    """A model or dataset file does not follow its binary layout."""


class NumericsError(PruningError, ArithmeticError):
    """NaN or Inf appeared in activations or in the loss."""


class DomainError(PruningError, ValueError):
    """A criterion scorer received input outside its domain."""


class NothingToPruneError(PruningError):
    """The model has no prunable layer of the selected kinds."""


class InsufficientDataError(PruningError):
    """A class has fewer samples than a subset asks for."""


class SurgeryInvariantError(PruningError, AssertionError):
    """Model surgery left the network in an inconsistent state (a bug)."""


class ExitCode(IntEnum):
    """
    Exit codes of the management commands.

    Values:
    - OK: success
    - USAGE: bad flags, bad architecture spec or configuration
    - NUMERICS: divergence or non-finite values
    - IO_FORMAT: unreadable or malformed files
    """

    OK = 0
    USAGE = 2
    NUMERICS = 3
    IO_FORMAT = 4


def exit_code_for(exc):
    """
    Map an exception to the exit code of the command-line contract.

    Args:
        exc: exception raised while running a command

    Returns:
        ExitCode: code the process should terminate with
    """

    if isinstance(exc, NumericsError):
        return ExitCode.NUMERICS
    if isinstance(exc, (FormatError, InsufficientDataError, OSError)):
        return ExitCode.IO_FORMAT
    # configuration, shape and flag errors
    return ExitCode.USAGE
