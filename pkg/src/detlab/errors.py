"""Exception taxonomy shared by the library and the CLI.

Every error carries a short machine-parsable ``category`` used by the CLI
to pick an exit code: ``parse`` and ``config`` map to exit 2, ``internal``
to exit 3, and the remaining data-domain errors to exit 2 as well.
"""

__all__ = [
    "DetlabError",
    "ParseError",
    "ConfigError",
    "EmptyPredictionsError",
    "MissingMatchError",
    "LengthMismatchError",
    "ShapeMismatchError",
    "OddChannelsError",
    "ZeroMatrixError",
    "MissingWeightError",
    "InternalError",
]


class DetlabError(Exception):
    """Base class for all detlab errors."""

    category = "data"


class ParseError(DetlabError):
    """An input file could not be parsed or failed schema validation."""

    category = "parse"


class ConfigError(DetlabError):
    """A configuration value violates a documented constraint."""

    category = "config"


class EmptyPredictionsError(DetlabError):
    """Assignment was requested over an empty prediction list."""


class MissingMatchError(DetlabError):
    """The one-to-one head assigned nothing to the requested ground truth."""


class LengthMismatchError(DetlabError):
    """Two per-prediction vectors have different lengths."""


class ShapeMismatchError(DetlabError):
    """Tensor shapes are inconsistent with the requested operation."""


class OddChannelsError(ShapeMismatchError):
    """A channel-splitting block was given an odd channel count."""


class ZeroMatrixError(DetlabError):
    """Numerical rank of an all-zero matrix is undefined."""


class MissingWeightError(DetlabError):
    """A stage manifest names a tensor that is absent from the archive."""


class InternalError(DetlabError):
    """An internal invariant was violated; outputs must not be trusted."""

    category = "internal"
