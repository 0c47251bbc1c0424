"""Exception types shared across the package.

Every error that can surface through the CLI maps to one of three exit codes:
configuration problems (2), numerical failures (3), and violations of the
mathematical hypotheses an experiment relies on (4).
"""


class FloqlabError(Exception):
    """Base class; carries the CLI exit code."""

    exit_code = 3


class ConfigError(FloqlabError):
    """Bad user input: schema violations, malformed specs, misuse of preconditions."""

    exit_code = 2


class GridMismatchError(ConfigError):
    """Two objects built on different quasi-momentum grids were combined."""


class ResourceLimitError(ConfigError):
    """A requested discretization exceeds the configured size limit."""


class DegenerateLatticeError(ConfigError):
    """Primitive vectors are linearly dependent."""


class NumericError(FloqlabError):
    """A numerical routine failed or left its stated tolerance."""

    exit_code = 3


class ContourCollisionError(NumericError):
    """An eigenvalue sits on (or too close to) the resolvent contour."""


class DegeneracyDetectionError(NumericError):
    """Eigenvalue cluster at the requested point does not have the requested size."""


class HypothesisViolation(FloqlabError):
    """The data genuinely falls outside the regime where a statement holds.

    Examples: the effective spectral enclosure does not fit inside the circle,
    or the averaging identity is evaluated above its critical scale.
    """

    exit_code = 4
