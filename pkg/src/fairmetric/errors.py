"""Exception hierarchy. Every error carries the process exit code the CLI maps it to."""


class FairmetricError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigurationError(FairmetricError):
    """Bad arguments, config values, or dimension mismatches."""

    exit_code = 1


class IngestionError(FairmetricError):
    """Malformed or inconsistent input files."""

    exit_code = 2


class ConstraintError(FairmetricError):
    """Degenerate constraint sets (e.g. no dissimilar pairs, empty triplet set)."""

    exit_code = 2


class EvaluationError(FairmetricError):
    """A loss cannot be computed on the given test fold."""

    exit_code = 2


class NumericalError(FairmetricError):
    """Linear-algebra failure (singular where positive-definite was required, etc.)."""

    exit_code = 3


class InvariantError(NumericalError):
    """An internal invariant was violated; indicates a genuinely broken matrix."""


class ConditionWarning(UserWarning):
    """Eigenvalue flooring kicked in during an inversion; result is regularized."""


class SmallClassWarning(UserWarning):
    """A rating class was too small for the requested neighbor count."""
