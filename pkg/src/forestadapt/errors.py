"""Exception taxonomy shared by the library and the CLI exit-code mapping."""


class ForestAdaptError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(ForestAdaptError):
    """An argument violates a documented precondition."""


class DimensionMismatchError(ForestAdaptError):
    """Vector/selector/model dimensions disagree."""


class DegenerateDataError(ForestAdaptError):
    """Data cannot support the requested operation (single class, empty, ...)."""


class DegenerateSplitError(ForestAdaptError):
    """No usable split exists at a node; the caller should make a leaf."""


class IncompatibleModelError(ForestAdaptError):
    """Two model artifacts do not belong together (fingerprint mismatch)."""


class SolverConvergenceError(ForestAdaptError):
    """An optimizer hit its iteration budget before reaching tolerance."""
