"""Exception types raised by the toolkit.

Everything derives from :class:`MecalibError`, so callers (notably the CLI)
can catch one base class for all analysis-level failures while programming
mistakes keep surfacing as ordinary ``TypeError``/``ValueError``.
"""


class MecalibError(Exception):
    """Base class for all toolkit errors."""


class DataError(MecalibError):
    """Malformed input data: unparseable CSV cells, unknown or duplicate columns."""


class SingularDesignError(MecalibError):
    """Design matrix is rank deficient beyond the fixed relative tolerance."""


class InsufficientDataError(MecalibError):
    """Fewer rows than parameters; no degrees of freedom left."""


class InsufficientReplicatesError(MecalibError):
    """Estimating the error variance needs at least two replicate columns."""


class InfeasibleCorrectionError(MecalibError):
    """Assumed error variance is at least the conditional variance of the proxy."""


class BootstrapError(MecalibError):
    """Too many bootstrap replicates failed to produce an estimate."""


class SimulationError(MecalibError):
    """A simulation scenario had to abort (e.g. too many failed repetitions)."""
