"""Exception types shared across the package."""


class EtsimError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(EtsimError):
    """Operands live on different spaces or have incompatible shapes."""


class TruncationTooSmall(EtsimError):
    """Fock cutoff too small for the requested displacement amplitude."""


class TruncationLeak(EtsimError):
    """Population reached the top Fock level during propagation."""


class StepSizeUnderflow(EtsimError):
    """Adaptive integrator could not meet the tolerance with a sane step."""


class NoDissipation(EtsimError):
    """Steady state requested for a purely unitary generator."""


class DegenerateModel(EtsimError):
    """Derived quantity undefined for the given parameters (e.g. g = 0)."""


class InvalidRate(EtsimError):
    """Rate formula evaluated outside its domain (e.g. gamma <= 0)."""


class FitDiverged(EtsimError):
    """Nonlinear fit failed to converge; diagnostics attached."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientCoverage(EtsimError):
    """Trajectory does not cover the requested integration window."""


class BandExcludesResonance(EtsimError):
    """Bath discretization band does not contain the system frequency."""


class DimensionCap(EtsimError):
    """Composite system+bath dimension exceeds the configured cap."""


class RecurrenceHorizonExceeded(EtsimError):
    """Requested evolution time exceeds the discretized-bath validity window."""


class ZeroDetuning(EtsimError):
    """Displacement pulse requires a nonzero sideband detuning."""


class ConfigError(EtsimError):
    """Malformed or incomplete scan/CLI configuration."""
