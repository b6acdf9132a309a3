"""Exception hierarchy for thermolanczos.

All numerical/contract failures derive from ThermolanczosError so the CLI can
map them uniformly to exit code 3 with a machine-readable payload.
"""

from __future__ import annotations


class ThermolanczosError(Exception):
    """Base class for all library errors."""

    kind = "error"

    def payload(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DomainError(ThermolanczosError):
    """Evaluation point outside the model's validity domain."""

    kind = "domain"


class UnsupportedOrderError(ThermolanczosError):
    """Derivative or cumulant order above the implementation cap."""

    kind = "unsupported_order"


class ArityError(ThermolanczosError):
    """Not enough cumulants supplied for the requested order."""

    kind = "arity"


class InvalidModelError(ThermolanczosError):
    """Model violates a structural invariant (e.g. c2 <= 0)."""

    kind = "invalid_model"


class OutOfSpectrumError(ThermolanczosError):
    """Requested energy density outside the attainable range of F'."""

    kind = "out_of_spectrum"

    def __init__(self, message, attained_bound=None):
        super().__init__(message)
        self.attained_bound = attained_bound

    def payload(self) -> dict:
        out = super().payload()
        if self.attained_bound is not None:
            out["attained_bound"] = self.attained_bound
        return out


class IndefiniteMomentError(ThermolanczosError):
    """Moment sequence is not positive definite (some Hankel det <= 0)."""

    kind = "indefinite_moments"


class DegenerateModelError(ThermolanczosError):
    """F'' vanished where the hierarchy requires it positive."""

    kind = "degenerate_model"


class ConvergenceError(ThermolanczosError):
    """Iteration failed to reach tolerance; carries the best iterate."""

    kind = "convergence"

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SpectrumBoundError(ThermolanczosError):
    """Saddle window would exceed the range of F'."""

    kind = "spectrum_bound"


class BreakdownError(ThermolanczosError):
    """Toda marching produced a non-positive L."""

    kind = "breakdown"


class InvalidIntervalError(ThermolanczosError):
    """Equilibrium density went negative: wrong interval or multi-cut regime."""

    kind = "invalid_interval"


class NonIntegrableError(ThermolanczosError):
    """Overlap integral diverges (unbounded spectrum or vanishing overlap)."""

    kind = "non_integrable"


class PoleError(ThermolanczosError):
    """Continued fraction hit a pole on the real spectrum."""

    kind = "pole"


class BranchError(ThermolanczosError):
    """nth-root asymptotics requested on the support interval."""

    kind = "branch"


class QuadratureError(ThermolanczosError):
    """Adaptive quadrature failed to converge within the node cap."""

    kind = "quadrature"


class InternalConsistencyError(ThermolanczosError):
    """A structural identity that must hold failed; indicates a bug."""

    kind = "internal"
