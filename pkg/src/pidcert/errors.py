"""Exception types shared across the toolkit."""


class PidcertError(Exception):
    """Base class for all toolkit errors."""


class DegenerateTriple(PidcertError):
    """Eigenvalue triple violates a distinctness / nonzero precondition."""


class ParameterOutOfRange(PidcertError):
    """Design parameters outside the range the synthesis formula supports."""


class UnknownPlant(PidcertError):
    """Catalog lookup with a name that is not registered."""


class BadParams(PidcertError):
    """Plant parameters that are malformed or out of range."""


class NonFiniteDerivative(PidcertError):
    """Vector field returned NaN/Inf at a finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InsufficientData(PidcertError):
    """Not enough usable samples for a fit."""


class NotOnFacet(PidcertError):
    """Point handed to a facet-flux query does not lie on that facet."""


class ZeroIntegralGain(PidcertError):
    """Operation requires k_i != 0."""


class ShiftUndefined(PidcertError):
    """Equilibrium shift needs k_i != 0."""


class ComplexInitialState(PidcertError):
    """Modal initial condition has a non-negligible imaginary part."""


class BeyondBound(PidcertError):
    """Time argument past the guaranteed-existence bound."""


class SearchExhausted(PidcertError):
    """A search that is guaranteed to terminate hit its defensive cap.

    Seeing this means a defect (or an absurd input scale), not a normal
    failure mode.
    """
