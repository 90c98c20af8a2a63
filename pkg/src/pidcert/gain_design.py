"""Stabilizing PID parameter regions for globally Lipschitz second-order plants.

The closed-loop characteristic cubic of the PID loop is

    lambda^3 - kd*lambda^2 - kp*lambda - ki,

so a triple of desired poles ``(l1, l2, l3)`` maps to gains through the
Vieta relations

    kp = -(l1*l2 + l1*l3 + l2*l3),   ki = l1*l2*l3,   kd = l1 + l2 + l3.

A pole triple certifies global exponential regulation of every plant with
Lipschitz constant L once

    L * phi(l) * h(l) < 1,   all poles negative and pairwise distinct,

where

    phi = sqrt(((l3-l2)^2 + (l3-l1)^2 + l3^2*(l2-l1)^2)
               / ((l3-l1)^2 * (l2-l1)^2 * (l3-l2)^2)),
    h   = sqrt(3 + l1^2 + l2^2 + 1/l3^2).

phi -> 0 as l3 -> -inf with the other two poles fixed, which is what makes
the certified region unbounded and lets `sample_omega_lambda` always succeed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTriple, ParameterOutOfRange, SearchExhausted

# Failure tags carried by RegionReport.
NOT_NEGATIVE = "NotNegative"
NOT_DISTINCT = "NotDistinct"
PRODUCT_NOT_BELOW_ONE = "ProductNotBelowOne"

# Two eigenvalues count as coincident below this relative separation; a
# cubic root counts as real below the same relative imaginary residue.
DISTINCT_RTOL = 1e-9
REAL_ROOT_RTOL = 1e-9

_MAX_DOUBLINGS = 120  # |l3| <= 10 * 2**120 ~ 1.3e37 keeps phi's denominator finite


@dataclass(frozen=True)
class EigenTriple:
    """Design eigenvalues of the closed-loop cubic."""

    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self):
        for v in (self.lambda1, self.lambda2, self.lambda3):
            if not math.isfinite(v):
                raise ValueError(f"eigenvalues must be finite, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)


@dataclass(frozen=True)
class PidGains:
    """Proportional, integral and derivative gains."""

    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        for v in (self.kp, self.ki, self.kd):
            if not math.isfinite(v):
                raise ValueError(f"gains must be finite, got {v!r}")


@dataclass(frozen=True)
class LipschitzBound:
    """Global Lipschitz constant of the plant nonlinearity (Euclidean norms)."""

    L: float

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L >= 0.0):
            raise ValueError(f"Lipschitz bound must be finite and >= 0, got {self.L!r}")


def as_lipschitz(L) -> LipschitzBound:
    """Coerce a float or LipschitzBound to LipschitzBound."""
    if isinstance(L, LipschitzBound):
        return L
    return LipschitzBound(float(L))


@dataclass(frozen=True)
class RegionReport:
    """Membership diagnostics for the certified regions.

    ``phi_value`` / ``h_value`` / ``product_L_phi_h`` are NaN when the
    corresponding quantity is undefined for the tested triple (repeated
    eigenvalues, l3 = 0).  ``member`` is True exactly when
    ``failure_reasons`` is empty.
    """

    phi_value: float
    h_value: float
    product_L_phi_h: float
    member: bool
    failure_reasons: tuple[str, ...]


def _coincident(a: float, b: float) -> bool:
    return abs(a - b) <= DISTINCT_RTOL * max(1.0, abs(a), abs(b))


def _pairwise_distinct(lam: EigenTriple) -> bool:
    l1, l2, l3 = lam.as_tuple()
    return not (_coincident(l1, l2) or _coincident(l1, l3) or _coincident(l2, l3))


def phi(lam: EigenTriple) -> float:
    """Coupling-gain factor of the certificate; defined for distinct triples."""
    if not _pairwise_distinct(lam):
        raise DegenerateTriple(f"phi undefined for coincident eigenvalues {lam.as_tuple()}")
    l1, l2, l3 = lam.as_tuple()
    num = (l3 - l2) ** 2 + (l3 - l1) ** 2 + l3 * l3 * (l2 - l1) ** 2
    den = (l3 - l1) ** 2 * (l2 - l1) ** 2 * (l3 - l2) ** 2
    return math.sqrt(num / den)


def h(lam: EigenTriple) -> float:
    """Operator-norm bound of the mode-mixing matrix; needs l3 != 0."""
    if lam.lambda3 == 0.0:
        raise DegenerateTriple("h undefined for lambda3 = 0")
    l1, l2, l3 = lam.as_tuple()
    return math.sqrt(3.0 + l1 * l1 + l2 * l2 + 1.0 / (l3 * l3))


def in_omega_lambda(lam: EigenTriple, L) -> RegionReport:
    """Membership test in eigenvalue space for the ordered triple as given.

    Never raises: undefined phi/h show up as NaN alongside the failure tags.
    """
    L = as_lipschitz(L).L
    l1, l2, l3 = lam.as_tuple()
    failures = []
    if not (l1 < 0.0 and l2 < 0.0 and l3 < 0.0):
        failures.append(NOT_NEGATIVE)
    distinct = _pairwise_distinct(lam)
    if not distinct:
        failures.append(NOT_DISTINCT)

    phi_value = phi(lam) if distinct else math.nan
    h_value = h(lam) if l3 != 0.0 else math.nan
    product = L * phi_value * h_value
    # A NaN product means phi or h is undefined; the tags above already say why.
    if not math.isnan(product) and not (product < 1.0):
        failures.append(PRODUCT_NOT_BELOW_ONE)

    member = not failures
    return RegionReport(
        phi_value=phi_value,
        h_value=h_value,
        product_L_phi_h=product,
        member=member,
        failure_reasons=tuple(failures),
    )


def lambda_to_gains(lam: EigenTriple) -> PidGains:
    """Vieta map: gains whose closed-loop cubic has roots exactly ``lam``."""
    l1, l2, l3 = lam.as_tuple()
    kp = -(l1 * l2 + l1 * l3 + l2 * l3)
    ki = l1 * l2 * l3
    kd = l1 + l2 + l3
    return PidGains(kp=kp, ki=ki, kd=kd)


def _cubic(gains: PidGains, z: complex) -> complex:
    return ((z - gains.kd) * z - gains.kp) * z - gains.ki


def _cubic_deriv(gains: PidGains, z: complex) -> complex:
    return (3.0 * z - 2.0 * gains.kd) * z - gains.kp


def gains_to_lambda(gains: PidGains) -> tuple[complex, complex, complex]:
    """Roots (with multiplicity) of lambda^3 - kd lambda^2 - kp lambda - ki.

    Companion-matrix eigenvalues polished with up to 5 Newton iterations;
    returned sorted by (real part, imaginary part).
    """
    roots = np.roots([1.0, -gains.kd, -gains.kp, -gains.ki]).astype(complex)
    polished = []
    for z in roots:
        for _ in range(5):
            pz = _cubic(gains, z)
            dz = _cubic_deriv(gains, z)
            if dz == 0:
                break
            step = pz / dz
            z = z - step
            if abs(step) <= 1e-16 * max(1.0, abs(z)):
                break
        polished.append(z)
    polished.sort(key=lambda z: (z.real, z.imag))
    return tuple(polished)


def _real_roots_or_none(roots) -> tuple[float, float, float] | None:
    reals = []
    for z in roots:
        if abs(z.imag) > REAL_ROOT_RTOL * max(1.0, abs(z)):
            return None
        reals.append(z.real)
    return tuple(reals)


def eigen_assignment(roots: tuple[float, float, float]) -> EigenTriple:
    """Order three real poles so the certificate product phi*h is smallest.

    phi and h single out the third slot, so only the choice of l3 matters
    (swapping l1 and l2 changes neither).  The winning assignment is the one
    tried for region membership; by the limit construction it puts the most
    negative pole last.
    """
    best = None
    best_product = math.inf
    rs = sorted(roots)
    for k in range(3):
        others = [rs[i] for i in range(3) if i != k]
        cand = EigenTriple(others[0], others[1], rs[k])
        try:
            p = phi(cand) * h(cand)
        except DegenerateTriple:
            continue
        if p < best_product:
            best_product = p
            best = cand
    if best is None:
        # All assignments degenerate; return the sorted triple unjudged.
        return EigenTriple(rs[1], rs[2], rs[0])
    return best


def in_omega_k(gains: PidGains, L) -> RegionReport:
    """Membership test in gain space.

    Solves the cubic; the gains are members when all three roots are real
    (imaginary residue below tolerance), negative, pairwise distinct, and
    some ordering of them passes `in_omega_lambda`.  Roots are unordered, so
    the test uses the ordering with the smallest phi*h product.  Complex
    roots are tagged NotNegative (they are not negative reals).
    """
    L = as_lipschitz(L)
    roots = gains_to_lambda(gains)
    reals = _real_roots_or_none(roots)
    if reals is None:
        return RegionReport(
            phi_value=math.nan,
            h_value=math.nan,
            product_L_phi_h=math.nan,
            member=False,
            failure_reasons=(NOT_NEGATIVE,),
        )
    return in_omega_lambda(eigen_assignment(reals), L)


def omega_k_assignment(gains: PidGains, L) -> EigenTriple | None:
    """The certified eigenvalue ordering behind a passing `in_omega_k`, else None."""
    roots = gains_to_lambda(gains)
    reals = _real_roots_or_none(roots)
    if reals is None:
        return None
    lam = eigen_assignment(reals)
    return lam if in_omega_lambda(lam, L).member else None


def corollary_gains(epsilon: float, a: float, L) -> PidGains:
    """Closed-form member of the certified gain region.

    Requires 0 < epsilon < 1/4 and a > max(5L, 5); the result equals the
    Vieta image of the pole triple (-epsilon, -(1+epsilon), -a), i.e.

        kp = -(eps*(1+eps) + (1+2*eps)*a)
        ki = -eps*(1+eps)*a
        kd = -(a + 1 + 2*eps)
    """
    L = as_lipschitz(L).L
    if not (0.0 < epsilon < 0.25):
        raise ParameterOutOfRange(f"epsilon must lie in (0, 1/4), got {epsilon}")
    if not (a > max(5.0 * L, 5.0)):
        raise ParameterOutOfRange(f"a must exceed max(5L, 5) = {max(5.0 * L, 5.0)}, got {a}")
    return lambda_to_gains(EigenTriple(-epsilon, -(1.0 + epsilon), -a))


def sample_omega_lambda(L, seed: int) -> EigenTriple:
    """Find a certified triple by pushing the third pole toward -inf.

    l1, l2 are drawn uniformly from [-2, -0.01] (rejecting coincident pairs);
    l3 starts at -10 and doubles until the product drops below 1.  The limit
    argument guarantees termination; the doubling cap only guards floats.
    """
    L = as_lipschitz(L)
    rng = np.random.default_rng(seed)
    while True:
        l1, l2 = rng.uniform(-2.0, -0.01, size=2)
        if not _coincident(l1, l2):
            break
    l3 = -10.0
    for _ in range(_MAX_DOUBLINGS):
        cand = EigenTriple(float(l1), float(l2), float(l3))
        if in_omega_lambda(cand, L).member:
            return cand
        l3 *= 2.0
    raise SearchExhausted(
        f"no certified triple found for L={L.L} within {_MAX_DOUBLINGS} doublings"
    )


def vieta_jacobian_det(lam: EigenTriple) -> float:
    """Jacobian determinant of the Vieta map: (l1-l2)(l1-l3)(l3-l2).

    Nonzero on distinct triples, which makes the map locally invertible and
    the gain-space region open.
    """
    l1, l2, l3 = lam.as_tuple()
    return (l1 - l2) * (l1 - l3) * (l3 - l2)
