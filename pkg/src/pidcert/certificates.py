"""Numerical certificates for the three closed-loop results.

1. Regulation certificate: the modal change of coordinates diagonalizes the
   closed-loop companion matrix, and a weighted quadratic Lyapunov function
   decreases at a rate bounded by ``l1*l2*l3*(1 - L*phi*h)`` whenever the
   pole triple is certified for the plant's Lipschitz bound.
2. Escape certificate: the superlinear loop leaves an invariant cone that
   forces finite escape time, with an explicit upper bound on the escape
   time and explicit lower envelopes for the velocity-like state and the
   tracking error.
3. Third-order obstruction: with feedthrough f = c*x3 (0 < c <= L) the
   closed loop is linear with eigenvalue real parts summing to c > 0, so an
   unstable mode always exists; an explicit two-mode initial condition makes
   the tracking error exceed any bound.

Everything here is sampling/arithmetic verification, not symbolic proof.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .closed_loop import SecondOrderLoop, SuperlinearLoop, Trajectory, superlinear_field
from .errors import (
    BeyondBound,
    ComplexInitialState,
    DegenerateTriple,
    InsufficientData,
    NotOnFacet,
    ParameterOutOfRange,
    PidcertError,
    SearchExhausted,
    ShiftUndefined,
    ZeroIntegralGain,
)
from .gain_design import (
    DISTINCT_RTOL,
    EigenTriple,
    PidGains,
    as_lipschitz,
    h,
    lambda_to_gains,
    phi,
)

Array = np.ndarray

_IMAG_RESIDUE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# Modal transform and Lyapunov certificate
# ---------------------------------------------------------------------------


def companion_core(gains: PidGains) -> Array:
    """3x3 scalar core of the closed-loop companion matrix."""
    return np.array(
        [
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [gains.ki, gains.kp, gains.kd],
        ]
    )


@dataclass(frozen=True)
class ModalTransform:
    """Diagonalizing change of coordinates for a distinct pole triple.

    All blocks are scalar multiples of the n x n identity, so the transform
    stores 3x3 (and 2x3) scalar cores; full matrices are Kronecker products
    with the identity and are materialized on demand.
    """

    lam: EigenTriple
    dim_n: int
    P_core: Array
    P_prime_core: Array
    P_inv_core: Array

    def _kron(self, core: Array) -> Array:
        return np.kron(core, np.eye(self.dim_n))

    @property
    def P(self) -> Array:
        return self._kron(self.P_core)

    @property
    def P_prime(self) -> Array:
        return self._kron(self.P_prime_core)

    @property
    def P_inverse(self) -> Array:
        return self._kron(self.P_inv_core)

    @property
    def J(self) -> Array:
        return self._kron(np.diag(self.lam.as_tuple()))

    def p_prime_norm(self) -> float:
        # ||kron(M, I)||_2 = ||M||_2
        return float(np.linalg.norm(self.P_prime_core, 2))


def build_modal_transform(lam: EigenTriple, n: int) -> ModalTransform:
    """Construct P, P', J and the closed-form inverse for a pole triple.

    The columns of P are the companion-matrix eigenvectors (1, l, l^2)
    scaled by (1/l1, 1/l2, 1/l3^2); the inverse therefore comes out in
    closed form from Lagrange interpolation coefficients, row-scaled the
    same way.  The construction is validated against P*Pinv = I and
    P*J*Pinv = A before returning.
    """
    l1, l2, l3 = lam.as_tuple()
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    for a, b in ((l1, l2), (l1, l3), (l2, l3)):
        if abs(a - b) <= DISTINCT_RTOL * max(1.0, abs(a), abs(b)):
            raise DegenerateTriple(f"poles must be pairwise distinct, got {lam.as_tuple()}")
    if l1 == 0.0 or l2 == 0.0 or l3 == 0.0:
        raise DegenerateTriple(f"poles must be nonzero, got {lam.as_tuple()}")

    P_core = np.array(
        [
            [1.0 / l1, 1.0 / l2, 1.0 / (l3 * l3)],
            [1.0, 1.0, 1.0 / l3],
            [l1, l2, 1.0],
        ]
    )
    P_prime_core = P_core[1:, :].copy()

    d1 = (l1 - l2) * (l1 - l3)
    d2 = (l2 - l1) * (l2 - l3)
    d3 = (l3 - l1) * (l3 - l2)
    # Rows are Lagrange coefficient rows of the Vandermonde inverse, scaled
    # by the reciprocal column scalings of P.
    P_inv_core = np.array(
        [
            [l1 * l2 * l3 / d1, -l1 * (l2 + l3) / d1, l1 / d1],
            [l2 * l1 * l3 / d2, -l2 * (l1 + l3) / d2, l2 / d2],
            [l3 * l3 * l1 * l2 / d3, -l3 * l3 * (l1 + l2) / d3, l3 * l3 / d3],
        ]
    )

    transform = ModalTransform(
        lam=lam, dim_n=n, P_core=P_core, P_prime_core=P_prime_core, P_inv_core=P_inv_core
    )

    residual = np.linalg.norm(P_core @ P_inv_core - np.eye(3))
    A_core = companion_core(lambda_to_gains(lam))
    recon = np.linalg.norm(P_core @ np.diag(lam.as_tuple()) @ P_inv_core - A_core)
    if residual > 1e-9 * 3 or recon > 1e-9 * max(1.0, np.linalg.norm(A_core)):
        raise PidcertError(
            f"modal transform failed validation for {lam.as_tuple()}: "
            f"inverse residual {residual:.3e}, reconstruction residual {recon:.3e}"
        )
    return transform


def lyapunov_value(Z, lam: EigenTriple) -> float:
    """Weighted modal energy 0.5*(l2*l3*||z0||^2 + l1*l3*||z1||^2 + l1*l2*||z2||^2).

    Positive definite when all poles are negative.
    """
    l1, l2, l3 = lam.as_tuple()
    Z = np.asarray(Z, dtype=float)
    blocks = Z.reshape(3, -1)
    return 0.5 * (
        l2 * l3 * float(blocks[0] @ blocks[0])
        + l1 * l3 * float(blocks[1] @ blocks[1])
        + l1 * l2 * float(blocks[2] @ blocks[2])
    )


def physical_to_proof(loop: SecondOrderLoop, state) -> Array:
    """Shift physical state (y0, x1, x2) to the error coordinates whose
    origin is the closed-loop equilibrium; needs ki != 0."""
    if loop.gains.ki == 0.0:
        raise ShiftUndefined("coordinate shift requires ki != 0")
    n = loop.plant.dim_n
    state = np.asarray(state, dtype=float)
    f_star = np.asarray(loop.plant.evaluate(loop.setpoint, np.zeros(n)), dtype=float)
    return np.concatenate(
        [
            state[:n] + f_star / loop.gains.ki,
            state[n : 2 * n] - loop.setpoint,
            state[2 * n :],
        ]
    )


def modal_coordinates(transform: ModalTransform, proof_state) -> Array:
    """Map shifted error coordinates to modal coordinates Z = Pinv * Y."""
    Y = np.asarray(proof_state, dtype=float).reshape(3, transform.dim_n)
    return (transform.P_inv_core @ Y).ravel()


def lyapunov_derivative_along(
    loop: SecondOrderLoop, transform: ModalTransform, physical_state
) -> float:
    """Analytic dV/dt at a physical state, via the modal vector field.

    Equals l1*l2*l3*(||Z||^2 + coupling terms in the recentred nonlinearity);
    with a zero plant it reduces to l1*l2*l3*||Z||^2 exactly.
    """
    l1, l2, l3 = transform.lam.as_tuple()
    n = loop.plant.dim_n
    Y = physical_to_proof(loop, physical_state)
    Zb = transform.P_inv_core @ Y.reshape(3, n)
    f_star = np.asarray(loop.plant.evaluate(loop.setpoint, np.zeros(n)), dtype=float)
    state = np.asarray(physical_state, dtype=float)
    g_val = np.asarray(
        loop.plant.evaluate(state[n : 2 * n], state[2 * n :]), dtype=float
    ) - f_star

    norm_sq = float(np.sum(Zb * Zb))
    coupling = (
        float(g_val @ Zb[0]) / ((l3 - l1) * (l2 - l1))
        + float(g_val @ Zb[1]) / ((l3 - l2) * (l1 - l2))
        + l3 * float(g_val @ Zb[2]) / ((l3 - l1) * (l3 - l2))
    )
    return l1 * l2 * l3 * (norm_sq + coupling)


def vdot_margin(lam: EigenTriple, L) -> float:
    """Certified decay coefficient l1*l2*l3*(1 - L*phi*h).

    Negative exactly when the certificate is conclusive for this L.
    """
    L = as_lipschitz(L).L
    l1, l2, l3 = lam.as_tuple()
    return l1 * l2 * l3 * (1.0 - L * phi(lam) * h(lam))


@dataclass(frozen=True)
class LyapunovCertificate:
    """Pole triple, Lipschitz bound and the decay margin they certify."""

    lam: EigenTriple
    L: float
    margin: float

    @property
    def conclusive(self) -> bool:
        return self.margin < 0.0


def lyapunov_certificate(lam: EigenTriple, L) -> LyapunovCertificate:
    """Bundle the decay margin with its inputs; conclusive iff margin < 0."""
    L = as_lipschitz(L).L
    return LyapunovCertificate(lam=lam, L=L, margin=vdot_margin(lam, L))


def lyapunov_series(loop: SecondOrderLoop, transform: ModalTransform, traj: Trajectory) -> Array:
    """V(Z(t)) at every recorded sample of a trajectory."""
    n = loop.plant.dim_n
    f_star = np.asarray(loop.plant.evaluate(loop.setpoint, np.zeros(n)), dtype=float)
    if loop.gains.ki == 0.0:
        raise ShiftUndefined("coordinate shift requires ki != 0")
    shift = np.concatenate([f_star / loop.gains.ki, -loop.setpoint, np.zeros(n)])
    Y = traj.states + shift
    Zb = np.einsum("ij,mjn->min", transform.P_inv_core, Y.reshape(len(Y), 3, n))
    l1, l2, l3 = transform.lam.as_tuple()
    weights = np.array([l2 * l3, l1 * l3, l1 * l2])
    return 0.5 * np.einsum("j,mjn->m", weights, Zb * Zb)


def exponential_rate_fit(traj: Trajectory, equilibrium) -> float:
    """Least-squares decay rate of log||state - equilibrium|| on the final
    half (by time) of a trajectory; negative means decay.

    Samples already at rounding level (norm <= 100 machine epsilons) are
    dropped; fewer than 10 usable samples raises InsufficientData.
    """
    eq = np.asarray(equilibrium, dtype=float)
    norms = np.linalg.norm(traj.states - eq, axis=1)
    t_mid = traj.times[-1] / 2.0
    mask = (traj.times >= t_mid) & (norms > 100.0 * np.finfo(float).eps)
    if int(mask.sum()) < 10:
        raise InsufficientData(f"only {int(mask.sum())} usable samples in the fit window")
    coeffs = np.polyfit(traj.times[mask], np.log(norms[mask]), 1)
    return float(coeffs[0])


# ---------------------------------------------------------------------------
# Invariant cone and finite escape
# ---------------------------------------------------------------------------

FACET_NORMALS = {
    "S1": np.array([1.0, 0.0, 0.0]),
    "S2": np.array([-1.0, 1.0, 0.0]),
    "S3": np.array([0.0, -1.0, 1.0]),
}


@dataclass(frozen=True)
class ConeCL:
    """Closed cone {y : y2 - 1 >= y1 >= y0 + L >= L} with vertex (0, L, L+1).

    The inward facet normals are (1,0,0), (-1,1,0), (0,-1,1) for the faces
    y0 = 0, y1 = y0 + L and y2 - 1 = y1 respectively.
    """

    L_cone: float

    def __post_init__(self):
        if not (self.L_cone > 0.0 and math.isfinite(self.L_cone)):
            raise ValueError(f"cone parameter must be positive and finite, got {self.L_cone}")

    @property
    def vertex(self) -> Array:
        return np.array([0.0, self.L_cone, self.L_cone + 1.0])


def cone_contains(cone: ConeCL, y) -> bool:
    """Exact-comparison membership in the cone (no tolerance)."""
    y0, y1, y2 = np.asarray(y, dtype=float)
    L = cone.L_cone
    return bool(y2 - 1.0 >= y1 and y1 >= y0 + L and y0 + L >= L)


def _on_facet(cone: ConeCL, y, facet: str) -> bool:
    y0, y1, y2 = np.asarray(y, dtype=float)
    if not cone_contains(cone, y):
        return False
    if facet == "S1":
        return y0 == 0.0
    if facet == "S2":
        return y1 == y0 + cone.L_cone
    if facet == "S3":
        return y2 - 1.0 == y1
    raise ValueError(f"unknown facet {facet!r}")


def cone_facet_flux(loop: SuperlinearLoop, cone: ConeCL, y, facet: str) -> float:
    """Inner product of the facet's inward normal with the loop field at y.

    Positive flux on the whole boundary certifies invariance.  On S1 the
    flux equals y1 (>= L on the cone); on S2 it equals y2 - y1, which is
    >= 1 on the cone with equality on the edge shared with S3.

    Facet membership uses exact comparisons (matching the cone test), so
    boundary points must be built as exact float identities, e.g.
    y1 = y2 - 1.0 for S3 rather than y2 = y1 + 1.0.
    """
    if facet not in FACET_NORMALS:
        raise ValueError(f"unknown facet {facet!r}; choices: S1, S2, S3")
    if not _on_facet(cone, y, facet):
        raise NotOnFacet(f"point {np.asarray(y)} is not on facet {facet}")
    return float(FACET_NORMALS[facet] @ superlinear_field(loop, np.asarray(y, dtype=float)))


def _cone_samples(cone_L: float, count: int) -> Array:
    """Deterministic quasi-random cone points spanning offsets 0 .. ~1e7."""
    from scipy.stats import qmc

    u = qmc.Halton(d=3, scramble=False).random(count)
    offsets = np.power(10.0, 7.0 * u) - 1.0
    y0 = offsets[:, 0]
    y1 = y0 + cone_L + offsets[:, 1]
    y2 = y1 + 1.0 + offsets[:, 2]
    return np.column_stack([y0, y1, y2])


def _growth_inequality_margins(
    loop: SuperlinearLoop, points: Array
) -> tuple[Array, Array]:
    """Margins of the two cone growth inequalities at sample points.

    Lower margin: field_y2 - (y2 + y2^(1+eps)/2) >= 0 forces escape-rate
    growth; upper margin: (3*y2^2)^((1+eps)/2) - field_y2 >= 0 caps the
    field so the error integral diverges for eps <= 1.
    """
    g = loop.gains
    eps = loop.epsilon
    y0, y1, y2 = points[:, 0], points[:, 1], points[:, 2]
    power = ((y1 + loop.setpoint) ** 2 + y2 * y2) ** (0.5 * (1.0 + eps))
    field_y2 = power + g.ki * y0 + g.kp * y1 + g.kd * y2
    lower = field_y2 - (y2 + 0.5 * y2 ** (1.0 + eps))
    upper = (3.0 * y2 * y2) ** (0.5 * (1.0 + eps)) - field_y2
    return lower, upper


def pick_cone_parameter(
    gains: PidGains, epsilon: float, setpoint: float, samples: int = 10_000
) -> float:
    """Cone parameter for which both growth inequalities hold on the cone.

    Starts from the analytic seed max((2*(|ki|+|kp|+|kd|+1))^(1/eps) - 1,
    2*|setpoint|, 1) and doubles until every quasi-random cone sample has
    nonnegative margins for both inequalities.  Both hold everywhere for
    large parameters, so the doubling terminates.
    """
    if epsilon <= 0:
        raise ParameterOutOfRange(f"epsilon must be positive, got {epsilon}")
    gain_sum = abs(gains.ki) + abs(gains.kp) + abs(gains.kd) + 1.0
    seed = max((2.0 * gain_sum) ** (1.0 / epsilon) - 1.0, 2.0 * abs(setpoint), 1.0)
    if not math.isfinite(seed) or seed > 1e100:
        raise ParameterOutOfRange(
            f"cone seed {seed:.3g} exceeds float range; epsilon is too small for these gains"
        )
    loop = SuperlinearLoop(epsilon=epsilon, gains=gains, setpoint=setpoint)
    L_cone = seed
    for _ in range(60):
        points = _cone_samples(L_cone, samples)
        lower, upper = _growth_inequality_margins(loop, points)
        if bool((lower >= 0.0).all() and (upper >= 0.0).all()):
            return L_cone
        L_cone *= 2.0
    raise SearchExhausted(
        f"no verified cone parameter within 60 doublings from seed {seed:.3g}"
    )


def escape_time_bound(epsilon: float, L_cone: float) -> float:
    """Upper bound 2 / (eps * (L_cone + 1)^eps) on the escape time from the
    cone vertex."""
    if epsilon <= 0:
        raise ParameterOutOfRange(f"epsilon must be positive, got {epsilon}")
    if L_cone <= 0:
        raise ParameterOutOfRange(f"cone parameter must be positive, got {L_cone}")
    return 2.0 / (epsilon * (L_cone + 1.0) ** epsilon)


def comparison_lower_bound(epsilon: float, L_cone: float, t: float) -> float:
    """Lower envelope ((L+1)^(-eps) - t*eps/2)^(-1/eps) for the velocity-like
    state along the escaping trajectory; valid for t below the escape bound."""
    bound = escape_time_bound(epsilon, L_cone)
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t >= bound:
        raise BeyondBound(f"t = {t} is not below the escape-time bound {bound}")
    if t == 0.0:
        return L_cone + 1.0
    return ((L_cone + 1.0) ** (-epsilon) - 0.5 * t * epsilon) ** (-1.0 / epsilon)


def escape_error_lower_bound(L_cone: float, t: float) -> float:
    """Linear error floor L + (L+1)*t along the escaping trajectory."""
    return L_cone + (L_cone + 1.0) * t


def error_divergence_constant(epsilon: float) -> float:
    """Constant 3^(-(1+eps)/2) in the error-vs-velocity slope bound.

    Reconstructed from the upper growth inequality: on the cone
    de/d(y2) >= const / y2^eps, whose integral diverges for eps <= 1.
    """
    return 3.0 ** (-0.5 * (1.0 + epsilon))


# ---------------------------------------------------------------------------
# Third-order spectral obstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralReport:
    """Eigenvalue diagnostics of the third-order closed loop."""

    c: float
    eigenvalues: tuple[complex, ...]
    real_part_sum: float
    max_real_part: float
    distinct: bool
    multiple_root_set: tuple[complex, ...]


def third_order_char_poly(gains: PidGains, c: float, z: complex) -> complex:
    """Characteristic quartic z^4 - c z^3 - kd z^2 - kp z - ki."""
    return (((z - c) * z - gains.kd) * z - gains.kp) * z - gains.ki


def _polish_roots(coeffs: list[float], roots) -> list[complex]:
    deriv = np.polyder(np.asarray(coeffs))
    polished = []
    for z in roots:
        z = complex(z)
        for _ in range(5):
            pz = np.polyval(coeffs, z)
            dz = np.polyval(deriv, z)
            if dz == 0:
                break
            step = pz / dz
            z = z - step
            if abs(step) <= 1e-16 * max(1.0, abs(z)):
                break
        polished.append(z)
    polished.sort(key=lambda w: (w.real, w.imag))
    return polished


def _pairwise_distinct_complex(roots) -> bool:
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) <= DISTINCT_RTOL * max(
                1.0, abs(roots[i]), abs(roots[j])
            ):
                return False
    return True


def multiple_root_candidates(gains: PidGains) -> tuple[complex, ...]:
    """Roots of w^4 + kd w^2 + 2 kp w + 3 ki = 0.

    Eliminating the feedthrough coefficient between the quartic and its
    derivative shows any multiple root must satisfy this equation, which is
    independent of the coefficient; at most 4 candidates exist.
    """
    coeffs = [1.0, 0.0, gains.kd, 2.0 * gains.kp, 3.0 * gains.ki]
    return tuple(_polish_roots(coeffs, np.roots(coeffs)))


def spectral_report(gains: PidGains, c: float) -> SpectralReport:
    """Roots of the third-order characteristic quartic plus the trace identity.

    The real parts always sum to c, so c > 0 forces an eigenvalue in the
    open right half plane regardless of the gains.
    """
    coeffs = [1.0, -c, -gains.kd, -gains.kp, -gains.ki]
    roots = _polish_roots(coeffs, np.roots(coeffs))
    return SpectralReport(
        c=c,
        eigenvalues=tuple(roots),
        real_part_sum=float(sum(z.real for z in roots)),
        max_real_part=float(max(z.real for z in roots)),
        distinct=_pairwise_distinct_complex(roots),
        multiple_root_set=multiple_root_candidates(gains),
    )


def _residual_scale(gains: PidGains, c: float, w: complex) -> float:
    aw = abs(w)
    return (
        max(1.0, aw) ** 4
        + abs(c) * aw**3
        + abs(gains.kd) * aw**2
        + abs(gains.kp) * aw
        + abs(gains.ki)
    )


def select_feedthrough(gains: PidGains, L) -> float:
    """Pick c in (0, L] making the characteristic quartic have 4 distinct roots.

    A candidate c produces a multiple root only if one of the (at most 4)
    multiple-root candidates also solves the quartic; the deterministic
    sequence L, L/2, L/3, ... therefore succeeds within 5 tries.  Requires
    ki != 0 (with ki = 0 use `select_feedthrough_reduced`).
    """
    L = as_lipschitz(L).L
    if gains.ki == 0.0:
        raise ZeroIntegralGain("distinct-root selection requires ki != 0")
    if L <= 0.0:
        raise ParameterOutOfRange(f"need a positive Lipschitz bound, got {L}")
    candidates_R = multiple_root_candidates(gains)
    for k in range(1, 9):
        c = L / k
        rep = spectral_report(gains, c)
        residual_ok = all(
            abs(third_order_char_poly(gains, c, w)) > 1e-9 * _residual_scale(gains, c, w)
            for w in candidates_R
        )
        if rep.distinct and residual_ok:
            return c
    raise SearchExhausted("no feedthrough coefficient with distinct roots in 8 candidates")


def modal_initial_state(roots, z0) -> np.ndarray:
    """Map modal weights z0 to state space through the Vandermonde matrix
    whose columns are (1, l, l^2, ...) per root."""
    roots = [complex(r) for r in roots]
    m = len(roots)
    z0 = np.asarray(z0, dtype=complex)
    if z0.shape != (m,):
        raise ValueError(f"need {m} modal weights, got shape {z0.shape}")
    P = np.vander(np.array(roots), N=m, increasing=True).T
    return P @ z0


def third_order_initial_state(gains: PidGains, c: float) -> Array:
    """State-space image of the modal weights (0, 0, -1, 1) on the sorted roots.

    Real whenever the two dominant roots are real; a conjugate dominant pair
    makes it purely imaginary, reported as ComplexInitialState (use
    `divergence_plan` for the real fallback construction).
    """
    rep = spectral_report(gains, c)
    y0 = modal_initial_state(rep.eigenvalues, [0.0, 0.0, -1.0, 1.0])
    norm = np.linalg.norm(y0)
    if norm == 0.0:
        return np.zeros(4)
    if np.linalg.norm(y0.imag) > 1e-6 * norm:
        raise ComplexInitialState(
            "dominant modes are complex; the two-mode start is not a real state"
        )
    return np.asarray(y0.real, dtype=float)


def two_mode_error(lambda_a: complex, lambda_b: complex, t: float) -> complex:
    """Closed-form error lambda_b*exp(lambda_b*t) - lambda_a*exp(lambda_a*t)
    of the two-mode construction."""
    return lambda_b * cmath.exp(lambda_b * t) - lambda_a * cmath.exp(lambda_a * t)


@dataclass(frozen=True)
class DivergencePlan:
    """Real initial condition plus closed-form error for a divergence demo.

    ``error_row`` is the state index carrying the tracking error (1 for the
    4-state loop, 0 for the reduced 3-state loop).  The closed form is
    sum_k weights[k] * modes[k]^error_row * exp(modes[k] * t); its imaginary
    part is zero up to rounding by construction.
    """

    c: float
    roots: tuple[complex, ...]
    modes: tuple[complex, ...]
    weights: tuple[complex, ...]
    initial_state: Array
    error_row: int
    used_fallback: bool

    def closed_form_error(self, t: float) -> complex:
        return sum(
            w * (m**self.error_row) * cmath.exp(m * t)
            for w, m in zip(self.weights, self.modes)
        )

    def closed_form_error_at(self, times) -> Array:
        out = np.zeros(len(times), dtype=complex)
        for w, m in zip(self.weights, self.modes):
            out += w * (m**self.error_row) * np.exp(m * np.asarray(times, dtype=complex))
        return out


def _is_real(z: complex) -> bool:
    return abs(z.imag) <= 1e-9 * max(1.0, abs(z))


def _plan_from_modes(c, roots, modes, weights, error_row, used_fallback) -> DivergencePlan:
    m = len(roots)
    z0 = np.zeros(m, dtype=complex)
    for mode, w in zip(modes, weights):
        z0[list(roots).index(mode)] += w
    y0 = modal_initial_state(roots, z0)
    norm = np.linalg.norm(y0)
    if norm > 0 and np.linalg.norm(y0.imag) > _IMAG_RESIDUE_RTOL * norm:
        raise ComplexInitialState("constructed initial state has imaginary residue")
    return DivergencePlan(
        c=c,
        roots=tuple(roots),
        modes=tuple(modes),
        weights=tuple(weights),
        initial_state=np.asarray(y0.real, dtype=float),
        error_row=error_row,
        used_fallback=used_fallback,
    )


def _divergent_plan(c: float, roots: tuple[complex, ...], error_row: int) -> DivergencePlan:
    """Two-mode real construction with the dominant root always excited.

    Preference order: the plain two-dominant-modes start when both are real;
    otherwise a conjugate-pair start (imaginary-part combination) when the
    dominant root is complex; otherwise the dominant real root paired with
    the next real root (or alone, for the cubic with a single real root).
    """
    top = roots[-1]
    second = roots[-2]
    if _is_real(top) and _is_real(second):
        return _plan_from_modes(
            c, roots, (second, top), (-1.0 + 0j, 1.0 + 0j), error_row, used_fallback=False
        )
    if not _is_real(top):
        conj_target = top.conjugate()
        partner = min(
            (r for r in roots if r is not top),
            key=lambda r: abs(r - conj_target),
        )
        # weights give Im(top^row * exp(top*t)) as the error closed form
        return _plan_from_modes(
            c, roots, (partner, top), (0.5j, -0.5j), error_row, used_fallback=True
        )
    real_others = [r for r in roots[:-1] if _is_real(r)]
    if real_others:
        partner = max(real_others, key=lambda r: r.real)
        return _plan_from_modes(
            c, roots, (partner, top), (-1.0 + 0j, 1.0 + 0j), error_row, used_fallback=True
        )
    return _plan_from_modes(c, roots, (top,), (1.0 + 0j,), error_row, used_fallback=True)


def divergence_plan(gains: PidGains, c: float) -> DivergencePlan:
    """Real divergent start for the 4-state third-order loop.

    The error closed form reduces to the two-mode expression
    l3*exp(l3*t) - l2*exp(l2*t) when the two dominant roots are real; with a
    conjugate dominant pair it is the (real) imaginary-part combination of
    the same two modes.
    """
    rep = spectral_report(gains, c)
    if not rep.distinct:
        raise DegenerateTriple("characteristic roots must be distinct; pick c accordingly")
    return _divergent_plan(c, rep.eigenvalues, error_row=1)


# --- reduced (ki = 0) variant ----------------------------------------------


def reduced_char_poly(gains: PidGains, c: float, z: complex) -> complex:
    """Characteristic cubic z^3 - c z^2 - kd z - kp of the 3-state loop."""
    return ((z - c) * z - gains.kd) * z - gains.kp


def reduced_multiple_root_candidates(gains: PidGains) -> tuple[complex, ...]:
    """Roots of w^3 + kd w + 2 kp = 0 (feedthrough-independent, at most 3)."""
    coeffs = [1.0, 0.0, gains.kd, 2.0 * gains.kp]
    return tuple(_polish_roots(coeffs, np.roots(coeffs)))


def reduced_spectral_report(gains: PidGains, c: float) -> SpectralReport:
    """Spectral diagnostics of the reduced cubic; real parts still sum to c."""
    coeffs = [1.0, -c, -gains.kd, -gains.kp]
    roots = _polish_roots(coeffs, np.roots(coeffs))
    return SpectralReport(
        c=c,
        eigenvalues=tuple(roots),
        real_part_sum=float(sum(z.real for z in roots)),
        max_real_part=float(max(z.real for z in roots)),
        distinct=_pairwise_distinct_complex(roots),
        multiple_root_set=reduced_multiple_root_candidates(gains),
    )


def select_feedthrough_reduced(gains: PidGains, L) -> float:
    """Distinct-root feedthrough selection for the reduced cubic.

    With kp = kd = 0 the cubic is z^2*(z - c): a double root at zero for
    every c, so no selection exists and the caller must fall back to the
    explicit single-mode solution.
    """
    L = as_lipschitz(L).L
    if L <= 0.0:
        raise ParameterOutOfRange(f"need a positive Lipschitz bound, got {L}")
    if gains.kp == 0.0 and gains.kd == 0.0:
        raise ParameterOutOfRange("kp = kd = 0 leaves a double root at 0 for every c")
    for k in range(1, 9):
        c = L / k
        rep = reduced_spectral_report(gains, c)
        residual_ok = all(
            abs(reduced_char_poly(gains, c, w))
            > 1e-9 * (max(1.0, abs(w)) ** 3 + abs(c) * abs(w) ** 2 + abs(gains.kd) * abs(w) + abs(gains.kp))
            for w in rep.multiple_root_set
        )
        if rep.distinct and residual_ok:
            return c
    raise SearchExhausted("no reduced feedthrough with distinct roots in 8 candidates")


def reduced_divergence_plan(gains: PidGains, c: float) -> DivergencePlan:
    """Real divergent start for the reduced 3-state loop (error is state 0)."""
    rep = reduced_spectral_report(gains, c)
    if not rep.distinct:
        raise DegenerateTriple("characteristic roots must be distinct; pick c accordingly")
    return _divergent_plan(c, rep.eigenvalues, error_row=0)
