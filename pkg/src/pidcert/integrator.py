"""Fixed and adaptive Runge-Kutta integration with outcome classification.

Two steppers:

* ``rk4_fixed`` -- classic 4th-order method with a constant step, used for
  order-of-accuracy checks and as the inner stepper of escape refinement.
* ``rk45_adaptive`` -- Dormand-Prince 5(4) embedded pair (FSAL), PI-free
  step control with the usual 0.9 safety factor.

Outcome rules applied to every accepted step:

* ``Converged`` once the deviation norm stays below ``converge_norm`` for
  ``converge_window`` seconds.  The deviation is measured from a supplied
  equilibrium when one is known, else from the origin.
* ``FiniteEscape`` when the state norm crosses ``blowup_norm``.  The crossing
  is pinned by bisection on the step size; the reported bracket is the
  refined crossing interval with its right edge padded to the reporting
  tolerance (1e-6 relative), so it also covers the short tail between
  threshold crossing and actual escape.
* ``Diverged`` when the optional ``diverge_norm`` is crossed (used by the
  linear-growth demos, where crossing a large norm is not a finite escape).
* ``MaxTimeReached`` otherwise.

All arithmetic is deterministic: identical inputs give bit-identical
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .closed_loop import (
    Converged,
    Diverged,
    FiniteEscape,
    MaxTimeReached,
    Trajectory,
)
from .errors import NonFiniteDerivative, PidcertError

Array = np.ndarray
Field = Callable[[Array], Array]

_MAX_STEPS = 500_000
_ESCAPE_REFINE_REL = 1e-7  # internal bracket width before padding
_ESCAPE_PAD_REL = 5e-7  # right padding; total width stays under 1e-6 relative


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45_adaptive"  # or "rk4_fixed"
    step: float = 1e-3  # fixed step, or initial step for the adaptive method
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    t_max: float = 100.0
    blowup_norm: float = 1e12
    converge_norm: float = 1e-9
    converge_window: float = 5.0
    record_stride: int = 1
    diverge_norm: float | None = None

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.step > 0 and self.rel_tol > 0 and self.abs_tol > 0 and self.t_max > 0):
            raise ValueError("step, tolerances and t_max must be positive")
        if not (self.blowup_norm > self.converge_norm):
            raise ValueError("blowup_norm must exceed converge_norm")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


# Dormand-Prince 5(4) tableau.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_ERR = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def rk4_step(field: Field, y: Array, h: float) -> Array:
    k1 = field(y)
    k2 = field(y + 0.5 * h * k1)
    k3 = field(y + 0.5 * h * k2)
    k4 = field(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _finite(arr: Array) -> bool:
    return bool(np.isfinite(arr).all())


class _Recorder:
    def __init__(self, stride: int, y0: Array):
        self.stride = stride
        self.times = [0.0]
        self.states = [np.array(y0, dtype=float)]
        self._accepted = 0

    def on_accept(self, t: float, y: Array):
        self._accepted += 1
        if self._accepted % self.stride == 0:
            self.times.append(t)
            self.states.append(np.array(y))

    def finalize(self, t: float, y: Array):
        if self.times[-1] != t:
            self.times.append(t)
            self.states.append(np.array(y))

    def trajectory(self, outcome, diagnostics=()) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            states=np.array(self.states),
            outcome=outcome,
            diagnostics=tuple(diagnostics),
        )


class _ConvergenceWatch:
    def __init__(self, cfg: IntegratorConfig, equilibrium: Array | None):
        self.norm_limit = cfg.converge_norm
        self.window = cfg.converge_window
        self.eq = equilibrium
        self.below_since: float | None = None

    def deviation(self, y: Array) -> float:
        if self.eq is None:
            return float(np.linalg.norm(y))
        return float(np.linalg.norm(y - self.eq))

    def update(self, t: float, y: Array) -> bool:
        """True once the deviation has stayed small for a full window."""
        if self.deviation(y) < self.norm_limit:
            if self.below_since is None:
                self.below_since = t
            return t - self.below_since >= self.window
        self.below_since = None
        return False


def _refine_escape(
    field: Field, t_lo: float, y_lo: Array, h: float, blowup_norm: float
) -> tuple[float, float]:
    """Bisect the step that crossed ``blowup_norm`` down to a tight bracket.

    Invariant: the state at the returned left time is below the threshold,
    and advancing past the returned right time exceeds it (or overflows).
    """
    t_hi = t_lo + h
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(200):
            width = t_hi - t_lo
            if width <= _ESCAPE_REFINE_REL * max(t_hi, 1e-9):
                break
            half = 0.5 * width
            if t_lo + half == t_lo:  # time resolution exhausted
                break
            y_mid = rk4_step(field, y_lo, half)
            if not _finite(y_mid) or np.linalg.norm(y_mid) >= blowup_norm:
                t_hi = t_lo + half
            else:
                t_lo = t_lo + half
                y_lo = y_mid
    return t_lo, t_hi


def _escape_outcome(field, t_lo, y_lo, h, blowup_norm) -> FiniteEscape:
    lo, hi = _refine_escape(field, t_lo, y_lo, h, blowup_norm)
    pad = _ESCAPE_PAD_REL * max(hi, 1e-9)
    bracket = (lo, hi + pad)
    return FiniteEscape(t_escape=0.5 * (bracket[0] + bracket[1]), bracket=bracket)


def integrate(
    field: Field,
    y0,
    cfg: IntegratorConfig,
    equilibrium=None,
) -> Trajectory:
    """Integrate an autonomous field from y0 and classify the outcome."""
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    if not _finite(y):
        raise ValueError("initial state must be finite")
    if np.linalg.norm(y) >= cfg.blowup_norm:
        raise ValueError("initial state already beyond blowup_norm")
    eq = None if equilibrium is None else np.asarray(equilibrium, dtype=float)

    if cfg.method == "rk4_fixed":
        return _run_fixed(field, y, cfg, eq)
    return _run_adaptive(field, y, cfg, eq)


def _check_derivative(field: Field, y: Array) -> Array:
    k = field(y)
    if not _finite(k):
        raise NonFiniteDerivative("field returned a non-finite derivative", state=np.array(y))
    return k


def _classify_step(field, cfg, watch, rec, t, y, h, y_new, diagnostics):
    """Shared accepted-step bookkeeping.  Returns an outcome or None."""
    t_new = t + h
    norm = np.linalg.norm(y_new)
    if not np.isfinite(norm) or norm >= cfg.blowup_norm:
        rec.finalize(t, y)
        return _escape_outcome(field, t, y, h, cfg.blowup_norm)
    if cfg.diverge_norm is not None and norm >= cfg.diverge_norm:
        rec.on_accept(t_new, y_new)
        rec.finalize(t_new, y_new)
        return Diverged(t_threshold=t_new)
    rec.on_accept(t_new, y_new)
    if watch.update(t_new, y_new):
        rec.finalize(t_new, y_new)
        return Converged(final_error=watch.deviation(y_new))
    return None


def _run_fixed(field, y, cfg, eq) -> Trajectory:
    rec = _Recorder(cfg.record_stride, y)
    watch = _ConvergenceWatch(cfg, eq)
    diagnostics: list[str] = []
    t = 0.0
    steps = 0
    while t < cfg.t_max:
        if steps >= _MAX_STEPS:
            diagnostics.append("StepBudgetExhausted")
            break
        h = min(cfg.step, cfg.t_max - t)
        _check_derivative(field, y)
        y_new = rk4_step(field, y, h)
        outcome = _classify_step(field, cfg, watch, rec, t, y, h, y_new, diagnostics)
        if outcome is not None:
            return rec.trajectory(outcome, diagnostics)
        t += h
        y = y_new
        steps += 1
    rec.finalize(t, y)
    return rec.trajectory(MaxTimeReached(final_error=watch.deviation(y)), diagnostics)


def _run_adaptive(field, y, cfg, eq) -> Trajectory:
    rec = _Recorder(cfg.record_stride, y)
    watch = _ConvergenceWatch(cfg, eq)
    diagnostics: list[str] = []
    # The floor is a stall *diagnostic* threshold, not a clamp: blow-up
    # approaches legitimately need sub-floor steps to track the state up to
    # the escape threshold.
    h_floor = 1e-14 * cfg.t_max
    t = 0.0
    h = cfg.step
    k1 = _check_derivative(field, y)
    steps = 0

    def shrink(h_new: float) -> float | None:
        if t + h_new == t:  # rejected and unable to advance: a true stall
            diagnostics.append("StepSizeUnderflow")
            return None
        return h_new

    while t < cfg.t_max:
        if steps >= _MAX_STEPS:
            diagnostics.append("StepBudgetExhausted")
            break
        steps += 1
        h = min(h, cfg.t_max - t)
        if h < h_floor and "StiffnessSuspected" not in diagnostics:
            diagnostics.append("StiffnessSuspected")

        # Stage overflow near blow-up is expected and handled by rejection,
        # so the arithmetic runs with overflow warnings silenced.
        with np.errstate(over="ignore", invalid="ignore"):
            ks = [k1]
            for i in range(1, 7):
                yi = y + h * sum(a * k for a, k in zip(_DP_A[i], ks))
                ks.append(field(yi))
            y_new = y + h * sum(a * k for a, k in zip(_DP_A[6], ks))  # 5th order, FSAL
            err_vec = h * sum(e * k for e, k in zip(_DP_ERR, ks))

            if not _finite(err_vec) or not _finite(y_new):
                h = shrink(0.5 * h)
                if h is None:
                    break
                continue

            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

        if err > 1.0:
            h = shrink(h * max(0.2, 0.9 * err ** -0.2))
            if h is None:
                break
            continue

        outcome = _classify_step(field, cfg, watch, rec, t, y, h, y_new, diagnostics)
        if outcome is not None:
            return rec.trajectory(outcome, diagnostics)
        growing = np.linalg.norm(y_new) > np.linalg.norm(y)
        t += h
        y = y_new
        k1 = ks[6]  # FSAL: last stage is the derivative at y_new
        if not _finite(k1):
            raise NonFiniteDerivative(
                "field returned a non-finite derivative", state=np.array(y)
            )
        if t + h == t and not growing:
            # Sub-ulp steps are fine on the approach to blow-up (the norm
            # keeps climbing toward the threshold); without growth they are
            # a stall.
            diagnostics.append("TimeResolutionExhausted")
            break
        h = h * (5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2)))
    rec.finalize(t, y)
    return rec.trajectory(MaxTimeReached(final_error=watch.deviation(y)), diagnostics)


def integrate_batch(
    items: Sequence[tuple], cfg: IntegratorConfig
) -> list[Trajectory | PidcertError]:
    """Integrate (field, y0[, equilibrium]) items; per-item errors are
    collected in place of the trajectory instead of aborting the batch.

    Results are order-stable and identical to serial `integrate` calls.
    """
    if not items:
        raise ValueError("integrate_batch needs at least one item")
    results: list[Trajectory | PidcertError] = []
    for item in items:
        field, y0, *rest = item
        eq = rest[0] if rest else None
        try:
            results.append(integrate(field, y0, cfg, equilibrium=eq))
        except PidcertError as exc:
            results.append(exc)
    return results
