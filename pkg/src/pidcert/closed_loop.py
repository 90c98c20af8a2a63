"""Autonomous closed-loop vector fields for the three studied systems.

State layouts:

* second-order PID loop, state (y0, x1, x2) in R^(3n):
      y0' = x1 - y*          (running integral of the tracking error)
      x1' = x2
      x2' = f(x1, x2) + kp*(x1 - y*) + ki*y0 + kd*x2
* superlinear loop, error state (y0, y1, y2) in R^3:
      y2' = ((y1 + y*)^2 + y2^2)^((1+eps)/2) + ki*y0 + kp*y1 + kd*y2
* third-order loop, error state (y0, y1, y2, y3) in R^4, linear y' = A y
  with companion last row (ki, kp, kd, c); trace(A) = c by construction.

The simulator integrates physical coordinates; conversion to the certified
error/modal coordinates lives in `certificates`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShiftUndefined
from .gain_design import PidGains
from .plants import PlantFunction

Array = np.ndarray


@dataclass(frozen=True)
class SecondOrderLoop:
    plant: PlantFunction
    gains: PidGains
    setpoint: Array  # shape (n,)

    def __post_init__(self):
        sp = np.atleast_1d(np.asarray(self.setpoint, dtype=float))
        if sp.shape != (self.plant.dim_n,):
            raise ValueError(
                f"setpoint shape {sp.shape} does not match plant dimension {self.plant.dim_n}"
            )
        object.__setattr__(self, "setpoint", sp)

    @property
    def dim(self) -> int:
        return 3 * self.plant.dim_n


@dataclass(frozen=True)
class SuperlinearLoop:
    epsilon: float
    gains: PidGains
    setpoint: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"superlinear exponent must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class ThirdOrderLoop:
    gains: PidGains
    c: float
    companion: Array = field(init=False, repr=False)

    def __post_init__(self):
        g = self.gains
        A = np.array(
            [
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [g.ki, g.kp, g.kd, self.c],
            ]
        )
        object.__setattr__(self, "companion", A)


@dataclass(frozen=True)
class ReducedThirdOrderLoop:
    """ki = 0 variant: the integral state drops and the loop is 3-dimensional."""

    gains: PidGains
    c: float
    companion: Array = field(init=False, repr=False)

    def __post_init__(self):
        if self.gains.ki != 0.0:
            raise ValueError("reduced third-order loop requires ki = 0")
        g = self.gains
        A = np.array(
            [
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [g.kp, g.kd, self.c],
            ]
        )
        object.__setattr__(self, "companion", A)


# --- trajectory container -------------------------------------------------


@dataclass(frozen=True)
class Converged:
    final_error: float


@dataclass(frozen=True)
class FiniteEscape:
    t_escape: float
    bracket: tuple[float, float]


@dataclass(frozen=True)
class MaxTimeReached:
    final_error: float


@dataclass(frozen=True)
class Diverged:
    t_threshold: float


Outcome = Converged | FiniteEscape | MaxTimeReached | Diverged


@dataclass(frozen=True)
class Trajectory:
    """Recorded samples of one integration run plus its classification."""

    times: Array
    states: Array
    outcome: Outcome
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have matching lengths")


# --- vector fields ---------------------------------------------------------


def second_order_field(loop: SecondOrderLoop, state: Array) -> Array:
    n = loop.plant.dim_n
    y0 = state[:n]
    x1 = state[n : 2 * n]
    x2 = state[2 * n :]
    e = x1 - loop.setpoint
    g = loop.gains
    force = (
        np.asarray(loop.plant.evaluate(x1, x2), dtype=float)
        + g.kp * e
        + g.ki * y0
        + g.kd * x2
    )
    return np.concatenate([e, x2, force])


def superlinear_field(loop: SuperlinearLoop, state: Array) -> Array:
    y0, y1, y2 = state
    g = loop.gains
    with np.errstate(over="ignore", invalid="ignore"):
        base = (y1 + loop.setpoint) ** 2 + y2 * y2
        # Clamped exp/log evaluation: exact 0 at base = 0 to double precision;
        # saturating to inf keeps the field total while a blow-up is bracketed.
        arg = 0.5 * (1.0 + loop.epsilon) * math.log(max(base, 1e-300))
        power = math.exp(arg) if arg < 709.0 else math.inf
        return np.array([y1, y2, power + g.ki * y0 + g.kp * y1 + g.kd * y2])


def third_order_field(loop: ThirdOrderLoop | ReducedThirdOrderLoop, state: Array) -> Array:
    return loop.companion @ state


def initial_state_from_physical(x1_0, x2_0, setpoint) -> Array:
    """Pack a physical start (position, velocity) into loop state; the error
    integral always starts at zero."""
    x1 = np.atleast_1d(np.asarray(x1_0, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2_0, dtype=float))
    sp = np.atleast_1d(np.asarray(setpoint, dtype=float))
    if not (x1.shape == x2.shape == sp.shape):
        raise ValueError("x1_0, x2_0 and setpoint must share one shape")
    return np.concatenate([np.zeros_like(x1), x1, x2])


def equilibrium_state(loop: SecondOrderLoop) -> Array:
    """The unique closed-loop fixed point (-f(y*,0)/ki, y*, 0); needs ki != 0."""
    if loop.gains.ki == 0.0:
        raise ShiftUndefined("equilibrium shift requires ki != 0")
    n = loop.plant.dim_n
    f_star = np.asarray(loop.plant.evaluate(loop.setpoint, np.zeros(n)), dtype=float)
    return np.concatenate([-f_star / loop.gains.ki, loop.setpoint, np.zeros(n)])
