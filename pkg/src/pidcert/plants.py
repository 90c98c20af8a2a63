"""Plant nonlinearities f(position, velocity) and Lipschitz probing.

A plant is a total map f: R^n x R^n -> R^n together with an optional
declared global Lipschitz constant (Euclidean norms).  The catalog covers
the standard mechanical examples plus the deliberately non-Lipschitz
power-law plant used by the finite-escape demo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import BadParams, UnknownPlant

Array = np.ndarray


@dataclass(frozen=True)
class PlantFunction:
    """Second-order plant nonlinearity.

    ``declared_L`` is a certified upper bound when present; sampled
    difference quotients of ``evaluate`` never exceed it (up to 1e-6
    relative).  ``globally_lipschitz`` is False for plants that admit no
    finite global bound; gain synthesis refuses those.
    """

    dim_n: int
    evaluate: Callable[[Array, Array], Array]
    declared_L: float | None
    label: str
    globally_lipschitz: bool = True


@dataclass(frozen=True)
class ThirdOrderPlantFunction:
    """Scalar nonlinearity on R^3 for the third-order impossibility demo."""

    evaluate: Callable[[Array], float]
    declared_L: float | None
    label: str


def feedthrough_plant(c: float) -> ThirdOrderPlantFunction:
    """The defeating third-order member f(x1, x2, x3) = c * x3.

    Lipschitz with constant exactly |c|, so it stays inside the uncertainty
    class for any bound L >= c; the demo picks 0 < c <= L.
    """

    def evaluate(x):
        return c * float(np.asarray(x, dtype=float)[2])

    return ThirdOrderPlantFunction(
        evaluate=evaluate, declared_L=abs(c), label=f"feedthrough(c={c})"
    )


def _as_vec(x, n: int) -> Array:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {v.shape}")
    return v


def _zero_plant(n: int) -> PlantFunction:
    def evaluate(x, v):
        return np.zeros(n)

    return PlantFunction(dim_n=n, evaluate=evaluate, declared_L=0.0, label="zero")


def _linear_plant(matrix) -> PlantFunction:
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[1] != 2 * M.shape[0]:
        raise BadParams(f"linear plant needs an (n, 2n) matrix, got shape {M.shape}")
    n = M.shape[0]
    op_norm = float(np.linalg.norm(M, 2))

    def evaluate(x, v):
        return M @ np.concatenate([_as_vec(x, n), _as_vec(v, n)])

    return PlantFunction(dim_n=n, evaluate=evaluate, declared_L=op_norm, label="linear")


def _sine_mix_plant(alpha: float, beta: float) -> PlantFunction:
    def evaluate(x, v):
        return np.atleast_1d(alpha * math.sin(float(np.asarray(x).reshape(()))) +
                             beta * math.cos(float(np.asarray(v).reshape(()))))

    return PlantFunction(
        dim_n=1,
        evaluate=evaluate,
        declared_L=math.hypot(alpha, beta),
        label=f"sine_mix(alpha={alpha}, beta={beta})",
    )


def _pendulum_plant(gravity: float, length: float, damping: float) -> PlantFunction:
    if length <= 0:
        raise BadParams(f"pendulum length must be positive, got {length}")
    rate = gravity / length

    def evaluate(x, v):
        xs = float(np.asarray(x).reshape(()))
        vs = float(np.asarray(v).reshape(()))
        return np.atleast_1d(-rate * math.sin(xs) - damping * vs)

    return PlantFunction(
        dim_n=1,
        evaluate=evaluate,
        declared_L=math.hypot(rate, damping),
        label=f"pendulum(g/l={rate}, c={damping})",
    )


def _damped_spring_plant(stiffness: float, damping: float) -> PlantFunction:
    def evaluate(x, v):
        xs = float(np.asarray(x).reshape(()))
        vs = float(np.asarray(v).reshape(()))
        return np.atleast_1d(-stiffness * xs - damping * vs)

    return PlantFunction(
        dim_n=1,
        evaluate=evaluate,
        declared_L=math.hypot(stiffness, damping),
        label=f"damped_spring(k={stiffness}, c={damping})",
    )


def _power_law_plant(epsilon: float) -> PlantFunction:
    if epsilon <= 0:
        raise BadParams(f"power_law needs epsilon > 0, got {epsilon}")
    half_exp = 0.5 * (1.0 + epsilon)

    def evaluate(x, v):
        xs = float(np.asarray(x).reshape(()))
        vs = float(np.asarray(v).reshape(()))
        with np.errstate(over="ignore"):
            base = np.float64(xs) * xs + np.float64(vs) * vs
        # exp/log form keeps the value exact at base = 0 to double precision;
        # saturate instead of raising for inputs beyond float range.
        arg = half_exp * math.log(max(float(base), 1e-300))
        return np.atleast_1d(math.exp(arg) if arg < 709.0 else math.inf)

    return PlantFunction(
        dim_n=1,
        evaluate=evaluate,
        declared_L=None,
        label=f"power_law(epsilon={epsilon})",
        globally_lipschitz=False,
    )


_CATALOG = {
    "zero": (_zero_plant, {"n": 1}),
    "linear": (_linear_plant, {"matrix": None}),
    "sine_mix": (_sine_mix_plant, {"alpha": 1.0, "beta": 0.0}),
    "pendulum": (_pendulum_plant, {"gravity": 9.8, "length": 1.0, "damping": 0.0}),
    "damped_spring": (_damped_spring_plant, {"stiffness": 1.0, "damping": 1.0}),
    "power_law": (_power_law_plant, {"epsilon": 1.0}),
}

CATALOG_NAMES = tuple(sorted(_CATALOG))


def catalog_lookup(name: str, params: dict | None = None) -> PlantFunction:
    """Build a catalog plant with the given parameters bound."""
    if name not in _CATALOG:
        raise UnknownPlant(f"unknown plant {name!r}; choices: {', '.join(CATALOG_NAMES)}")
    builder, defaults = _CATALOG[name]
    bound = dict(defaults)
    params = dict(params or {})
    for key, value in params.items():
        if key not in bound:
            raise BadParams(f"plant {name!r} does not take parameter {key!r}")
        bound[key] = value
    if name == "linear" and bound["matrix"] is None:
        raise BadParams("linear plant needs a 'matrix' parameter")
    if name == "zero":
        bound["n"] = int(bound["n"])
        if bound["n"] < 1:
            raise BadParams(f"zero plant needs n >= 1, got {bound['n']}")
    try:
        numeric = {k: (v if k in ("matrix", "n") else float(v)) for k, v in bound.items()}
    except (TypeError, ValueError) as exc:
        raise BadParams(f"non-numeric parameter for plant {name!r}: {exc}") from exc
    return builder(**numeric)


def estimate_lipschitz(plant: PlantFunction, box_radius: float, samples: int, seed: int) -> float:
    """Sampled lower bound on the Lipschitz constant inside a box.

    Returns the largest difference quotient ||f(p) - f(q)|| / ||p - q|| seen
    over ``samples`` seeded random pairs in [-box_radius, box_radius]^(2n).
    Half the pairs are independent draws, half probe the local slope at
    distance 1e-6.  This is an estimate from below, never a certificate.
    """
    if samples < 2:
        raise ValueError(f"need samples >= 2, got {samples}")
    n = plant.dim_n
    rng = np.random.default_rng(seed)
    best = 0.0
    for k in range(samples):
        p = rng.uniform(-box_radius, box_radius, size=2 * n)
        if k % 2 == 0:
            q = rng.uniform(-box_radius, box_radius, size=2 * n)
        else:
            direction = rng.normal(size=2 * n)
            direction /= np.linalg.norm(direction)
            q = p + 1e-6 * direction
        gap = np.linalg.norm(p - q)
        if gap == 0.0:
            continue
        fp = plant.evaluate(p[:n], p[n:])
        fq = plant.evaluate(q[:n], q[n:])
        quotient = float(np.linalg.norm(fp - fq) / gap)
        if quotient > best:
            best = quotient
    return best


def shift_nonlinearity(plant: PlantFunction, setpoint) -> PlantFunction:
    """Recenter the plant at a setpoint: g(y1, y2) = f(y1 + y*, y2) - f(y*, 0).

    g(0, 0) = 0 by construction and the Lipschitz constant is unchanged
    (translation invariance), so ``declared_L`` carries over.
    """
    n = plant.dim_n
    y_star = _as_vec(setpoint, n)
    offset = np.asarray(plant.evaluate(y_star, np.zeros(n)), dtype=float)

    def evaluate(y1, y2):
        return np.asarray(plant.evaluate(_as_vec(y1, n) + y_star, y2), dtype=float) - offset

    return replace(plant, evaluate=evaluate, label=f"{plant.label} shifted")


def sample_plant(max_L: float, n: int, rng: np.random.Generator) -> PlantFunction:
    """Draw a random plant with declared_L <= max_L for verification sweeps.

    Alternates between linear plants (random gain matrix rescaled to a random
    fraction of max_L, destabilizing signs included) and sinusoid plants
    f = w * sin(a . [x; v]) with ||w|| * ||a|| <= max_L.
    """
    target = float(rng.uniform(0.2, 0.95)) * max_L
    if rng.uniform() < 0.5:
        M = rng.normal(size=(n, 2 * n))
        norm = np.linalg.norm(M, 2)
        M = M * (target / norm) if norm > 0 else M
        plant = _linear_plant(M)
        return replace(plant, label=f"random_linear(L={plant.declared_L:.3g})")
    w = rng.normal(size=n)
    a = rng.normal(size=2 * n)
    wn, an = np.linalg.norm(w), np.linalg.norm(a)
    if wn > 0 and an > 0:
        # ||w|| * ||a|| = target gives the exact Lipschitz bound of w*sin(a.z).
        w = w / wn * math.sqrt(target)
        a = a / an * math.sqrt(target)

    def evaluate(x, v, _w=w, _a=a):
        z = np.concatenate([_as_vec(x, n), _as_vec(v, n)])
        return _w * math.sin(float(_a @ z))

    declared = float(np.linalg.norm(w) * np.linalg.norm(a))
    return PlantFunction(
        dim_n=n,
        evaluate=evaluate,
        declared_L=declared,
        label=f"random_sine(L={declared:.3g})",
    )
