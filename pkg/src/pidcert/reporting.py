"""Machine-readable run reports and trajectory export.

CSV floats are rendered with 17 significant digits so a double survives the
round trip exactly.  JSON reports are byte-stable for identical inputs:
keys are sorted, nothing time- or host-dependent is included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .closed_loop import Trajectory

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE = "INCONCLUSIVE"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunReport:
    """Structured result of one CLI command."""

    command: str
    inputs: dict
    results: dict
    verdict: str
    seed: int | None = None
    trajectories: list[str] = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "command": self.command,
            "inputs": _jsonable(self.inputs),
            "results": _jsonable(self.results),
            "verdict": self.verdict,
            "seed": self.seed,
            "trajectories": list(self.trajectories),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2, sort_keys=True) + "\n"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


def outcome_summary(traj: Trajectory) -> dict:
    out = traj.outcome
    summary: dict = {"kind": type(out).__name__}
    for key, val in vars(out).items():
        summary[key] = _jsonable(val)
    if traj.diagnostics:
        summary["diagnostics"] = list(traj.diagnostics)
    return summary


def write_second_order_csv(path, traj: Trajectory, n: int, setpoint, v_values=None) -> None:
    """Trajectory table: t, y0_*, x1_*, x2_*, err_norm and optionally V."""
    setpoint = np.atleast_1d(np.asarray(setpoint, dtype=float))
    cols = ["t"]
    cols += [f"y0_{i + 1}" for i in range(n)]
    cols += [f"x1_{i + 1}" for i in range(n)]
    cols += [f"x2_{i + 1}" for i in range(n)]
    cols += ["err_norm"]
    if v_values is not None:
        cols += ["V"]
    lines = [",".join(cols)]
    for k, (t, state) in enumerate(zip(traj.times, traj.states)):
        err = np.linalg.norm(state[n : 2 * n] - setpoint)
        row = [fmt(t)] + [fmt(v) for v in state] + [fmt(err)]
        if v_values is not None:
            row.append(fmt(v_values[k]))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_state_csv(path, traj: Trajectory, labels: list[str], extra: dict | None = None) -> None:
    """Generic trajectory table: t, one column per state, extra columns last."""
    extra = extra or {}
    cols = ["t"] + labels + list(extra)
    lines = [",".join(cols)]
    for k, (t, state) in enumerate(zip(traj.times, traj.states)):
        row = [fmt(t)] + [fmt(v) for v in state]
        row += [fmt(extra[name][k]) for name in extra]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_results_csv(path, results: dict) -> None:
    """Flatten a scalar results tree into key,value rows."""
    lines = ["key,value"]

    def walk(prefix, value):
        if isinstance(value, dict):
            for k, v in value.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(value, (list, tuple, np.ndarray)):
            for i, v in enumerate(np.asarray(value).tolist() if isinstance(value, np.ndarray) else value):
                walk(f"{prefix}[{i}]", v)
        else:
            rendered = fmt(value) if isinstance(value, (float, np.floating)) else str(value)
            lines.append(f"{prefix},{rendered}")

    walk("", _jsonable(results))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
