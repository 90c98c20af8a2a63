"""Optional matplotlib renderers for the CLI report path.

Kept out of the core modules on purpose: matplotlib is imported lazily the
first time a figure is requested, so library users who never ask for plots
never pay for (or need) a graphics stack.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .closed_loop import Trajectory


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    _plt().close(fig)


def regulation_figure(path, traj: Trajectory, n: int, setpoint) -> None:
    """States and tracking-error norm for a second-order loop run."""
    plt = _plt()
    setpoint = np.atleast_1d(np.asarray(setpoint, dtype=float))
    err = np.linalg.norm(traj.states[:, n : 2 * n] - setpoint, axis=1)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for i in range(n):
        ax1.plot(traj.times, traj.states[:, n + i], label=f"x1_{i + 1}")
        ax1.plot(traj.times, traj.states[:, 2 * n + i], "--", label=f"x2_{i + 1}")
        ax1.axhline(setpoint[i], color="gray", lw=0.8, ls=":")
    ax1.set_ylabel("state")
    ax1.legend(loc="best", fontsize=8)
    positive = err > 0
    ax2.semilogy(traj.times[positive], err[positive])
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("|e|")
    ax2.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def lyapunov_figure(path, times, v_values) -> None:
    plt = _plt()
    v = np.asarray(v_values)
    fig, ax = plt.subplots(figsize=(7, 4))
    positive = v > 0
    ax.semilogy(np.asarray(times)[positive], v[positive])
    ax.set_xlabel("t [s]")
    ax.set_ylabel("V(Z)")
    ax.set_title("modal energy along the trajectory")
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def escape_figure(path, traj: Trajectory, L_cone: float, epsilon: float, envelope, error_floor) -> None:
    """Velocity state against its lower envelope, error against its floor."""
    plt = _plt()
    t = traj.times
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.semilogy(t, traj.states[:, 2], label="y2(t)")
    ax1.semilogy(t, envelope, "--", label="lower envelope")
    ax1.set_xlabel("t [s]")
    ax1.legend(fontsize=8)
    ax1.grid(True, which="both", alpha=0.3)
    ax2.plot(t, traj.states[:, 1], label="e(t)")
    ax2.plot(t, error_floor, "--", label="linear floor")
    ax2.set_xlabel("t [s]")
    ax2.legend(fontsize=8)
    ax2.grid(True, alpha=0.3)
    fig.suptitle(f"finite escape, cone parameter {L_cone:.4g}, exponent {epsilon}")
    _save(fig, path)


def third_order_figure(path, times, error_numeric, error_closed) -> None:
    """Numeric error trace against the two-mode closed form."""
    plt = _plt()
    t = np.asarray(times)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(t, error_numeric, label="numeric e(t)")
    ax1.plot(t, error_closed, "--", label="closed form")
    ax1.set_xlabel("t [s]")
    ax1.legend(fontsize=8)
    ax1.grid(True, alpha=0.3)
    mag = np.abs(np.asarray(error_numeric))
    positive = mag > 0
    ax2.semilogy(t[positive], mag[positive])
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("|e|")
    ax2.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def region_figure(path, L: float, lam_tuple, product_curve) -> None:
    """Certificate product as the third pole is pushed out, chosen point marked."""
    plt = _plt()
    l3_values, products = product_curve
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.loglog(np.abs(l3_values), products)
    ax.axhline(1.0, color="red", lw=0.8, ls="--", label="certificate threshold")
    ax.axvline(abs(lam_tuple[2]), color="green", lw=0.8, ls=":", label="selected pole")
    ax.set_xlabel("|third pole|")
    ax.set_ylabel("L * phi * h")
    ax.set_title(f"certificate product for L = {L:g}")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)
