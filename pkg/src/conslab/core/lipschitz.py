"""Sampled Lipschitz constants of fields F(x, u) over a box."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_GRID = 512

AXES = ("space", "density")


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    axis: str
    domain: tuple[tuple[float, float], tuple[float, float]]
    sample_count: int
    degenerate: bool = False


def sample_grid(F: Callable, box, grid_size: int | tuple[int, int]):
    """Evaluate ``F(x[:, None], u[None, :])`` on a tensor grid."""
    (x0, x1), (u0, u1) = box
    nx, nu = (grid_size, grid_size) if np.isscalar(grid_size) else grid_size
    x = np.linspace(x0, x1, nx)
    u = np.linspace(u0, u1, nu)
    vals = np.broadcast_to(np.asarray(F(x[:, None], u[None, :]), dtype=float), (nx, nu))
    return x, u, vals


def lip_profile(x: np.ndarray, u: np.ndarray, vals: np.ndarray, axis: str) -> np.ndarray:
    """Divided-difference maxima along ``axis``, kept as a function of the other coordinate."""
    if axis == "space":
        dq = np.abs(np.diff(vals, axis=0)) / np.diff(x)[:, None]
        return dq.max(axis=0) if dq.size else np.zeros(len(u))
    if axis == "density":
        dq = np.abs(np.diff(vals, axis=1)) / np.diff(u)[None, :]
        return dq.max(axis=1) if dq.size else np.zeros(len(x))
    raise ValueError(f"axis must be one of {AXES}")


def estimate_lip(F: Callable, axis: str, box, grid_size: int | tuple[int, int] = DEFAULT_GRID) -> LipschitzEstimate:
    """Max |divided difference| of F between adjacent nodes along ``axis``.

    ``box`` is ((x0, x1), (u0, u1)); F must broadcast over ``(x[:, None], u[None, :])``.
    A zero-extent box along ``axis`` yields 0 with the degeneracy flag set.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    (x0, x1), (u0, u1) = box
    n = grid_size if np.isscalar(grid_size) else min(grid_size)
    if n < 2:
        raise ValueError("grid_size must be >= 2 per axis")
    extent = (x1 - x0) if axis == "space" else (u1 - u0)
    nx, nu = (grid_size, grid_size) if np.isscalar(grid_size) else grid_size
    if extent <= 0:
        return LipschitzEstimate(0.0, axis, ((x0, x1), (u0, u1)), 0, degenerate=True)
    # the other axis may be degenerate: sample a single line
    if axis == "space" and u1 <= u0:
        nu = 1
    if axis == "density" and x1 <= x0:
        nx = 1
    x, u, vals = sample_grid(F, box, (nx, nu))
    value = float(lip_profile(x, u, vals, axis).max())
    return LipschitzEstimate(value, axis, ((x0, x1), (u0, u1)), nx * nu)
