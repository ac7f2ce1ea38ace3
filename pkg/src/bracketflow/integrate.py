"""Explicit Runge-Kutta steppers used by every flow in the package.

Two methods are available: classical fixed-step RK4 and the Dormand-Prince
5(4) embedded pair with step halving on rejection. States may be arrays of
any shape; the right-hand side is called as ``rhs(b, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

METHODS = ("rk4-fixed", "rk45-adaptive")


class IntegrationError(RuntimeError):
    """Base class for integrator failures."""


class StepLimitError(IntegrationError):
    """Raised when ``max_steps`` is exhausted before the end of the grid.

    Usually a sign of stiffness near an unstable fixed point.
    """

    def __init__(self, b_reached: float, steps: int):
        super().__init__(f"step budget of {steps} exhausted at B = {b_reached:.6g}")
        self.b_reached = b_reached
        self.steps = steps


class InvariantBreach(IntegrationError):
    """Raised by a monitor when a conserved quantity drifts too far."""

    def __init__(self, b: float, name: str, drift: float, limit: float):
        super().__init__(f"{name} drift {drift:.3e} exceeds {limit:.3e} at B = {b:.6g}")
        self.b = b
        self.name = name
        self.drift = drift


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk45-adaptive"
    step: float = 1e-2
    tolerance: float = 1e-9
    max_steps: int = 200_000
    # absolute floor of the error scale; None means equal to tolerance
    atol: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.atol is not None and self.atol < 0:
            raise ValueError("atol must be nonnegative")

    @property
    def abs_floor(self) -> float:
        return self.tolerance if self.atol is None else self.atol


@dataclass
class Diagnostics:
    accepted: int = 0
    rejected: int = 0
    errors: list = field(default_factory=list)
    b_reached: float = 0.0

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "max_error_estimate": max(self.errors) if self.errors else 0.0,
            "error_estimates": list(self.errors),
            "b_reached": self.b_reached,
        }


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def rk4_step(rhs, b, y, h):
    k1 = rhs(b, y)
    k2 = rhs(b + h / 2, y + (h / 2) * k1)
    k3 = rhs(b + h / 2, y + (h / 2) * k2)
    k4 = rhs(b + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def dopri_step(rhs, b, y, h, k1=None):
    """One Dormand-Prince step. Returns (y5, error_vector, k_last)."""
    ks = [rhs(b, y) if k1 is None else k1]
    for i in range(1, 7):
        yi = y
        for a, k in zip(_A[i], ks):
            if a:
                yi = yi + (h * a) * k
        ks.append(rhs(b + _C[i] * h, yi))
    y5 = y
    for coef, k in zip(_B5, ks):
        if coef:
            y5 = y5 + (h * coef) * k
    err = 0
    for coef, k in zip(_E, ks):
        if coef:
            err = err + (h * coef) * k
    # FSAL: stage 7 was evaluated at y5
    return y5, err, ks[6]


def integrate(
    rhs: Callable,
    y0,
    grid: Sequence[float],
    cfg: IntegratorConfig = IntegratorConfig(),
    monitor: Optional[Callable] = None,
):
    """Integrate ``dy/db = rhs(b, y)`` and return the states at ``grid``.

    ``grid`` must be ascending; its first entry is the initial parameter.
    ``monitor(b, y)`` is called at every grid point after the first and may
    raise :class:`InvariantBreach`.

    Returns ``(states, diagnostics)``.
    """
    grid = [float(g) for g in grid]
    if len(grid) == 0:
        raise ValueError("empty grid")
    if any(b1 < b0 for b0, b1 in zip(grid, grid[1:])):
        raise ValueError("grid must be ascending")
    y = np.array(y0, copy=True)
    diag = Diagnostics(b_reached=grid[0])
    states = [y.copy()]
    if cfg.method == "rk4-fixed":
        step = _rk4_segment
    else:
        step = _dopri_segment
    h = cfg.step
    for b0, b1 in zip(grid, grid[1:]):
        if b1 > b0:
            y, h = step(rhs, y, b0, b1, cfg, diag, h)
        diag.b_reached = b1
        if monitor is not None:
            monitor(b1, y)
        states.append(y.copy())
    return states, diag


def _rk4_segment(rhs, y, b0, b1, cfg, diag, h):
    nsub = max(1, math.ceil((b1 - b0) / cfg.step - 1e-12))
    dh = (b1 - b0) / nsub
    for i in range(nsub):
        if diag.accepted >= cfg.max_steps:
            raise StepLimitError(b0 + i * dh, cfg.max_steps)
        y = rk4_step(rhs, b0 + i * dh, y, dh)
        diag.accepted += 1
    return y, h


def _dopri_segment(rhs, y, b0, b1, cfg, diag, h):
    b = b0
    k1 = None
    floor = cfg.abs_floor
    while b < b1:
        if diag.accepted + diag.rejected >= cfg.max_steps:
            diag.b_reached = b
            raise StepLimitError(b, cfg.max_steps)
        last = b + h >= b1 - 1e-14 * max(1.0, abs(b1))
        hh = b1 - b if last else h
        y_new, err, k_last = dopri_step(rhs, b, y, hh, k1)
        scale = floor + cfg.tolerance * max(np.max(np.abs(y)), np.max(np.abs(y_new)))
        emax = float(np.max(np.abs(err)))
        if not np.all(np.isfinite(y_new)):
            ratio = np.inf
        elif emax == 0.0:
            ratio = 0.0
        else:
            ratio = emax / scale if scale > 0 else np.inf
        if ratio <= 1.0:
            b = b1 if last else b + hh
            y = y_new
            k1 = k_last
            diag.accepted += 1
            diag.errors.append(ratio * cfg.tolerance)
            grow = 5.0 if ratio == 0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
            # a step clipped to the grid point says nothing about the natural step
            if not (last and hh < h):
                h = hh * grow
        else:
            diag.rejected += 1
            h = hh / 2
            if h < 1e-15 * max(1.0, abs(b)):
                diag.b_reached = b
                raise StepLimitError(b, diag.accepted + diag.rejected)
    return y, h
