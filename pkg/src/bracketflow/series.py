"""Scalar caricatures of the flow's power series and their convergence radii.

Two cascades are modelled. The first bounds the size of the order-k term of
the expansion in B of a generic flow,

    J_{k+1}(B) = integral_0^B J^2 k^2 J_k,      J_k(B) = (J^2 |B|)^k (k-1)! / k,

which has zero radius of convergence. The second tracks a charge-q sector
around an unperturbed field; after removing the exp(-4 q^2 B) damping,

    d/dB dt_{k+1} = eps k q J^2 dt_k,           dt_k(B) = (eps q J^2 B)^k / k,

a series with radius 1 / (eps q J^2).

Both recursions carry a factor that vanishes at the first step, so order 1
is seeded from the closed form. Every term is a monomial a_k B^k; the tables
store log|a_k| so nothing overflows.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .integrate import IntegratorConfig, integrate

CONVENTIONS = ("k-squared", "max(k,1)-squared")

# step of the default fixed-step integration of the undamped cascade
_NUMERIC_STEP = 1e-5


@dataclass
class SeriesTable:
    """Monomial coefficients a_k of a power series in B, kept as log|a_k| and sign.

    ``k`` says which orders are stored. If ``B_grid`` is set, ``values``
    holds the terms a_k B^k evaluated there (rows follow ``B_grid``).
    """

    name: str
    params: dict
    k: np.ndarray
    log_abs: np.ndarray
    sign: np.ndarray
    B_grid: Optional[list] = None
    values: Optional[np.ndarray] = None
    damped: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.int64)
        self.log_abs = np.asarray(self.log_abs, dtype=float)
        self.sign = np.asarray(self.sign, dtype=float)
        if not (len(self.k) == len(self.log_abs) == len(self.sign)):
            raise ValueError("k, log_abs and sign differ in length")
        if np.any(np.isnan(self.log_abs)) or np.any(self.log_abs == np.inf):
            raise ValueError("coefficients must be finite")

    @property
    def k_max(self) -> int:
        return int(self.k[-1])

    @property
    def coefficients(self) -> np.ndarray:
        """a_k as floats; entries beyond the double range come out as inf."""
        with np.errstate(over="ignore"):
            return self.sign * np.exp(self.log_abs)

    @property
    def overflows(self) -> bool:
        return not np.all(np.isfinite(self.coefficients))

    def at(self, B: float) -> np.ndarray:
        """Terms a_k B^k."""
        if B == 0:
            return np.where(self.k == 0, self.coefficients, 0.0)
        with np.errstate(over="ignore"):
            logs = self.log_abs + self.k * math.log(abs(B))
            sgn = self.sign * np.where((self.k % 2 == 1) & (B < 0), -1.0, 1.0)
            return sgn * np.exp(logs)

    def to_csv(self) -> str:
        """``k,coefficient``; switches to ``k,log_coefficient`` if any a_k overflows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.overflows:
            buf.write("# log-space: log_coefficient = log|a_k|; all coefficients are nonnegative\n"
                      if np.all(self.sign >= 0) else
                      "# log-space: log_coefficient = log|a_k|; see JSON for signs\n")
            w.writerow(["k", "log_coefficient"])
            for k, x in zip(self.k, self.log_abs):
                w.writerow([int(k), _g(x)])
        else:
            buf.write("# linear-space\n")
            w.writerow(["k", "coefficient"])
            for k, x in zip(self.k, self.coefficients):
                w.writerow([int(k), _g(x)])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "k": self.k.tolist(),
            "log_abs": [float(x) if np.isfinite(x) else None for x in self.log_abs],
            "sign": self.sign.tolist(),
            "B_grid": self.B_grid,
        }

    @classmethod
    def from_json(cls, obj) -> "SeriesTable":
        if isinstance(obj, str):
            obj = json.loads(obj)
        logs = [-math.inf if x is None else x for x in obj["log_abs"]]
        return cls(obj["name"], obj["params"], obj["k"], logs, obj["sign"], obj.get("B_grid"))


def _g(x) -> str:
    return format(float(x), ".17g")


def _require_positive_k(k: int):
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer (order 0 is the constant 1 by convention)")


# J_k ------------------------------------------------------------------

def jk_log_closed_form(J: float, B: float, k: int) -> float:
    """log J_k(B); -inf when J_k(B) = 0."""
    _require_positive_k(k)
    x = J * J * abs(B)
    if x == 0:
        return -math.inf
    return k * math.log(x) + math.lgamma(k) - math.log(k)


def jk_closed_form(J: float, B: float, k: int) -> float:
    """(J^2 |B|)^k / k! * ((k - 1)!)^2."""
    _require_positive_k(k)
    x = J * J * abs(B)
    if k <= 170:
        return x ** k * (math.factorial(k - 1) / k)
    if x == 0:
        return 0.0
    try:
        return math.exp(jk_log_closed_form(J, B, k))
    except OverflowError:
        raise OverflowError(f"J_{k} exceeds the double range; use jk_log_closed_form") from None


def jk_recursive(J: float, B: Optional[float], k_max: int, convention: str = "k-squared") -> SeriesTable:
    """Iterate a_{k+1} = J^2 f(k) a_k / (k + 1) with a_0 = 1.

    ``f(k) = k^2`` makes the first step vanish, so a_1 = J^2 is seeded from
    the closed form; ``f(k) = max(k, 1)^2`` runs unseeded. Orders k >= 1
    coincide in both.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if J == 0:
        raise ValueError("J must be nonzero")
    logs = np.empty(k_max + 1)
    logs[0] = 0.0
    log_j2 = 2 * math.log(abs(J))
    seeded = convention == "k-squared"
    start = 0
    if seeded:
        logs[1] = jk_log_closed_form(J, 1.0, 1)
        start = 1
    for k in range(start, k_max):
        f = k * k if seeded else max(k, 1) ** 2
        logs[k + 1] = logs[k] + log_j2 + math.log(f) - math.log(k + 1)
    table = SeriesTable(
        "J_k",
        {"J": J, "B": B, "convention": convention, "seeded": seeded},
        np.arange(k_max + 1),
        logs,
        np.ones(k_max + 1),
    )
    if B is not None:
        # the recursion integrates |dB|, so the terms depend on |B|
        table.B_grid = [float(B)]
        table.values = table.at(abs(B))[None, :]
    return table


# charge-q cascade -----------------------------------------------------

def delta_tilde_closed_form(epsilon: float, q: float, J: float, B: float, k: int) -> float:
    """(eps q J^2 B)^k / k."""
    _require_positive_k(k)
    return (epsilon * q * J * J * B) ** k / k


def damp(values, q: float, B) -> np.ndarray:
    """delta = exp(-4 q^2 B) * delta_tilde (B broadcast along the first axis)."""
    B = np.asarray(B, dtype=float).reshape(-1, *([1] * (np.ndim(values) - 1)))
    return np.exp(-4 * q * q * B) * np.asarray(values)


def undamp(values, q: float, B) -> np.ndarray:
    B = np.asarray(B, dtype=float).reshape(-1, *([1] * (np.ndim(values) - 1)))
    return np.exp(4 * q * q * B) * np.asarray(values)


def delta_recursive(
    epsilon: float,
    q: float,
    J: float,
    B_grid: Sequence[float],
    k_max: int,
    cfg: Optional[IntegratorConfig] = None,
) -> SeriesTable:
    """Undamped charge-q cascade, seeded with dt_1 = eps q J^2 B.

    Coefficients come from the exact monomial recursion
    a_{k+1} = eps q J^2 k a_k / (k + 1). Pass ``cfg`` to integrate the ODE
    system numerically instead (grid values only); the default numeric
    method is fixed-step RK4 with step 1e-5. ``damped`` holds
    exp(-4 q^2 B) dt_k.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    c = epsilon * q * J * J
    grid = [float(b) for b in B_grid]
    ks = np.arange(1, k_max + 1)
    if c == 0:
        logs = np.full(k_max, -math.inf)
        sign = np.ones(k_max)
    else:
        logs = ks * math.log(abs(c)) - np.log(ks)
        sign = np.where((ks % 2 == 1) & (c < 0), -1.0, 1.0)
    table = SeriesTable(
        "delta_tilde",
        {"epsilon": epsilon, "q": q, "J": J, "radius": (1 / abs(c)) if c else math.inf},
        ks,
        logs,
        sign,
        B_grid=grid,
    )
    if cfg is None:
        vals = np.array([table.at(b) for b in grid]) if grid else np.zeros((0, k_max))
        table.diagnostics["method"] = "exact-monomial"
    else:
        vals = _integrate_cascade(c, grid, k_max, cfg, table.diagnostics)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.all(np.isfinite(vals), axis=0)))
        table.diagnostics["overflow_k"] = int(ks[bad])
    table.values = vals
    table.damped = damp(vals, q, grid) if grid else vals
    return table


def _integrate_cascade(c, grid, k_max, cfg, diag):
    ks = np.arange(1, k_max)

    def rhs(_b, y):
        out = np.empty_like(y)
        out[0] = c
        out[1:] = c * ks * y[:-1]
        return out

    grid0 = sorted(set(grid) | {0.0})
    if grid0[0] < 0:
        raise ValueError("B_grid must be nonnegative for numeric integration")
    states, d = integrate(rhs, np.zeros(k_max), grid0, cfg)
    lookup = dict(zip(grid0, states))
    diag["method"] = f"numeric-{cfg.method}"
    diag["accepted"] = d.accepted
    return np.array([lookup[b] for b in grid])


def numeric_cascade_config(step: float = _NUMERIC_STEP) -> IntegratorConfig:
    return IntegratorConfig(method="rk4-fixed", step=step, max_steps=10_000_000)


def recursion_residual(closed, rhs, B_grid, degree: int) -> float:
    """Largest relative mismatch between d/dB closed(B) and rhs(B) on a grid.

    ``closed`` must be a monomial of the given degree in B, so its
    derivative is exactly degree * closed(B) / B; grid points must be
    nonzero.
    """
    worst = 0.0
    for b in B_grid:
        lhs, r = degree * closed(b) / b, rhs(b)
        worst = max(worst, abs(lhs - r) / max(abs(r), 1e-300))
    return worst


# radius of convergence --------------------------------------------------

def radius_estimate(table: SeriesTable):
    """Ratio-test radius of sum_k a_k B^k.

    Uses r_k = |a_k / a_{k+1}|. A log-log slope of r_k against k above
    1/2 over the upper half of k means the ratios grow without bound
    (infinite radius); below -1/2 they collapse (zero radius). Otherwise
    r_k = R + a / k is fitted by least squares over the last quartile,
    which removes the leading 1/k correction.

    Returns ``(radius, diagnostics)``.
    """
    mask = (table.k >= 1) & np.isfinite(table.log_abs)
    k = table.k[mask]
    logs = table.log_abs[mask]
    if len(k) < 10:
        raise ValueError(f"need at least 10 nonzero coefficients, got {len(k)}")
    if np.any(np.diff(k) != 1):
        raise ValueError("nonzero coefficients must be consecutive")
    log_r = logs[:-1] - logs[1:]
    kk = k[:-1].astype(float)
    half = len(kk) // 2
    slope = float(np.polyfit(np.log(kk[half:]), log_r[half:], 1)[0])
    diag = {"slope": slope, "n_ratios": len(kk), "last_ratio": float(np.exp(log_r[-1]))}
    if slope > 0.5:
        diag["method"] = "ratios-diverge"
        return math.inf, diag
    if slope < -0.5:
        diag["method"] = "ratios-vanish"
        return 0.0, diag
    tail = max(3, len(kk) // 4)
    x = 1.0 / kk[-tail:]
    r = np.exp(log_r[-tail:])
    A = np.column_stack([np.ones_like(x), x])
    (R, a), *_ = np.linalg.lstsq(A, r, rcond=None)
    fit = A @ np.array([R, a])
    diag.update(method="richardson", correction=float(a), fit_residual=float(np.max(np.abs(fit - r))), tail=tail)
    return max(float(R), 0.0), diag


__all__ = [
    "CONVENTIONS",
    "SeriesTable",
    "damp",
    "delta_recursive",
    "delta_tilde_closed_form",
    "jk_closed_form",
    "jk_log_closed_form",
    "jk_recursive",
    "numeric_cascade_config",
    "radius_estimate",
    "recursion_residual",
    "undamp",
]
