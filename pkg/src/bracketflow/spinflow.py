"""Many-body double bracket flow on small qubit chains.

The flow is dH/dB = [[V, H], H] with V usually the uniform field sum_j Z_j.
Dense integration works on 2^n x 2^n matrices and is limited to 12 sites.
Writing H = V + Delta gives

    dDelta/dB = [[V, Delta], V] + [[V, Delta], Delta],

whose linear part multiplies each charge-q component by -4 q^2.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .integrate import IntegratorConfig, InvariantBreach, integrate
from .pauli import (
    MAX_DENSE_SITES,
    SYMBOLS,
    PauliPolynomial,
    StringBudgetError,
    all_strings,
    charge_of_string,
    commutator,
    dense_to_coefficients,
    eigenoperator_check,
    translation_sum,
    z_field,
)


def _dense(op, n_sites: Optional[int] = None) -> np.ndarray:
    if isinstance(op, PauliPolynomial):
        if op.n_sites > MAX_DENSE_SITES:
            raise ValueError(f"dense flow limited to {MAX_DENSE_SITES} sites, got {op.n_sites}")
        return op.to_dense()
    a = np.asarray(op)
    if n_sites is not None and a.shape != (2 ** n_sites, 2 ** n_sites):
        raise ValueError("dense operator has the wrong dimension")
    return a


def _maybe_real(*mats):
    if all(np.max(np.abs(m.imag), initial=0.0) == 0.0 for m in mats):
        return [np.ascontiguousarray(m.real) for m in mats]
    return [np.asarray(m, dtype=complex) for m in mats]


def _bracket_with(v: np.ndarray):
    """Return a function x -> [v, x], exploiting a diagonal v."""
    if np.count_nonzero(v - np.diag(np.diagonal(v))) == 0:
        d = np.diagonal(v)
        diff = d[:, None] - d[None, :]
        return lambda x: diff * x
    return lambda x: v @ x - x @ v


@dataclass
class SpinTrajectory:
    B_grid: list
    matrices: list
    n_sites: int
    diagnostics: dict = field(default_factory=dict)

    def polynomial(self, i: int, atol: float = 1e-14) -> PauliPolynomial:
        return PauliPolynomial.from_dense(self.matrices[i], atol)

    def polynomials(self, atol: float = 1e-14) -> List[PauliPolynomial]:
        return [self.polynomial(i, atol) for i in range(len(self.matrices))]

    def coefficient_tensor(self, i: int) -> np.ndarray:
        return dense_to_coefficients(self.matrices[i])


def _check_grid(B_grid):
    grid = [float(b) for b in B_grid]
    if not grid or grid[0] != 0.0:
        raise ValueError("B_grid must start at 0")
    if any(b1 < b0 for b0, b1 in zip(grid, grid[1:])):
        raise ValueError("B_grid must be ascending")
    return grid


def dense_flow(
    H0,
    V,
    B_grid: Sequence[float],
    cfg: IntegratorConfig = IntegratorConfig(),
    invariant_tol: float = 1e-8,
) -> SpinTrajectory:
    """Integrate dH/dB = [[V, H], H] in the dense representation.

    At every grid point the spectrum of H is compared with the initial one
    and Tr((H - V)^2) must not increase; violations beyond
    ``invariant_tol`` (relative to ||H0||) raise :class:`InvariantBreach`.
    """
    n = H0.n_sites if isinstance(H0, PauliPolynomial) else int(round(math.log2(np.shape(H0)[0])))
    if n > MAX_DENSE_SITES:
        raise ValueError(f"dense flow limited to {MAX_DENSE_SITES} sites, got {n}")
    h0, v = _maybe_real(_dense(H0, n), _dense(V, n))
    if not (np.allclose(h0, h0.conj().T, atol=1e-12) and np.allclose(v, v.conj().T, atol=1e-12)):
        raise ValueError("H0 and V must be Hermitian")
    grid = _check_grid(B_grid)
    ad_v = _bracket_with(v)

    def rhs(_b, h):
        x = ad_v(h)
        return x @ h - h @ x

    spec0 = np.linalg.eigvalsh(h0)
    ref = max(float(np.max(np.abs(spec0))), 1e-300)
    pot = [_potential(h0, v)]
    drift = [0.0]

    def monitor(b, h):
        ds = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (h + h.conj().T)) - spec0))) / ref
        drift.append(ds)
        if ds > invariant_tol:
            raise InvariantBreach(b, "spectrum", ds, invariant_tol)
        p = _potential(h, v)
        rise = (p - pot[-1]) / max(pot[0], 1e-300)
        pot.append(p)
        if rise > invariant_tol:
            raise InvariantBreach(b, "Tr((H - V)^2) increase", rise, invariant_tol)

    states, diag = integrate(rhs, h0, grid, cfg, monitor)
    d = diag.as_dict()
    d["spectrum_drift"] = drift
    d["potential"] = pot
    return SpinTrajectory(B_grid=grid, matrices=states, n_sites=n, diagnostics=d)


def _potential(h, v) -> float:
    d = h - v
    return float(np.real(np.vdot(d, d)))


def flow_potential(H, V) -> float:
    """Tr((H - V)^2)."""
    return _potential(_dense(H), _dense(V))


def perturbed_flow(
    V,
    Delta0,
    B_grid: Sequence[float],
    epsilon: float = 1.0,
    cfg: IntegratorConfig = IntegratorConfig(atol=0.0),
) -> SpinTrajectory:
    """Integrate dD/dB = [[V, D], V] + epsilon [[V, D], D].

    ``epsilon = 0`` keeps only the linear part, under which a charge-q
    component decays exactly as exp(-4 q^2 B). The default config measures
    error relative to the current state, so strongly damped sectors are
    still resolved.
    """
    n = Delta0.n_sites if isinstance(Delta0, PauliPolynomial) else None
    d0 = np.asarray(_dense(Delta0, n), dtype=complex)
    v = _dense(V, n)
    ad_v = _bracket_with(v)
    grid = _check_grid(B_grid)

    def rhs(_b, d):
        x = ad_v(d)
        out = x @ v - v @ x
        if epsilon:
            out = out + epsilon * (x @ d - d @ x)
        return out

    states, diag = integrate(rhs, d0, grid, cfg)
    nn = n if n is not None else int(round(math.log2(d0.shape[0])))
    return SpinTrajectory(B_grid=grid, matrices=states, n_sites=nn, diagnostics=diag.as_dict())


def linear_decay_errors(V, Delta0: PauliPolynomial, q: int, B_grid, cfg=IntegratorConfig(atol=0.0)) -> np.ndarray:
    """Relative deviation of the linearised evolution from exp(-4 q^2 B) Delta0."""
    traj = perturbed_flow(V, Delta0, B_grid, epsilon=0.0, cfg=cfg)
    d0 = traj.matrices[0]
    errs = []
    for b, d in zip(traj.B_grid, traj.matrices):
        expect = math.exp(-4 * q * q * b) * d0
        errs.append(np.linalg.norm(d - expect) / np.linalg.norm(expect))
    return np.array(errs)


# power series -----------------------------------------------------------

def power_series_coefficients(
    H: PauliPolynomial,
    V: PauliPolynomial,
    k_max: int,
    budget: int = 1_000_000,
) -> List[PauliPolynomial]:
    """Operator coefficients C_k with H_k(B) = C_k B^k.

    Integrating dH_{k+1}/dB = sum_l [[V, H_{k-l}], H_l] from zero with
    H_0 = H constant gives (k + 1) C_{k+1} = sum_l [[V, C_{k-l}], C_l].
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    coeffs = [H]
    brackets = [commutator(V, H)]
    stored = len(H)
    for k in range(k_max):
        acc = PauliPolynomial.zero(H.n_sites)
        for l in range(k + 1):
            acc = acc + commutator(brackets[k - l], coeffs[l])
        nxt = acc.scale(1.0 / (k + 1))
        stored += len(nxt)
        if stored > budget:
            raise StringBudgetError(stored, budget, k_reached=k)
        coeffs.append(nxt)
        brackets.append(commutator(V, nxt))
    return coeffs


def power_series_terms(H, V, k_max: int, B: float, budget: int = 1_000_000) -> List[PauliPolynomial]:
    """H_k(B) for k = 0..k_max."""
    return [c.scale(B ** k) for k, c in enumerate(power_series_coefficients(H, V, k_max, budget))]


def partial_sums(terms: Sequence[PauliPolynomial]) -> List[PauliPolynomial]:
    out, acc = [], PauliPolynomial.zero(terms[0].n_sites)
    for t in terms:
        acc = acc + t
        out.append(acc)
    return out


# eigenoperator sweep ----------------------------------------------------

@dataclass
class EigencheckRow:
    string: str
    charge: int
    eigenvalue: float
    expected: float
    residual: float

    @property
    def passed(self) -> bool:
        return abs(self.eigenvalue - self.expected) <= 1e-12 and self.residual <= 1e-12


def eigencheck_sweep(n_sites: int) -> List[EigencheckRow]:
    """Check [[V, s], V] = -4 q^2 s for every symbol string s on n sites."""
    V = z_field(n_sites)
    rows = []
    for s in all_strings(n_sites):
        O = PauliPolynomial(n_sites, {s: 1.0})
        q = charge_of_string(s)
        w = commutator(commutator(V, O), V)
        lam = eigenoperator_check(V, O)
        rows.append(EigencheckRow(s, q, lam + 0.0, -4.0 * q * q + 0.0, (w - O.scale(lam)).max_abs()))
    return rows


# size probe -------------------------------------------------------------

def ring_diameters(n: int) -> np.ndarray:
    """Support width on a ring of n sites for every bitmask of occupied sites."""
    out = np.zeros(2 ** n, dtype=np.int64)
    for mask in range(1, 2 ** n):
        occ = [j for j in range(n) if mask >> j & 1]
        # largest run of empty sites between consecutive occupied ones
        gaps = [(occ[(i + 1) % len(occ)] - occ[i] - 1) % n for i in range(len(occ))]
        out[mask] = n - max(gaps) if len(occ) > 1 else 1
    return out


def diameter_weights(t: np.ndarray) -> Dict[int, float]:
    """Sum of |c|^2 per support diameter, divided by the number of sites."""
    n = t.ndim
    mask = np.zeros(t.shape, dtype=np.int64)
    for j in range(n):
        shape = [1] * n
        shape[j] = 4
        mask = mask + (np.arange(4) != 0).reshape(shape).astype(np.int64) * (1 << j)
    diam = ring_diameters(n)[mask]
    w = np.bincount(diam.ravel(), weights=np.abs(t.ravel()) ** 2, minlength=n + 1)
    return {d: float(w[d]) / n for d in range(n + 1)}


@dataclass
class ProbeResult:
    sizes: list
    window: int
    epsilon: float
    B: float
    coefficients: Dict[int, Dict[str, complex]]
    weights: Dict[int, Dict[int, float]]
    diagnostics: dict = field(default_factory=dict)

    def differences(self) -> List[tuple]:
        """(previous size, size, max |coefficient change|) for consecutive sizes."""
        out = []
        for a, b in zip(self.sizes, self.sizes[1:]):
            ca, cb = self.coefficients[a], self.coefficients[b]
            keys = set(ca) | set(cb)
            out.append((a, b, max((abs(ca.get(k, 0) - cb.get(k, 0)) for k in keys), default=0.0)))
        return out

    def coefficients_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["size", "string", "coefficient_re", "coefficient_im"])
        for n in self.sizes:
            for s, c in sorted(self.coefficients[n].items()):
                w.writerow([n, s, _g(c.real), _g(c.imag)])
        return buf.getvalue()

    def weights_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["size", "diameter", "weight"])
        for n in self.sizes:
            for d, x in sorted(self.weights[n].items()):
                w.writerow([n, d, _g(x)])
        return buf.getvalue()

    def differences_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["previous_size", "size", "max_abs_difference"])
        for a, b, d in self.differences():
            w.writerow([a, b, _g(d)])
        return buf.getvalue()


def _g(x) -> str:
    return format(float(x), ".17g")


def convergence_probe(
    delta_local: PauliPolynomial,
    epsilon: float,
    sizes: Sequence[int],
    B: float,
    window: int = 3,
    cfg: IntegratorConfig = IntegratorConfig(),
    V_coeff: float = 1.0,
) -> ProbeResult:
    """Flow H = V + epsilon * Delta on periodic chains of each size to B.

    Delta is the translation sum of ``delta_local``. For each size the
    coefficients of all strings confined to ``window`` sites around the
    centre are recorded under their local pattern, together with the string
    weight at each support diameter. Nothing is asserted about convergence.
    """
    sizes = [int(s) for s in sizes]
    if any(s > MAX_DENSE_SITES for s in sizes):
        raise ValueError(f"sizes are limited to {MAX_DENSE_SITES} sites")
    if any(s < window for s in sizes):
        raise ValueError("every size must be at least the window width")
    coeffs, weights, diag = {}, {}, {}
    for n in sizes:
        H = z_field(n, V_coeff) + translation_sum(delta_local, n, periodic=True).scale(epsilon)
        traj = dense_flow(H, z_field(n, V_coeff), [0.0, float(B)] if B > 0 else [0.0], cfg)
        t = traj.coefficient_tensor(-1)
        start = n // 2 - window // 2
        local = {}
        for pattern in all_strings(window):
            idx = [0] * n
            for k, ch in enumerate(pattern):
                idx[start + k] = SYMBOLS.index(ch)
            c = complex(t[tuple(idx)])
            local[pattern] = 0j if abs(c) < 1e-15 else c
        coeffs[n] = local
        weights[n] = diameter_weights(t)
        diag[n] = {k: v for k, v in traj.diagnostics.items() if k != "error_estimates"}
    return ProbeResult(list(sizes), window, float(epsilon), float(B), coeffs, weights, diag)


__all__ = [
    "EigencheckRow",
    "ProbeResult",
    "SpinTrajectory",
    "convergence_probe",
    "dense_flow",
    "diameter_weights",
    "eigencheck_sweep",
    "flow_potential",
    "linear_decay_errors",
    "partial_sums",
    "perturbed_flow",
    "power_series_coefficients",
    "power_series_terms",
]
