"""Chain lattices, single-particle coupling matrices and the distance-r strength.

For a matrix ``m`` and radius ``r`` the quantity of interest is

    ||m||_r = max |<psi, m phi>|   over unit psi, phi with dist(supp psi, supp phi) > r

which is not computed exactly (the maximisation over supports is
combinatorial). Instead two certified estimators bracket it:

* ``locality_lower`` restricts the supports to pairs of index intervals,
* ``locality_upper`` drops the support constraint but zeroes every entry at
  distance <= r, which cannot shrink any admissible matrix element.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

GEOMETRIES = ("chain-open", "chain-periodic")
SYMMETRIES = ("antisymmetric", "symmetric")

# tolerance for accepting a floating-point matrix as (anti)symmetric
_SYM_RTOL = 1e-12


@dataclass(frozen=True)
class Lattice:
    n: int
    geometry: str
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.n < 2:
            raise ValueError("a lattice needs at least two sites")
        pos = np.asarray(self.positions, dtype=np.int64)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def periodic(self) -> bool:
        return self.geometry == "chain-periodic"

    def distance(self, i, j):
        d = np.abs(np.asarray(self.positions)[i] - np.asarray(self.positions)[j])
        if self.periodic:
            d = np.minimum(d, self.n - d)
        return d

    def distance_matrix(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.distance(idx[:, None], idx[None, :])

    @property
    def diameter(self) -> int:
        return self.n // 2 if self.periodic else self.n - 1


def build_chain(n: int, geometry: str = "open") -> Lattice:
    """Chain of ``n`` sites with the path metric ("open" or "periodic")."""
    if n < 2:
        raise ValueError("n must be >= 2")
    geometry = {"open": "chain-open", "periodic": "chain-periodic"}.get(geometry, geometry)
    return Lattice(n=int(n), geometry=geometry, positions=np.arange(n))


@dataclass(frozen=True)
class CouplingMatrix:
    """Real square matrix with a declared symmetry class."""

    entries: np.ndarray = field(repr=False)
    symmetry: str = "antisymmetric"

    def __post_init__(self):
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry class {self.symmetry!r}")
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("coupling matrix must be square")
        if not np.all(np.isfinite(a)):
            raise ValueError("coupling matrix has non-finite entries")
        sign = -1.0 if self.symmetry == "antisymmetric" else 1.0
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if np.max(np.abs(a - sign * a.T), initial=0.0) > _SYM_RTOL * scale:
            raise ValueError(f"matrix is not {self.symmetry}")
        a = 0.5 * (a + sign * a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def to_json(self) -> dict:
        return {"n": self.n, "symmetry": self.symmetry, "entries": self.entries.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: Union[dict, str]) -> "CouplingMatrix":
        if isinstance(obj, str):
            obj = json.loads(obj)
        n = int(obj["n"])
        entries = np.asarray(obj["entries"], dtype=float)
        if entries.size != n * n:
            raise ValueError(f"expected {n * n} entries, got {entries.size}")
        return cls(entries.reshape(n, n), obj["symmetry"])


MatrixLike = Union[CouplingMatrix, np.ndarray]


def _arr(m: MatrixLike) -> np.ndarray:
    return m.entries if isinstance(m, CouplingMatrix) else np.asarray(m)


def _check_dims(m: np.ndarray, lat: Lattice):
    if m.shape != (lat.n, lat.n):
        raise ValueError(f"matrix of shape {m.shape} does not match lattice of {lat.n} sites")


def coupling_range(m: MatrixLike, lat: Lattice) -> float:
    """Smallest R with m[i, j] = 0 whenever dist(i, j) > R."""
    a = _arr(m)
    _check_dims(a, lat)
    nz = a != 0
    if not nz.any():
        return 0
    return int(lat.distance_matrix()[nz].max())


def operator_norm(m: MatrixLike) -> float:
    """Largest singular value."""
    a = _arr(m)
    if a.size == 0:
        return 0.0
    if not np.any(a):
        return 0.0
    return float(np.linalg.norm(a, 2))


def double_bracket_rhs(v: MatrixLike, h: MatrixLike, scale: float = 4.0) -> np.ndarray:
    """scale * [[v, h], h].

    When both inputs are exactly (anti)symmetric the result is projected onto
    that class, which removes the rounding asymmetry of the matrix products.
    """
    va, ha = _arr(v), _arr(h)
    if va.shape != ha.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {ha.shape}")
    x = va @ ha - ha @ va
    out = scale * (x @ ha - ha @ x)
    sv, sh = _symmetry_of(v), _symmetry_of(h)
    if sv is not None and sv == sh:
        sign = -1.0 if sv == "antisymmetric" else 1.0
        out = 0.5 * (out + sign * out.T)
    return out


def _symmetry_of(m: MatrixLike):
    if isinstance(m, CouplingMatrix):
        return m.symmetry
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or np.iscomplexobj(a):
        return None
    if np.array_equal(a, -a.T):
        return "antisymmetric"
    if np.array_equal(a, a.T):
        return "symmetric"
    return None


def _interval_pairs(lat: Lattice, r: float):
    """Maximal (rows, cols) index sets of interval pairs at distance > r.

    Enlarging either interval can only increase the largest singular value of
    the submatrix, so only maximal pairs are generated.
    """
    n = lat.n
    gap = int(np.floor(r)) + 1  # smallest admissible integer separation
    if not lat.periodic:
        for i in range(n):
            j = i + gap
            if j >= n:
                break
            left, right = np.arange(0, i + 1), np.arange(j, n)
            yield left, right
            yield right, left
        return
    # ring: A is an arc of length L starting at s; the sites at ring distance
    # > r from A form the complementary arc with gap - 1 sites trimmed per side
    for length in range(1, n):
        size_b = n - length - 2 * (gap - 1)
        if size_b <= 0:
            break
        for start in range(n):
            a = (start + np.arange(length)) % n
            b = (start + length - 1 + gap + np.arange(size_b)) % n
            yield a, b


def locality_lower(m: MatrixLike, lat: Lattice, r: float) -> float:
    """Certified lower estimate of ||m||_r from interval-pair submatrices."""
    a = _arr(m)
    _check_dims(a, lat)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    best = 0.0
    for rows, cols in _interval_pairs(lat, r):
        sub = a[np.ix_(rows, cols)]
        if np.any(sub):
            best = max(best, float(np.linalg.norm(sub, 2)))
    return best


def _masked_norm(a: np.ndarray, dist: np.ndarray, r: float) -> float:
    masked = np.where(dist > r, a, 0.0)
    return operator_norm(masked)


def masked_norm(m: MatrixLike, lat: Lattice, r: float) -> float:
    """Operator norm of m with every entry at distance <= r zeroed.

    An upper bound on ||m||_r at the single threshold r.
    """
    a = _arr(m)
    _check_dims(a, lat)
    return _masked_norm(a, lat.distance_matrix(), r)


def _thresholds(dist: np.ndarray, r: float) -> list:
    levels = np.unique(dist)
    return [float(x) for x in levels if x <= r] or [float(r)]


def locality_upper(m: MatrixLike, lat: Lattice, r: float) -> float:
    """Certified upper estimate of ||m||_r.

    The distance-masked operator norm is an upper bound at every threshold
    d <= r (the true quantity is non-increasing in r), and so is ||m||; the
    minimum over all of them is returned, which makes the estimator monotone.
    """
    a = _arr(m)
    _check_dims(a, lat)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    dist = lat.distance_matrix()
    best = operator_norm(a)
    for d in _thresholds(dist, r):
        if best == 0.0:
            break
        best = min(best, _masked_norm(a, dist, d))
    return best


@dataclass(frozen=True)
class LocalityProfile:
    radii: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    B: float = 0.0

    def __post_init__(self):
        for name in ("radii", "lower", "upper"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.radii) == len(self.lower) == len(self.upper)):
            raise ValueError("profile arrays differ in length")


def locality_profile(
    m: MatrixLike,
    lat: Lattice,
    radii: Sequence[float],
    B: float = 0.0,
    lower: bool = True,
) -> LocalityProfile:
    """Lower and upper estimates of ||m||_r at each radius (ascending).

    Pass ``lower=False`` to skip the interval-pair estimator (it is the
    expensive one on periodic chains); the lower column is then zero, which
    is still a valid lower bound.
    """
    radii = np.asarray(list(radii), dtype=float)
    if np.any(np.diff(radii) < 0):
        raise ValueError("radii must be sorted ascending")
    if np.any(radii < 0):
        raise ValueError("radii must be nonnegative")
    a = _arr(m)
    _check_dims(a, lat)
    dist = lat.distance_matrix()
    up = np.empty(len(radii))
    best = operator_norm(a)
    done = set()
    levels = np.unique(dist)
    for i, r in enumerate(radii):
        for d in levels[levels <= r]:
            if best == 0.0:
                break
            if d in done:
                continue
            done.add(d)
            best = min(best, _masked_norm(a, dist, d))
        up[i] = best
    if lower:
        lo = np.array([locality_lower(a, lat, r) for r in radii])
        lo = np.minimum.accumulate(lo) if len(lo) else lo
    else:
        lo = np.zeros(len(radii))
    if np.any(lo > up * (1 + 1e-10) + 1e-14):
        raise AssertionError("locality bracket violated: lower estimate exceeds upper")
    return LocalityProfile(radii=radii, lower=lo, upper=up, B=B)


def random_banded(
    n: int,
    R: int,
    rng: np.random.Generator,
    symmetry: str = "antisymmetric",
    lat: Lattice | None = None,
    norm: float | None = 1.0,
) -> CouplingMatrix:
    """Gaussian matrix of range ``R`` on ``lat`` (open chain by default), scaled to ``norm``."""
    lat = lat or build_chain(n, "open")
    g = rng.standard_normal((n, n))
    g = np.where(lat.distance_matrix() <= R, g, 0.0)
    if symmetry == "antisymmetric":
        g = g - g.T
    else:
        g = g + g.T
    if norm is not None:
        s = operator_norm(g)
        if s > 0:
            g = g * (norm / s)
    return CouplingMatrix(g, symmetry)


def spectrum(m: MatrixLike, symmetry: str | None = None) -> np.ndarray:
    """Sorted eigenvalues of i*m (antisymmetric class) or of m (symmetric)."""
    a = _arr(m)
    sym = symmetry or _symmetry_of(m) or "symmetric"
    if sym == "antisymmetric":
        return np.linalg.eigvalsh(1j * a)
    return np.linalg.eigvalsh(a)


def dump_matrices(mats: Iterable[CouplingMatrix]) -> list:
    return [m.to_json() for m in mats]
