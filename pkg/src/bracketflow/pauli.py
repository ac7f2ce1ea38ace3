"""Operators on qubit chains as sums of products of single-site symbols.

The per-site basis is {I, Z, a, a^dag} with a = (X + iY)/2 = |0><1|. In
strings the symbols are written ``I``, ``Z``, ``+`` (for a) and ``-`` (for
a^dag); site 0 is the leftmost character and the most significant qubit of
the dense representation.

A product containing n_+ factors of a and n_- factors of a^dag has charge
n_+ - n_-. Commuting with V = sum_j Z_j multiplies a charge-q string by 2q.
"""

from __future__ import annotations

import itertools
import json
from collections import defaultdict
from typing import Dict, Iterable, Mapping, Optional

import numpy as np

SYMBOLS = "IZ+-"
_ALIASES = {"I": "I", "Z": "Z", "+": "+", "-": "-", "a": "+", "a†": "-", "ad": "-", "adag": "-"}
_CHARGE = {"I": 0, "Z": 0, "+": 1, "-": -1}
_DAGGER = {"I": "I", "Z": "Z", "+": "-", "-": "+"}

# single-site products: _MUL[x][y] = list of (symbol, coefficient) for x @ y
_MUL = {
    "I": {"I": [("I", 1)], "Z": [("Z", 1)], "+": [("+", 1)], "-": [("-", 1)]},
    "Z": {"I": [("Z", 1)], "Z": [("I", 1)], "+": [("+", 1)], "-": [("-", -1)]},
    "+": {"I": [("+", 1)], "Z": [("+", -1)], "+": [], "-": [("I", 0.5), ("Z", 0.5)]},
    "-": {"I": [("-", 1)], "Z": [("-", 1)], "+": [("I", 0.5), ("Z", -0.5)], "-": []},
}

# coefficient transform between matrix units (00, 01, 10, 11) and (I, Z, +, -)
_TO_SYM = np.array([[0.5, 0, 0, 0.5], [0.5, 0, 0, -0.5], [0, 1, 0, 0], [0, 0, 1, 0]])
_TO_UNIT = np.array([[1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, -1, 0, 0]], dtype=float)

MAX_DENSE_SITES = 12


class StringBudgetError(RuntimeError):
    def __init__(self, size: int, budget: int, k_reached: Optional[int] = None):
        msg = f"{size} stored strings exceeds the budget of {budget}"
        if k_reached is not None:
            msg += f" (completed through order {k_reached})"
        super().__init__(msg)
        self.k_reached = k_reached


def parse_string(s) -> str:
    """Normalise a symbol string or a sequence of symbol tokens."""
    if isinstance(s, str):
        tokens = list(s) if all(c in SYMBOLS for c in s) else s.replace(",", " ").split()
    else:
        tokens = list(s)
    out = []
    for tok in tokens:
        try:
            out.append(_ALIASES[tok.strip()])
        except KeyError:
            raise ValueError(f"invalid symbol {tok!r}") from None
    return "".join(out)


def charge_of_string(s) -> int:
    """Number of a factors minus number of a^dag factors."""
    return sum(_CHARGE[c] for c in parse_string(s))


def _mul_strings(s1: str, s2: str):
    options = []
    for x, y in zip(s1, s2):
        opt = _MUL[x][y]
        if not opt:
            return []
        options.append(opt)
    out = []
    for combo in itertools.product(*options):
        coeff = 1.0
        chars = []
        for sym, c in combo:
            coeff *= c
            chars.append(sym)
        out.append(("".join(chars), coeff))
    return out


class PauliPolynomial:
    """Complex linear combination of symbol strings on ``n_sites`` qubits.

    Stored in canonical form: no zero coefficients. Instances are treated as
    immutable; arithmetic returns new objects.
    """

    __slots__ = ("n_sites", "terms")

    def __init__(self, n_sites: int, terms: Optional[Mapping[str, complex]] = None):
        if n_sites < 1:
            raise ValueError("n_sites must be positive")
        self.n_sites = int(n_sites)
        clean: Dict[str, complex] = {}
        for s, c in (terms or {}).items():
            s = parse_string(s)
            if len(s) != self.n_sites:
                raise ValueError(f"string {s!r} has length {len(s)}, expected {self.n_sites}")
            c = complex(c)
            if c != 0:
                clean[s] = clean.get(s, 0) + c
        self.terms = {s: c for s, c in clean.items() if c != 0}

    # construction -------------------------------------------------------

    @classmethod
    def zero(cls, n_sites: int) -> "PauliPolynomial":
        return cls(n_sites)

    @classmethod
    def identity(cls, n_sites: int, coeff: complex = 1.0) -> "PauliPolynomial":
        return cls(n_sites, {"I" * n_sites: coeff})

    @classmethod
    def single(cls, n_sites: int, ops: Mapping[int, str], coeff: complex = 1.0) -> "PauliPolynomial":
        chars = ["I"] * n_sites
        for site, sym in ops.items():
            chars[site] = parse_string([sym])
        return cls(n_sites, {"".join(chars): coeff})

    @classmethod
    def from_xyz(cls, n_sites: int, terms: Mapping[str, complex]) -> "PauliPolynomial":
        """Build from Pauli labels over I, X, Y, Z (X = a + a^dag, Y = i(a^dag - a))."""
        expand = {"I": [("I", 1)], "Z": [("Z", 1)], "X": [("+", 1), ("-", 1)], "Y": [("+", -1j), ("-", 1j)]}
        acc: Dict[str, complex] = defaultdict(complex)
        for label, c in terms.items():
            if len(label) != n_sites:
                raise ValueError(f"label {label!r} does not have {n_sites} sites")
            for combo in itertools.product(*(expand[ch] for ch in label)):
                coeff = complex(c)
                for _, f in combo:
                    coeff *= f
                acc["".join(sym for sym, _ in combo)] += coeff
        return cls(n_sites, acc)

    def to_xyz(self) -> Dict[str, complex]:
        """Coefficients in the Pauli basis (a = (X + iY)/2, a^dag = (X - iY)/2)."""
        expand = {"I": [("I", 1)], "Z": [("Z", 1)], "+": [("X", 0.5), ("Y", 0.5j)], "-": [("X", 0.5), ("Y", -0.5j)]}
        acc: Dict[str, complex] = defaultdict(complex)
        for s, c in self.terms.items():
            for combo in itertools.product(*(expand[ch] for ch in s)):
                coeff = c
                for _, f in combo:
                    coeff *= f
                acc["".join(sym for sym, _ in combo)] += coeff
        return {k: v for k, v in acc.items() if v != 0}

    # arithmetic ---------------------------------------------------------

    def _check(self, other: "PauliPolynomial"):
        if other.n_sites != self.n_sites:
            raise ValueError("polynomials act on different numbers of sites")

    def __add__(self, other):
        if not isinstance(other, PauliPolynomial):
            return NotImplemented
        self._check(other)
        acc = dict(self.terms)
        for s, c in other.terms.items():
            acc[s] = acc.get(s, 0) + c
        return PauliPolynomial(self.n_sites, acc)

    def __neg__(self):
        return PauliPolynomial(self.n_sites, {s: -c for s, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, PauliPolynomial):
            return NotImplemented
        return self + (-other)

    def scale(self, c: complex) -> "PauliPolynomial":
        if c == 0:
            return PauliPolynomial(self.n_sites)
        return PauliPolynomial(self.n_sites, {s: c * v for s, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, PauliPolynomial):
            return self @ other
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return NotImplemented

    def __matmul__(self, other: "PauliPolynomial") -> "PauliPolynomial":
        self._check(other)
        acc: Dict[str, complex] = defaultdict(complex)
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                for s, f in _mul_strings(s1, s2):
                    acc[s] += c1 * c2 * f
        return PauliPolynomial(self.n_sites, acc)

    def dagger(self) -> "PauliPolynomial":
        return PauliPolynomial(
            self.n_sites, {"".join(_DAGGER[ch] for ch in s): np.conj(c) for s, c in self.terms.items()}
        )

    def is_hermitian(self, atol: float = 0.0) -> bool:
        return (self - self.dagger()).max_abs() <= atol

    # inspection ---------------------------------------------------------

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __repr__(self):
        body = " + ".join(f"({c:.6g}) {s}" for s, c in sorted(self.terms.items())[:6])
        more = " + ..." if len(self.terms) > 6 else ""
        return f"PauliPolynomial(n_sites={self.n_sites}, {body or '0'}{more})"

    def __eq__(self, other):
        if not isinstance(other, PauliPolynomial):
            return NotImplemented
        return self.n_sites == other.n_sites and self.terms == other.terms

    def coefficient(self, s) -> complex:
        return self.terms.get(parse_string(s), 0j)

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def allclose(self, other: "PauliPolynomial", atol: float = 1e-12) -> bool:
        return (self - other).max_abs() <= atol

    def chop(self, atol: float) -> "PauliPolynomial":
        return PauliPolynomial(self.n_sites, {s: c for s, c in self.terms.items() if abs(c) > atol})

    def charges(self) -> set:
        return {charge_of_string(s) for s in self.terms}

    def inner(self, other: "PauliPolynomial") -> complex:
        """Coefficient-space inner product sum conj(c1) c2."""
        return sum(np.conj(c) * other.terms.get(s, 0) for s, c in self.terms.items())

    # dense --------------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        return coefficients_to_dense(self.coefficient_tensor())

    def coefficient_tensor(self) -> np.ndarray:
        if self.n_sites > MAX_DENSE_SITES:
            raise ValueError(f"dense form limited to {MAX_DENSE_SITES} sites")
        t = np.zeros((4,) * self.n_sites, complex)
        for s, c in self.terms.items():
            t[tuple(SYMBOLS.index(ch) for ch in s)] = c
        return t

    @classmethod
    def from_dense(cls, m: np.ndarray, atol: float = 1e-14) -> "PauliPolynomial":
        m = np.asarray(m)
        n = int(round(np.log2(m.shape[0])))
        if m.shape != (2 ** n, 2 ** n):
            raise ValueError("dense matrix must be 2^n x 2^n")
        return cls.from_tensor(dense_to_coefficients(m), atol)

    @classmethod
    def from_tensor(cls, t: np.ndarray, atol: float = 1e-14) -> "PauliPolynomial":
        n = t.ndim
        idx = np.argwhere(np.abs(t) > atol)
        terms = {"".join(SYMBOLS[i] for i in row): t[tuple(row)] for row in idx}
        return cls(n, terms)

    # serialisation ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "terms": [{"string": s, "re": c.real, "im": c.imag} for s, c in sorted(self.terms.items())],
        }

    @classmethod
    def from_json(cls, obj) -> "PauliPolynomial":
        if isinstance(obj, str):
            obj = json.loads(obj)
        terms: Dict[str, complex] = defaultdict(complex)
        for t in obj["terms"]:
            terms[parse_string(t["string"])] += complex(t["re"], t["im"])
        return cls(int(obj["n_sites"]), terms)


def commutator(a: PauliPolynomial, b: PauliPolynomial) -> PauliPolynomial:
    return a @ b - b @ a


def double_commutator(v: PauliPolynomial, o: PauliPolynomial, w: PauliPolynomial) -> PauliPolynomial:
    """[[v, o], w]"""
    return commutator(commutator(v, o), w)


def z_field(n_sites: int, coeff: float = 1.0) -> PauliPolynomial:
    """V = coeff * sum_j Z_j."""
    return PauliPolynomial(n_sites, {"I" * j + "Z" + "I" * (n_sites - j - 1): coeff for j in range(n_sites)})


def translation_sum(local: PauliPolynomial, n_sites: int, periodic: bool = True) -> PauliPolynomial:
    """Sum of the translates of a local polynomial across a chain."""
    w = local.n_sites
    if w > n_sites:
        raise ValueError("local pattern wider than the chain")
    acc: Dict[str, complex] = defaultdict(complex)
    last = n_sites if periodic else n_sites - w + 1
    for j in range(last):
        for s, c in local.terms.items():
            chars = ["I"] * n_sites
            for k, ch in enumerate(s):
                chars[(j + k) % n_sites] = ch
            acc["".join(chars)] += c
    return PauliPolynomial(n_sites, acc)


def charge_decompose(p: PauliPolynomial) -> Dict[int, PauliPolynomial]:
    """Split p into components of definite charge."""
    parts: Dict[int, Dict[str, complex]] = defaultdict(dict)
    for s, c in p.terms.items():
        parts[charge_of_string(s)][s] = c
    return {q: PauliPolynomial(p.n_sites, t) for q, t in sorted(parts.items())}


def recombine(components: Mapping[int, PauliPolynomial], n_sites: int) -> PauliPolynomial:
    out = PauliPolynomial(n_sites)
    for comp in components.values():
        out = out + comp
    return out


class NotEigenoperatorError(ValueError):
    pass


def eigenoperator_check(V: PauliPolynomial, O: PauliPolynomial, atol: float = 1e-12) -> float:
    """Return lambda with [[V, O], V] = lambda O, computed in the string algebra."""
    if not O.terms:
        raise ValueError("O is zero")
    w = double_commutator(V, O, V)
    lam = (O.inner(w) / O.inner(O)).real
    resid = (w - O.scale(lam)).max_abs()
    if resid > atol * max(1.0, abs(lam)):
        raise NotEigenoperatorError(f"residual {resid:.3e} after removing lambda = {lam:.6g}")
    return float(lam)


def all_strings(n_sites: int) -> Iterable[str]:
    return ("".join(p) for p in itertools.product(SYMBOLS, repeat=n_sites))


# dense conversions ------------------------------------------------------

def dense_to_coefficients(m: np.ndarray) -> np.ndarray:
    """Symbol-basis coefficient tensor of shape (4,)*n for a 2^n x 2^n matrix."""
    n = int(round(np.log2(m.shape[0])))
    t = np.asarray(m).reshape((2,) * (2 * n))
    # interleave (row_0, col_0, row_1, col_1, ...) then merge each pair
    perm = [ax for j in range(n) for ax in (j, n + j)]
    t = t.transpose(perm).reshape((4,) * n)
    for j in range(n):
        t = np.moveaxis(np.tensordot(_TO_SYM, t, axes=([1], [j])), 0, j)
    return t


def coefficients_to_dense(t: np.ndarray) -> np.ndarray:
    n = t.ndim
    for j in range(n):
        t = np.moveaxis(np.tensordot(_TO_UNIT, t, axes=([1], [j])), 0, j)
    t = t.reshape((2,) * (2 * n))
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return t.transpose(perm).reshape(2 ** n, 2 ** n)
