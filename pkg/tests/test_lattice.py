import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bracketflow.lattice import (
    CouplingMatrix,
    build_chain,
    coupling_range,
    double_bracket_rhs,
    locality_lower,
    locality_profile,
    locality_upper,
    masked_norm,
    operator_norm,
    random_banded,
    spectrum,
)


def test_distances():
    assert build_chain(4, "open").distance(0, 3) == 3
    assert build_chain(6, "periodic").distance(0, 5) == 1
    assert build_chain(2, "open").distance(0, 1) == 1
    assert build_chain(7, "periodic").diameter == 3
    with pytest.raises(ValueError):
        build_chain(1)
    with pytest.raises(ValueError):
        build_chain(5, "torus")


def test_coupling_range_examples():
    lat = build_chain(8, "open")
    assert coupling_range(np.zeros((8, 8)), lat) == 0
    m = np.zeros((8, 8))
    m[0, 5], m[5, 0] = 0.3, -0.3
    assert coupling_range(m, lat) == 5
    with pytest.raises(ValueError):
        coupling_range(np.zeros((4, 4)), lat)


def test_operator_norm_examples():
    assert operator_norm(np.zeros((3, 3))) == 0.0
    m = np.zeros((5, 5))
    m[1, 3], m[3, 1] = 0.7, -0.7
    assert operator_norm(m) == pytest.approx(0.7)
    # uniform periodic hopping: block spectrum +-2 cos(theta), maximal 2
    n = 16
    h = np.zeros((n, n))
    for x in range(n):
        h[x, (x + 1) % n] = h[(x + 1) % n, x] = 1.0
    assert operator_norm(h) == pytest.approx(2.0, abs=1e-12)


def test_coupling_matrix_validation_and_json():
    with pytest.raises(ValueError):
        CouplingMatrix(np.ones((2, 2)), "antisymmetric")
    with pytest.raises(ValueError):
        CouplingMatrix(np.ones((2, 3)), "symmetric")
    with pytest.raises(ValueError):
        CouplingMatrix(np.eye(2), "hermitian")
    with pytest.raises(ValueError):
        CouplingMatrix(np.array([[0, np.nan], [np.nan, 0]]), "symmetric")
    m = random_banded(6, 2, np.random.default_rng(1))
    back = CouplingMatrix.from_json(json.dumps(m.to_json()))
    assert np.array_equal(back.entries, m.entries) and back.symmetry == m.symmetry
    with pytest.raises(ValueError):
        m.entries[0, 1] = 1.0
    with pytest.raises(ValueError):
        CouplingMatrix.from_json({"n": 3, "symmetry": "symmetric", "entries": [0.0] * 4})


def naive_double_bracket(v, h):
    n = len(v)
    c = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            c[i, j] = sum(v[i, k] * h[k, j] - h[i, k] * v[k, j] for k in range(n))
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = sum(c[i, k] * h[k, j] - h[i, k] * c[k, j] for k in range(n))
    return out


def test_double_bracket_against_naive_products():
    rng = np.random.default_rng(3)
    v = random_banded(4, 3, rng).entries
    h = random_banded(4, 3, rng).entries
    assert np.allclose(double_bracket_rhs(v, h, 1.0), naive_double_bracket(v, h), atol=1e-14)
    assert np.allclose(double_bracket_rhs(v, h), 4 * naive_double_bracket(v, h), atol=1e-14)


def test_double_bracket_trivial_cases():
    rng = np.random.default_rng(4)
    h = random_banded(5, 2, rng)
    assert not np.any(double_bracket_rhs(h, h))
    assert not np.any(double_bracket_rhs(np.diag([1.0, 2, 3]), np.diag([3.0, 1, 2])))
    with pytest.raises(ValueError):
        double_bracket_rhs(np.eye(2), np.eye(3))


@pytest.mark.parametrize("symmetry", ["antisymmetric", "symmetric"])
def test_double_bracket_keeps_symmetry_class(symmetry):
    rng = np.random.default_rng(5)
    v = random_banded(7, 2, rng, symmetry)
    h = random_banded(7, 2, rng, symmetry)
    out = double_bracket_rhs(v, h)
    sign = -1 if symmetry == "antisymmetric" else 1
    assert np.array_equal(out, sign * out.T)


def _single_entry():
    m = np.zeros((8, 8))
    m[0, 5], m[5, 0] = 0.3, -0.3
    return CouplingMatrix(m, "antisymmetric")


def test_locality_examples():
    lat = build_chain(8, "open")
    m = _single_entry()
    assert locality_lower(m, lat, 4) == pytest.approx(0.3)
    assert locality_upper(m, lat, 4) == pytest.approx(0.3)
    assert locality_upper(m, lat, 5) == 0.0
    assert locality_lower(m, lat, 5) == 0.0
    d = np.diag(np.arange(8.0))
    assert locality_lower(d, lat, 1) == 0.0
    assert locality_upper(d, lat, 0.5) == 0.0
    with pytest.raises(ValueError):
        locality_upper(d, lat, -1)


def exact_locality(a, lat, r):
    """Brute force over every support set S with T the sites farther than r."""
    n = lat.n
    dist = lat.distance_matrix()
    best = 0.0
    for mask in range(1, 2 ** n):
        S = [i for i in range(n) if mask >> i & 1]
        T = [j for j in range(n) if all(dist[i, j] > r for i in S)]
        if T:
            best = max(best, np.linalg.norm(a[np.ix_(S, T)], 2))
    return best


def interval_oracle(a, lat, r):
    """Largest submatrix norm over all (not only maximal) interval or arc pairs."""
    n = lat.n
    dist = lat.distance_matrix()
    if lat.periodic:
        arcs = [[(s + k) % n for k in range(L)] for s in range(n) for L in range(1, n)]
    else:
        arcs = [list(range(i, j + 1)) for i in range(n) for j in range(i, n)]
    best = 0.0
    for A in arcs:
        for B in arcs:
            if dist[np.ix_(A, B)].min() > r:
                best = max(best, np.linalg.norm(a[np.ix_(A, B)], 2))
    return best


@pytest.mark.parametrize("geometry", ["open", "periodic"])
def test_bracket_contains_exact_value(geometry):
    rng = np.random.default_rng(7)
    lat = build_chain(8, geometry)
    for trial in range(3):
        m = random_banded(8, 3, rng, "antisymmetric", lat)
        for r in range(0, lat.diameter + 1):
            lo, up = locality_lower(m, lat, r), locality_upper(m, lat, r)
            ex = exact_locality(m.entries, lat, r)
            assert lo <= ex + 1e-12
            assert ex <= up + 1e-12
            assert lo == pytest.approx(interval_oracle(m.entries, lat, r), abs=1e-13)


def test_profile_examples():
    lat = build_chain(12, "open")
    prof = locality_profile(np.zeros((12, 12)), lat, [0, 1, 2])
    assert not np.any(prof.lower) and not np.any(prof.upper)
    m = random_banded(12, 2, np.random.default_rng(0), lat=lat)
    prof = locality_profile(m, lat, range(0, 8))
    assert np.all(prof.upper[2:] == 0) and np.all(prof.lower[2:] == 0)
    assert prof.upper[0] > 0
    with pytest.raises(ValueError):
        locality_profile(m, lat, [2, 1])


def test_masked_norm_is_upper_estimate():
    lat = build_chain(10, "periodic")
    m = random_banded(10, 4, np.random.default_rng(2), lat=lat)
    for r in range(6):
        assert locality_upper(m, lat, r) <= masked_norm(m, lat, r) + 1e-15


def test_spectrum_classes():
    m = random_banded(6, 2, np.random.default_rng(8))
    ev = spectrum(m)
    assert np.allclose(ev, -ev[::-1])
    s = random_banded(6, 2, np.random.default_rng(8), "symmetric")
    assert np.allclose(spectrum(s), np.linalg.eigvalsh(s.entries))


banded = st.tuples(
    st.integers(4, 24),
    st.integers(0, 4),
    st.integers(0, 2 ** 32 - 1),
    st.sampled_from(["open", "periodic"]),
    st.sampled_from(["antisymmetric", "symmetric"]),
)


@settings(max_examples=30, deadline=None)
@given(banded)
def test_lower_never_exceeds_upper(params):
    n, R, seed, geometry, symmetry = params
    lat = build_chain(n, geometry)
    m = random_banded(n, R, np.random.default_rng(seed), symmetry, lat)
    prof = locality_profile(m, lat, range(lat.diameter + 1))
    assert np.all(prof.lower <= prof.upper * (1 + 1e-10) + 1e-14)
    assert np.all(np.diff(prof.lower) <= 1e-15)
    assert np.all(np.diff(prof.upper) <= 0)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(6, 32),
    st.integers(0, 3),
    st.integers(0, 3),
    st.integers(0, 4),
    st.integers(0, 4),
    st.integers(0, 2 ** 32 - 1),
    st.sampled_from(["open", "periodic"]),
)
def test_product_inequality(n, R1, R2, r1, r2, seed, geometry):
    lat = build_chain(n, geometry)
    rng = np.random.default_rng(seed)
    m1 = random_banded(n, R1, rng, "symmetric", lat, norm=None).entries
    m2 = random_banded(n, R2, rng, "antisymmetric", lat, norm=None).entries
    lhs = locality_upper(m1 @ m2, lat, r1 + r2)
    rhs = locality_upper(m1, lat, r1) * operator_norm(m2) + operator_norm(m1) * locality_upper(m2, lat, r2)
    assert lhs <= rhs + 1e-9
