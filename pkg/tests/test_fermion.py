import json
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bracketflow.fermion import (
    FlowTrajectory,
    flow_potential,
    imaginary_time_bound,
    imaginary_time_term_norms,
    imaginary_time_terms,
    integrate_flow,
    lightcone_bound,
    lightcone_scales,
    verify_lemma1,
)
from bracketflow.integrate import IntegratorConfig, InvariantBreach
from bracketflow.lattice import CouplingMatrix, build_chain, coupling_range, locality_upper, operator_norm, random_banded, spectrum


def pair(n=8, R=2, seed=0, symmetry="antisymmetric"):
    rng = np.random.default_rng(seed)
    return random_banded(n, R, rng, symmetry), random_banded(n, R, rng, symmetry)


def test_fixed_points_are_constant():
    h, _ = pair()
    traj = integrate_flow(h, h, [0, 0.5, 1])
    assert all(np.array_equal(s.entries, h.entries) for s in traj.snapshots)
    d1 = CouplingMatrix(np.diag([1.0, 2, 3]), "symmetric")
    d2 = CouplingMatrix(np.diag([0.0, -1, 5]), "symmetric")
    traj = integrate_flow(d1, d2, [0, 1])
    assert np.array_equal(traj.snapshots[-1].entries, d1.entries)


def test_isospectral_against_scipy_oracle():
    h, v = pair(8, 3, seed=11)
    traj = integrate_flow(h, v, [0.0, 0.5, 1.0], IntegratorConfig(tolerance=1e-11))

    def f(_b, y):
        m = y.reshape(8, 8)
        x = v.entries @ m - m @ v.entries
        return 4 * (x @ m - m @ x).ravel()

    ref = solve_ivp(f, [0, 1], h.entries.ravel(), method="DOP853", rtol=1e-12, atol=1e-13)
    assert np.allclose(traj.snapshots[-1].entries, ref.y[:, -1].reshape(8, 8), atol=1e-8)
    ev0 = np.linalg.eigvalsh(1j * h.entries)
    ev1 = np.linalg.eigvalsh(1j * traj.snapshots[-1].entries)
    assert np.max(np.abs(ev1 - ev0)) < 1e-8
    assert max(traj.diagnostics["spectrum_drift"]) < 1e-8


@pytest.mark.parametrize("symmetry", ["antisymmetric", "symmetric"])
def test_potential_is_monotone(symmetry):
    h, v = pair(10, 2, seed=5, symmetry=symmetry)
    grid = np.linspace(0, 2, 41)
    traj = integrate_flow(h, v, grid, scale=4.0 if symmetry == "antisymmetric" else 1.0)
    pot = [flow_potential(s, v) for s in traj.snapshots]
    assert np.all(np.diff(pot) <= 1e-8)
    assert pot[-1] < pot[0]


def test_potential_examples():
    h, v = pair()
    assert flow_potential(v, v) == pytest.approx(4 * np.sum(v.entries ** 2))
    minus = CouplingMatrix(-v.entries, "antisymmetric")
    assert flow_potential(minus, v) == 0.0
    s = CouplingMatrix(v.entries @ v.entries, "symmetric")
    assert flow_potential(s, s) == 0.0
    ms = CouplingMatrix(-s.entries, "symmetric")
    assert flow_potential(ms, s) == pytest.approx(4 * np.sum(s.entries ** 2))


def test_invariant_breach_aborts():
    h, v = pair(6, 2, seed=2)
    with pytest.raises(InvariantBreach):
        integrate_flow(h, v, [0, 1.0], IntegratorConfig("rk4-fixed", step=0.5), invariant_tol=1e-12)


def test_input_validation():
    h, v = pair()
    with pytest.raises(ValueError):
        integrate_flow(h, v, [0.5, 1.0])
    with pytest.raises(ValueError):
        integrate_flow(h, v, [0, 1.0, 0.5])
    with pytest.raises(ValueError):
        integrate_flow(h, CouplingMatrix(np.eye(8), "symmetric"), [0, 1])


def test_trajectory_json_round_trip():
    h, v = pair(5, 1)
    traj = integrate_flow(h, v, [0, 0.3])
    back = FlowTrajectory.from_json(json.loads(json.dumps(traj.to_json())))
    assert np.array_equal(back.at(0.3).entries, traj.at(0.3).entries)
    with pytest.raises(KeyError):
        traj.at(0.2)


def test_imaginary_time_examples():
    h, _ = pair(12, 2, seed=9)
    norms = imaginary_time_term_norms(h, 0.0, 5)
    assert norms == [1.0, 0, 0, 0, 0, 0]
    assert imaginary_time_term_norms(h, 0.7, 1)[1] == pytest.approx(1.4 * operator_norm(h))
    with pytest.raises(ValueError):
        imaginary_time_term_norms(CouplingMatrix(np.eye(3), "symmetric"), 1.0, 3)
    with pytest.raises(ValueError):
        imaginary_time_terms(h, -1.0, 3)


def test_imaginary_time_terms_sum_to_exponential():
    from scipy.linalg import expm

    h, _ = pair(10, 2, seed=4)
    terms = imaginary_time_terms(h, 0.5, 40)
    assert np.allclose(sum(terms), expm(h.entries), atol=1e-13)


def test_imaginary_time_bound_and_support():
    n, R = 64, 2
    lat = build_chain(n)
    h = random_banded(n, R, np.random.default_rng(1), lat=lat)
    J = operator_norm(h)
    terms = imaginary_time_terms(h, 1.0, 20)
    for m, t in enumerate(terms):
        assert operator_norm(t) <= imaginary_time_bound(J, 1.0, m) * (1 + 1e-12)
    assert locality_upper(terms[20], lat, 20 * R) <= 1e-12


def test_lightcone_scales_and_bound():
    assert lightcone_scales(1, 4) == [1, 3, 7, 15, 31]
    assert lightcone_scales(2, 2) == [2, 6, 14]
    assert lightcone_bound(1.0, 1.0, 3) == pytest.approx(512 / 6)
    assert lightcone_bound(1.0, 0.0, 0) == 1.0


def test_lightcone_at_zero_flow_time():
    n = 64
    lat = build_chain(n)
    h, v = pair(n, 2, seed=3)
    rep = verify_lemma1(h, v, lat, [0.0])
    assert rep.passed and rep.scales_exact
    assert rep.scales == [2, 6, 14, 30, 62]
    assert np.all(rep.measured[0, 1:] == 0)


def test_lightcone_report_csv():
    n = 48
    lat = build_chain(n)
    h, v = pair(n, 1, seed=6)
    rep = verify_lemma1(h, v, lat, [0.25, 0.5], scale_limit=n / 4)
    assert rep.passed
    lines = rep.to_csv().splitlines()
    assert lines[0] == "k,R_k,B,measured,bound,pass"
    assert len(lines) == 1 + 2 * len(rep.scales)
    assert all(Rk < n / 4 for Rk in rep.scales)


def test_lightcone_requires_range():
    lat = build_chain(8)
    z = CouplingMatrix(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        verify_lemma1(z, z, lat, [0.5])
