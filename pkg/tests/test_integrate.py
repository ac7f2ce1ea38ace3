import math

import numpy as np
import pytest

from bracketflow.integrate import IntegratorConfig, InvariantBreach, StepLimitError, integrate


def decay(_b, y):
    return -y


@pytest.mark.parametrize("cfg", [IntegratorConfig(), IntegratorConfig("rk4-fixed", step=1e-3)])
def test_exponential_decay(cfg):
    states, diag = integrate(decay, np.array([1.0, 2.0]), [0.0, 0.5, 1.0], cfg)
    assert np.allclose(states[-1], np.array([1.0, 2.0]) * math.exp(-1), rtol=1e-9)
    assert np.allclose(states[1], np.array([1.0, 2.0]) * math.exp(-0.5), rtol=1e-9)
    assert diag.b_reached == 1.0


def test_rotation_conserves_radius():
    def rot(_b, y):
        return np.array([-y[1], y[0]])

    states, _ = integrate(rot, np.array([1.0, 0.0]), np.linspace(0, 10, 11), IntegratorConfig(tolerance=1e-12))
    assert abs(np.hypot(*states[-1]) - 1) < 1e-10
    assert np.allclose(states[-1], [math.cos(10), math.sin(10)], atol=1e-9)


def test_step_budget():
    with pytest.raises(StepLimitError) as err:
        integrate(decay, np.ones(1), [0.0, 100.0], IntegratorConfig("rk4-fixed", step=1e-3, max_steps=10))
    assert err.value.steps == 10


def test_monitor_can_abort():
    def monitor(b, y):
        if b > 0.5:
            raise InvariantBreach(b, "test", 1.0, 0.1)

    with pytest.raises(InvariantBreach):
        integrate(decay, np.ones(1), [0.0, 0.25, 0.75], IntegratorConfig(), monitor)


@pytest.mark.parametrize("kw", [{"method": "euler"}, {"step": 0}, {"tolerance": -1}, {"max_steps": 0}, {"atol": -1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_grid_must_ascend():
    with pytest.raises(ValueError):
        integrate(decay, np.ones(1), [0.0, 1.0, 0.5])


def test_zero_length_segment():
    states, _ = integrate(decay, np.ones(1), [0.0, 0.0, 1.0])
    assert states[1][0] == 1.0
