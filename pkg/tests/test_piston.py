"""Tests for snapcorr.piston."""

from __future__ import annotations

import math
from unittest.mock import patch

import numpy as np
import pytest

from snapcorr.errors import ConfigError, GasLawDomainError, InputError
from snapcorr.piston import (
    DEFAULT_SCENARIO,
    PistonParams,
    PistonState,
    Scenario,
    energy,
    expand_grid,
    integrate,
    pressure,
    rhs,
    sample_snapshots,
)
from snapcorr.progress import set_quiet
from snapcorr.spectral import kl_expand, truncate, truncation_error


@pytest.fixture(autouse=True)
def _quiet():
    set_quiet(True)
    yield
    set_quiet(False)


def _make_params(**overrides) -> PistonParams:
    values = {"m": 1.0, "k": 1.0, "S": 0.1, "c0": 10.0, "gamma": 1.4, "p0": 1.0}
    values.update(overrides)
    return PistonParams(**values)


def _range(start: float, stop: float, count: int) -> dict:
    return {"start": start, "stop": stop, "count": count}


# ---------------------------------------------------------------------------
# Parameters and model functions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("field,value", [
    ("m", 0.0), ("k", -1.0), ("c0", 0.0), ("p0", -0.5), ("S", -0.1), ("gamma", 1.0),
])
def test_params_reject_inadmissible_values(field, value):
    with pytest.raises(InputError) as excinfo:
        _make_params(**{field: value})
    assert excinfo.value.field == field


def test_params_accept_zero_coupling():
    assert _make_params(S=0.0).S == 0.0


def test_gamma_coordinate_is_shifted():
    p = PistonParams.from_coordinates(1.0, 2.0, 0.1, 10.0, 0.4)
    assert p.gamma == pytest.approx(1.4)
    assert p.coordinates()[4] == pytest.approx(0.4)


def test_pressure_at_rest_is_ambient():
    p = _make_params(p0=2.5)
    assert pressure(PistonState(0.3, 0.0), p) == 2.5


@pytest.mark.parametrize("seed", range(5))
def test_pressure_matches_formula(seed):
    rng = np.random.default_rng(seed)
    p = _make_params(gamma=float(rng.uniform(1.1, 1.7)), c0=float(rng.uniform(5, 15)))
    v = float(rng.uniform(-3.0, 3.0))
    power = 2.0 * p.gamma / (p.gamma - 1.0)
    expected = p.p0 * math.pow(1.0 + (p.gamma - 1.0) / 2.0 * v / p.c0, power)
    got = pressure(PistonState(0.0, v), p)
    assert got == pytest.approx(expected, rel=1e-14)
    assert got >= 0.0


@pytest.mark.parametrize("seed", range(5))
def test_rhs_matches_formula(seed):
    rng = np.random.default_rng(seed)
    p = _make_params(m=float(rng.uniform(0.5, 2)), k=float(rng.uniform(0.5, 2)))
    w, v = rng.uniform(-1.0, 1.0, 2)
    d = rhs(PistonState(w, v), p)
    base = 1.0 + (p.gamma - 1.0) / 2.0 * v / p.c0
    accel = -p.k / p.m * w + p.S * p.p0 / p.m * (base ** (2 * p.gamma / (p.gamma - 1)) - 1.0)
    assert d.w == v
    assert d.v == pytest.approx(accel, rel=1e-13, abs=1e-14)


def test_gas_law_domain_error():
    p = _make_params(c0=10.0, gamma=1.4)
    with pytest.raises(GasLawDomainError) as excinfo:
        pressure(PistonState(0.0, -60.0), p, t=1.5)
    assert excinfo.value.t == 1.5
    assert "t=1.5" in str(excinfo.value)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def test_equilibrium_is_preserved():
    tr = integrate(_make_params(), PistonState(0.0, 0.0), 10.0, 1e-3)
    assert tr.w.size == 10_001
    assert np.max(np.abs(tr.w)) <= 1e-12
    assert np.max(np.abs(tr.v)) <= 1e-12


def test_uncoupled_oscillator_is_harmonic():
    tr = integrate(_make_params(S=0.0), PistonState(1.0, 0.0), 10.0, 1e-3)
    assert tr.w[-1] == pytest.approx(math.cos(10.0), abs=1e-6)
    np.testing.assert_allclose(tr.w, np.cos(tr.times), atol=1e-6)


def test_uncoupled_energy_is_conserved():
    p = _make_params(S=0.0, m=2.0, k=3.0)
    tr = integrate(p, PistonState(1.0, 0.5), 10.0, 1e-3)
    e0 = energy(PistonState(tr.w[0], tr.v[0]), p)
    e1 = energy(PistonState(tr.w[-1], tr.v[-1]), p)
    assert abs(e1 - e0) <= 1e-8 * e0


def test_rk4_convergence_order():
    p = _make_params(S=0.5, c0=5.0)
    s0 = PistonState(1.0, 0.0)
    coarse, mid, fine = (integrate(p, s0, 2.0, dt).w for dt in (0.1, 0.05, 0.025))
    diff1 = np.max(np.abs(coarse - mid[::2]))
    diff2 = np.max(np.abs(mid[::2] - fine[::4]))
    order = math.log2(diff1 / diff2)
    assert 3.7 <= order <= 4.3


def test_uncoupled_error_order_against_exact_solution():
    p = _make_params(S=0.0)
    s0 = PistonState(1.0, 0.0)
    errors = [abs(integrate(p, s0, 1.0, dt).w[-1] - math.cos(1.0)) for dt in (0.1, 0.05)]
    assert 3.7 <= math.log2(errors[0] / errors[1]) <= 4.3


def test_pressure_trajectory_is_positive():
    tr = integrate(_make_params(S=0.3), PistonState(1.0, 0.0), 5.0, 1e-2)
    assert np.all(tr.pressure > 0)
    assert tr.pressure[0] == 1.0


@pytest.mark.parametrize("T,dt", [(1.0, 0.0), (0.001, 0.01), (1.0, float("nan"))])
def test_integrate_rejects_bad_step(T, dt):
    with pytest.raises(InputError):
        integrate(_make_params(), PistonState(1.0, 0.0), T, dt)


def test_integrate_ends_exactly_at_horizon():
    tr = integrate(_make_params(), PistonState(1.0, 0.0), 1.0, 0.3)
    assert tr.times.size == 5
    assert tr.times[-1] == 1.0
    np.testing.assert_allclose(tr.times[:4], [0.0, 0.3, 0.6, 0.9], rtol=1e-15)
    assert tr.pressure.size == 5


def test_shortened_last_step_keeps_accuracy():
    tr = integrate(_make_params(S=0.0), PistonState(1.0, 0.0), 1.0, 0.003)
    assert tr.times[-1] == 1.0
    assert tr.times[-2] == pytest.approx(0.999)
    assert tr.w[-1] == pytest.approx(math.cos(1.0), abs=1e-8)


def test_integrate_reports_gas_law_time():
    with pytest.raises(GasLawDomainError) as excinfo:
        integrate(_make_params(), PistonState(0.0, -60.0), 1.0, 0.1)
    assert excinfo.value.t == 0.0


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def test_sample_snapshots_shapes_and_weights():
    grid = [_make_params(k=k) for k in (0.5, 1.0, 2.0)]
    ce = sample_snapshots(grid, PistonState(1.0, 0.0), 1.0, 0.01, stride=10)
    assert ce.sub1.data.shape == (11, 3)
    assert ce.sub2.data.shape == (11, 3)
    np.testing.assert_allclose(ce.shared_measure.weights, 1 / 3)
    assert ce.shared_measure.points[2].coords[1] == 2.0


def test_sample_snapshots_order_independent_of_workers():
    grid = [_make_params(k=k, c0=c) for k in (0.5, 1.5) for c in (5.0, 10.0)]
    s0 = PistonState(1.0, 0.0)
    serial = sample_snapshots(grid, s0, 1.0, 0.01, stride=5)
    parallel = sample_snapshots(grid, s0, 1.0, 0.01, stride=5, workers=3)
    assert np.array_equal(serial.sub1.data, parallel.sub1.data)
    assert np.array_equal(serial.sub2.data, parallel.sub2.data)


def test_sample_snapshots_tags_failing_parameter():
    grid = [_make_params(c0=10.0), _make_params(c0=5.0)]
    with pytest.raises(GasLawDomainError) as excinfo:
        sample_snapshots(grid, PistonState(0.0, -40.0), 0.1, 0.01)
    assert excinfo.value.param_index == 1
    assert str(excinfo.value).startswith("[parameter 1, t=0]")


def test_sample_snapshots_tags_diverging_parameter():
    grid = [_make_params(), _make_params(k=2.0)]
    with patch("snapcorr.piston.integrate", side_effect=InputError("integration diverged at t=1")):
        with pytest.raises(InputError) as excinfo:
            sample_snapshots(grid, PistonState(1.0, 0.0), 1.0, 0.1)
    assert str(excinfo.value) == "[parameter 0] integration diverged at t=1"


def test_sample_snapshots_rejects_empty_grid():
    with pytest.raises(InputError, match="empty"):
        sample_snapshots([], PistonState(1.0, 0.0), 1.0, 0.1)


def test_generated_ensemble_supports_pod():
    grid = expand_grid({
        "m": 1.0, "k": _range(0.5, 2.0, 3), "S": 0.1,
        "c0": _range(5.0, 15.0, 3), "gamma_minus_one": 0.4,
    })
    ce = sample_snapshots(grid, PistonState(1.0, 0.0), 4.0, 0.01, stride=10)
    assert ce.sub1.data.shape == (41, 9)
    kl = kl_expand(ce.sub1)
    assert np.all(np.diff(kl.singular_values) <= 0)
    assert kl.singular_values[-1] < 0.05 * kl.singular_values[0]
    for n in range(kl.rank + 1):
        t = truncate(kl, n=n)
        measured = truncation_error(ce.sub1, t)
        assert measured == pytest.approx(t.discarded_energy, rel=1e-10, abs=1e-12 * kl.eigenvalues[0])


# ---------------------------------------------------------------------------
# Scenarios and grids
# ---------------------------------------------------------------------------


def test_default_scenario():
    s = DEFAULT_SCENARIO
    assert s.grid[0].gamma == 1.4
    assert (s.T, s.dt, s.stride) == (20.0, 1e-3, 100)
    assert s.observation_times.size == 201


def test_scenario_observation_times():
    s = Scenario(grid=(_make_params(),), s0=PistonState(1.0, 0.0), T=1.0, dt=0.1, stride=5)
    np.testing.assert_allclose(s.observation_times, [0.0, 0.5, 1.0])


def test_scenario_observation_times_end_at_horizon():
    s = Scenario(grid=(_make_params(),), s0=PistonState(1.0, 0.0), T=1.0, dt=0.3, stride=2)
    np.testing.assert_allclose(s.observation_times, [0.0, 0.6, 1.0], rtol=1e-15)


def test_expand_grid_row_major_order():
    grid = expand_grid({
        "m": 1.0, "k": _range(1.0, 2.0, 2), "S": 0.0,
        "c0": _range(5.0, 15.0, 3), "gamma_minus_one": 0.4,
    }, p0=2.0)
    assert len(grid) == 6
    assert [(p.k, p.c0) for p in grid[:3]] == [(1.0, 5.0), (1.0, 10.0), (1.0, 15.0)]
    assert grid[3].k == 2.0
    assert all(p.p0 == 2.0 for p in grid)


def test_expand_grid_list_form():
    point = {"m": 1.0, "k": 1.0, "S": 0.1, "c0": 10.0, "gamma_minus_one": 0.4}
    grid = expand_grid([point, dict(point, k=2.0)])
    assert [p.k for p in grid] == [1.0, 2.0]


@pytest.mark.parametrize("layout,field", [
    ([{"m": 1.0, "S": 0.1, "c0": 10.0, "gamma_minus_one": 0.4}], "grid[0].k"),
    ({"m": 1.0, "k": {"start": 1.0, "stop": 2.0, "count": 0}, "S": 0.1,
      "c0": 10.0, "gamma_minus_one": 0.4}, "grid.k.count"),
    ({"m": 1.0, "k": 1.0, "S": 0.1, "c0": "ten", "gamma_minus_one": 0.4}, "grid.c0"),
    ([{"m": -1.0, "k": 1.0, "S": 0.1, "c0": 10.0, "gamma_minus_one": 0.4}], "grid[0]"),
    ({"m": 1.0}, "grid.k"),
    ([], "grid"),
])
def test_expand_grid_errors_name_the_field(layout, field):
    with pytest.raises(ConfigError) as excinfo:
        expand_grid(layout)
    assert excinfo.value.field == field
