"""Mass-spring system coupled to a gas-filled piston.

    w' = v
    v' = -(k/m) w + (S p0 / m) (1 + (gamma-1)/2 * v/c0)^(2 gamma/(gamma-1)) - S p0 / m

Integrated with fixed-step classical Runge-Kutta. Sampling over a
parameter grid yields a coupled ensemble: displacement histories (solid)
and pressure histories (gas) on the same observation times.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from snapcorr.coupled import CoupledEnsemble
from snapcorr.ensemble import ParameterPoint, SampledMeasure, SnapshotEnsemble
from snapcorr.errors import ConfigError, GasLawDomainError, InputError
from snapcorr.progress import Progress

COORDINATES = ("m", "k", "S", "c0", "gamma_minus_one")
STEP_RTOL = 1e-9


@dataclass(frozen=True)
class PistonParams:
    """Physical parameters; p0 is a constant of the scenario, not of mu."""

    m: float
    k: float
    S: float
    c0: float
    gamma: float
    p0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("m", "k", "S", "c0", "gamma", "p0"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InputError("must be finite", field=name)
            object.__setattr__(self, name, value)
        for name in ("m", "k", "c0", "p0"):
            if getattr(self, name) <= 0:
                raise InputError("must be > 0", field=name)
        if self.S < 0:
            raise InputError("must be >= 0", field="S")
        if self.gamma <= 1:
            raise InputError("must be > 1", field="gamma")

    @classmethod
    def from_coordinates(
        cls, m: float, k: float, S: float, c0: float,  # pylint: disable=invalid-name
        gamma_minus_one: float, p0: float = 1.0,
    ) -> "PistonParams":
        """Build from mu = (m, k, S, c0, gamma - 1)."""
        return cls(m, k, S, c0, float(gamma_minus_one) + 1.0, p0)

    def coordinates(self) -> tuple[float, ...]:
        """mu = (m, k, S, c0, gamma - 1)."""
        return (self.m, self.k, self.S, self.c0, self.gamma - 1.0)


@dataclass(frozen=True)
class PistonState:
    """Displacement w and velocity v."""

    w: float
    v: float

    def __post_init__(self) -> None:
        w, v = float(self.w), float(self.v)
        if not (math.isfinite(w) and math.isfinite(v)):
            raise InputError("piston state must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States and pressure at every integration step."""

    times: np.ndarray
    w: np.ndarray
    v: np.ndarray
    pressure: np.ndarray


def _base(v: float, p: PistonParams, t: float) -> float:
    base = 1.0 + 0.5 * (p.gamma - 1.0) * v / p.c0
    if not base > 0:
        raise GasLawDomainError(
            f"gas-law base 1 + (gamma-1)/2 * v/c0 = {base:.6g} is not positive"
            f" (v={v:.6g})",
            t=t,
        )
    return base


def pressure(s: PistonState, p: PistonParams, t: float = 0.0) -> float:
    """p0 (1 + (gamma-1)/2 * v/c0)^(2 gamma/(gamma-1))."""
    return p.p0 * _base(s.v, p, t) ** (2.0 * p.gamma / (p.gamma - 1.0))


def _accel(w: float, v: float, p: PistonParams, t: float) -> float:
    coupling = p.S * p.p0 / p.m
    power = 2.0 * p.gamma / (p.gamma - 1.0)
    return -(p.k / p.m) * w + coupling * _base(v, p, t) ** power - coupling


def rhs(s: PistonState, p: PistonParams, t: float = 0.0) -> PistonState:
    """Time derivative (w', v')."""
    return PistonState(s.v, _accel(s.w, s.v, p, t))


def energy(s: PistonState, p: PistonParams) -> float:
    """Mechanical energy m v^2 / 2 + k w^2 / 2 of the oscillator."""
    return 0.5 * p.m * s.v ** 2 + 0.5 * p.k * s.w ** 2


def _step_times(T: float, dt: float) -> np.ndarray:  # pylint: disable=invalid-name
    """0, dt, 2 dt, ... and T; the last step is shortened when dt does not divide T."""
    if not (math.isfinite(dt) and dt > 0):
        raise InputError(f"dt must be > 0, got {dt}")
    if not (math.isfinite(T) and T >= dt):
        raise InputError(f"T must be >= dt, got T={T}, dt={dt}")
    ratio = T / dt
    n = max(math.ceil(ratio - STEP_RTOL * ratio), 1)
    times = np.arange(n + 1) * dt
    times[-1] = T
    return times


def integrate(
    p: PistonParams, s0: PistonState, T: float, dt: float,  # pylint: disable=invalid-name
) -> Trajectory:
    """Classical RK4 from t=0 to T; state and pressure stored at every step."""
    times = _step_times(T, dt)
    n = times.size - 1
    w = np.empty(n + 1)
    v = np.empty(n + 1)
    w[0], v[0] = s0.w, s0.v
    wi, vi = s0.w, s0.v
    for i in range(n):
        t = float(times[i])
        h = dt if i < n - 1 else T - t
        half = 0.5 * h
        try:
            k1w, k1v = vi, _accel(wi, vi, p, t)
            k2w = vi + half * k1v
            k2v = _accel(wi + half * k1w, k2w, p, t + half)
            k3w = vi + half * k2v
            k3v = _accel(wi + half * k2w, k3w, p, t + half)
            k4w = vi + h * k3v
            k4v = _accel(wi + h * k3w, k4w, p, t + h)
        except OverflowError:
            raise InputError(f"integration diverged at t={t:.6g}") from None
        wi += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        vi += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (math.isfinite(wi) and math.isfinite(vi)):
            raise InputError(f"integration diverged at t={t + h:.6g}")
        w[i + 1], v[i + 1] = wi, vi
    try:
        pr = np.array([
            pressure(PistonState(wj, vj), p, float(tj))
            for wj, vj, tj in zip(w, v, times)
        ])
    except OverflowError:
        raise InputError("pressure overflowed along the trajectory") from None
    return Trajectory(times=times, w=w, v=v, pressure=pr)


def sample_snapshots(
    grid: Sequence[PistonParams], s0: PistonState, T: float, dt: float,  # pylint: disable=invalid-name
    stride: int = 1, workers: int = 1,
) -> CoupledEnsemble:
    """Integrate every grid point; observe w (solid) and p (gas) every *stride* steps.

    Weights are uniform 1/N; columns follow grid order regardless of
    *workers*.
    """
    if not grid:
        raise InputError("parameter grid is empty")
    if stride < 1:
        raise InputError(f"stride must be >= 1, got {stride}")
    _step_times(T, dt)
    progress = Progress(len(grid))

    def _run(index: int) -> Trajectory:
        progress.step(f"integrating parameter {index}")
        try:
            return integrate(grid[index], s0, T, dt)
        except GasLawDomainError as e:
            raise e.at_parameter(index) from None
        except InputError as e:
            raise InputError(f"[parameter {index}] {e}") from None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_run, range(len(grid))))
    else:
        trajectories = [_run(i) for i in range(len(grid))]

    solid = np.column_stack([tr.w[::stride] for tr in trajectories])
    gas = np.column_stack([tr.pressure[::stride] for tr in trajectories])
    points = tuple(
        ParameterPoint(p.coordinates(), label=str(i)) for i, p in enumerate(grid)
    )
    measure = SampledMeasure.uniform(points)
    return CoupledEnsemble(
        SnapshotEnsemble(solid, measure), SnapshotEnsemble(gas, measure),
    )


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A parameter grid with initial state, horizon, step and observation stride."""

    grid: tuple[PistonParams, ...]
    s0: PistonState
    T: float  # pylint: disable=invalid-name
    dt: float
    stride: int = 1

    @property
    def observation_times(self) -> np.ndarray:
        """Times of the snapshot rows."""
        return _step_times(self.T, self.dt)[:: self.stride]


DEFAULT_SCENARIO = Scenario(
    grid=(PistonParams(m=1.0, k=1.0, S=0.1, c0=10.0, gamma=1.4, p0=1.0),),
    s0=PistonState(1.0, 0.0),
    T=20.0,
    dt=1e-3,
    stride=100,
)


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=path)
    return float(value)


def _axis_values(value: Any, path: str) -> list[float]:
    """A single number or a {start, stop, count} range."""
    if not isinstance(value, dict):
        return [_number(value, path)]
    unknown = set(value) - {"start", "stop", "count"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=path)
    for key in ("start", "stop", "count"):
        if key not in value:
            raise ConfigError("missing", field=f"{path}.{key}")
    count = value["count"]
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ConfigError(
            f"must be a positive integer, got {count!r}", field=f"{path}.count",
        )
    start = _number(value["start"], f"{path}.start")
    stop = _number(value["stop"], f"{path}.stop")
    if count == 1:
        return [start]
    return [float(x) for x in np.linspace(start, stop, count)]


def _make_params(coords: dict[str, float], p0: float, path: str) -> PistonParams:
    try:
        return PistonParams.from_coordinates(
            coords["m"], coords["k"], coords["S"], coords["c0"],
            coords["gamma_minus_one"], p0,
        )
    except InputError as e:
        raise ConfigError(str(e), field=path) from None


def expand_grid(layout: Any, p0: float = 1.0, path: str = "grid") -> tuple[PistonParams, ...]:
    """Expand a grid given as a list of points or per-coordinate ranges.

    Ranges are combined row-major over (m, k, S, c0, gamma_minus_one).
    """
    if isinstance(layout, list):
        if not layout:
            raise ConfigError("grid is empty", field=path)
        grid = []
        for i, point in enumerate(layout):
            where = f"{path}[{i}]"
            if not isinstance(point, dict):
                raise ConfigError("expected an object", field=where)
            coords = {}
            for name in COORDINATES:
                if name not in point:
                    raise ConfigError("missing", field=f"{where}.{name}")
                coords[name] = _number(point[name], f"{where}.{name}")
            grid.append(_make_params(coords, p0, where))
        return tuple(grid)
    if isinstance(layout, dict):
        unknown = set(layout) - set(COORDINATES)
        if unknown:
            raise ConfigError(f"unknown coordinates {sorted(unknown)}", field=path)
        axes = []
        for name in COORDINATES:
            if name not in layout:
                raise ConfigError("missing", field=f"{path}.{name}")
            axes.append(_axis_values(layout[name], f"{path}.{name}"))
        return tuple(
            _make_params(dict(zip(COORDINATES, combo)), p0, path)
            for combo in itertools.product(*axes)
        )
    raise ConfigError("expected a list of points or an object of ranges", field=path)
