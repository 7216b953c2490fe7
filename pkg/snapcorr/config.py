"""JSON run configurations for the command-line front end.

Every validation failure raises ``ConfigError`` naming the JSON field
path. Relative file paths are resolved against the config file's
directory.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Any, TypeVar

from snapcorr.errors import ConfigError, InputError
from snapcorr.export import load_json
from snapcorr.piston import (
    DEFAULT_SCENARIO,
    PistonState,
    Scenario,
    expand_grid,
)


@dataclass(frozen=True)
class RunConfig:
    """Options shared by every subcommand."""

    command: str
    config_path: str
    out_dir: str
    seed: int = 0
    workers: int = 1
    html: bool = False
    timing: bool = False
    weights_column: int | None = None
    probability: bool = False

    def __post_init__(self) -> None:
        if not self.config_path:
            raise ConfigError("a config path is required", field="--config")
        if not self.out_dir:
            raise ConfigError("an output directory is required", field="--out")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("must be an unsigned 64-bit integer", field="--seed")
        if self.workers < 1:
            raise ConfigError("must be >= 1", field="--workers")


@dataclass(frozen=True)
class PodConfig:
    """``pod``: KL expansion of one snapshot ensemble."""

    snapshots: str
    params: str
    weights_column: int | None = None
    probability: bool = False
    rank: int | None = None
    energy_tol: float | None = None
    export_modes: bool = True


@dataclass(frozen=True)
class CoupledConfig:
    """``coupled``: two subsystems over a shared parameter file."""

    sub1: str
    sub2: str
    params: str
    weights_column: int | None = None
    probability: bool = False
    partition: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    n1: int | None = None
    n2: int | None = None
    scales: tuple[float, float] = (1.0, 1.0)


@dataclass(frozen=True)
class TensorConfig:
    """``tensor``: snapshot tensor over a parameter grid."""

    snapshots: str
    params: str
    grid: tuple[int, ...]
    weights_column: int | None = None
    probability: bool = False
    energy_tol: float = 0.0
    max_bond: int | tuple[int, ...] | None = None
    partition: tuple[tuple[int, ...], tuple[int, ...]] | None = None


@dataclass(frozen=True)
class MatrixFieldConfig:
    """``matrix-field``: SPD or rotation field through its Lie algebra."""

    samples: str
    manifest: str
    params: str | None = None
    weights_column: int | None = None
    probability: bool = False
    rank: int | None = None
    energy_tol: float | None = None


_C = TypeVar("_C", PodConfig, CoupledConfig, TensorConfig, MatrixFieldConfig)


def apply_overrides(cfg: _C, run: RunConfig) -> _C:
    """Let --weights-column and --probability take precedence over the config file."""
    changes: dict[str, Any] = {}
    if run.weights_column is not None:
        changes["weights_column"] = run.weights_column
    if run.probability:
        changes["probability"] = True
    return dataclasses.replace(cfg, **changes) if changes else cfg


# ---------------------------------------------------------------------------
# Field readers
# ---------------------------------------------------------------------------


class _Fields:
    """Typed access to a JSON object with field-path error messages."""

    def __init__(self, obj: Any, base_dir: str, prefix: str = "") -> None:
        if not isinstance(obj, dict):
            raise ConfigError("expected a JSON object", field=prefix or "<root>")
        self.obj = obj
        self.base_dir = base_dir
        self.prefix = prefix

    def where(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def reject_unknown(self, allowed: set[str]) -> None:
        unknown = sorted(set(self.obj) - allowed)
        if unknown:
            raise ConfigError(
                f"unknown keys {unknown}", field=self.prefix or "<root>",
            )

    def path(self, key: str, required: bool = True) -> str | None:
        value = self.obj.get(key)
        if value is None:
            if required:
                raise ConfigError("missing", field=self.where(key))
            return None
        if not isinstance(value, str) or not value:
            raise ConfigError("expected a non-empty path", field=self.where(key))
        return os.path.normpath(os.path.join(self.base_dir, value))

    def integer(self, key: str, minimum: int | None = None) -> int | None:
        value = self.obj.get(key)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", field=self.where(key))
        if minimum is not None and value < minimum:
            raise ConfigError(f"must be >= {minimum}", field=self.where(key))
        return value

    def number(self, key: str, minimum: float | None = None) -> float | None:
        value = self.obj.get(key)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", field=self.where(key))
        if minimum is not None and value < minimum:
            raise ConfigError(f"must be >= {minimum}", field=self.where(key))
        return float(value)

    def flag(self, key: str, default: bool) -> bool:
        value = self.obj.get(key, default)
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", field=self.where(key))
        return value

    def int_list(self, key: str, minimum: int = 0) -> tuple[int, ...]:
        value = self.obj.get(key)
        where = self.where(key)
        if not isinstance(value, list) or not value:
            raise ConfigError("expected a non-empty list of integers", field=where)
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, int) or item < minimum:
                raise ConfigError(
                    f"expected an integer >= {minimum}, got {item!r}",
                    field=f"{where}[{i}]",
                )
        return tuple(value)

    def child(self, key: str) -> "_Fields | None":
        value = self.obj.get(key)
        if value is None:
            return None
        return _Fields(value, self.base_dir, self.where(key))


def _read_config(path: str) -> _Fields:
    try:
        obj = load_json(path)
    except InputError as e:
        raise ConfigError(str(e)) from None
    return _Fields(obj, os.path.dirname(os.path.abspath(path)))


def _rank_or_tol(f: _Fields) -> tuple[int | None, float | None]:
    rank = f.integer("rank", minimum=0)
    tol = f.number("energy_tol", minimum=0.0)
    if rank is not None and tol is not None:
        raise ConfigError("give at most one of 'rank' and 'energy_tol'", field=f.where("rank"))
    return rank, tol


def _partition(f: _Fields, key: str, names: tuple[str, str], minimum: int) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    part = f.child(key)
    if part is None:
        return None
    part.reject_unknown(set(names))
    return part.int_list(names[0], minimum), part.int_list(names[1], minimum)


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def load_pod_config(path: str) -> PodConfig:
    """Parse a ``pod`` config."""
    f = _read_config(path)
    f.reject_unknown({
        "snapshots", "params", "weights_column", "probability", "rank",
        "energy_tol", "export_modes",
    })
    rank, tol = _rank_or_tol(f)
    return PodConfig(
        snapshots=f.path("snapshots"),
        params=f.path("params"),
        weights_column=f.integer("weights_column"),
        probability=f.flag("probability", False),
        rank=rank,
        energy_tol=tol,
        export_modes=f.flag("export_modes", True),
    )


def load_coupled_config(path: str) -> CoupledConfig:
    """Parse a coupled manifest (as written by ``simulate``)."""
    f = _read_config(path)
    f.reject_unknown({
        "sub1", "sub2", "params", "weights_column", "probability",
        "partition", "n1", "n2", "scales",
        # informational keys written by simulate
        "n_samples", "state_dims", "coordinates", "observation_times",
    })
    scales = f.obj.get("scales", [1.0, 1.0])
    if (
        not isinstance(scales, list) or len(scales) != 2
        or any(isinstance(a, bool) or not isinstance(a, (int, float)) or a <= 0 for a in scales)
    ):
        raise ConfigError("expected two positive numbers", field="scales")
    return CoupledConfig(
        sub1=f.path("sub1"),
        sub2=f.path("sub2"),
        params=f.path("params"),
        weights_column=f.integer("weights_column"),
        probability=f.flag("probability", False),
        partition=_partition(f, "partition", ("m1", "m2"), 0),
        n1=f.integer("n1", minimum=0),
        n2=f.integer("n2", minimum=0),
        scales=(float(scales[0]), float(scales[1])),
    )


def load_tensor_config(path: str) -> TensorConfig:
    """Parse a ``tensor`` config."""
    f = _read_config(path)
    f.reject_unknown({
        "snapshots", "params", "grid", "weights_column", "probability",
        "energy_tol", "max_bond", "partition",
    })
    raw_bond = f.obj.get("max_bond")
    max_bond: int | tuple[int, ...] | None
    if raw_bond is None or isinstance(raw_bond, int) and not isinstance(raw_bond, bool):
        max_bond = f.integer("max_bond", minimum=1)
    else:
        max_bond = f.int_list("max_bond", minimum=1)
    return TensorConfig(
        snapshots=f.path("snapshots"),
        params=f.path("params"),
        grid=f.int_list("grid", minimum=1),
        weights_column=f.integer("weights_column"),
        probability=f.flag("probability", False),
        energy_tol=f.number("energy_tol", minimum=0.0) or 0.0,
        max_bond=max_bond,
        partition=_partition(f, "partition", ("left", "right"), 1),
    )


def load_matrix_field_config(path: str) -> MatrixFieldConfig:
    """Parse a ``matrix-field`` config."""
    f = _read_config(path)
    f.reject_unknown({
        "samples", "manifest", "params", "weights_column", "probability", "rank",
        "energy_tol",
    })
    rank, tol = _rank_or_tol(f)
    return MatrixFieldConfig(
        samples=f.path("samples"),
        manifest=f.path("manifest"),
        params=f.path("params", required=False),
        weights_column=f.integer("weights_column"),
        probability=f.flag("probability", False),
        rank=rank,
        energy_tol=tol,
    )


def load_scenario(path: str) -> Scenario:
    """Parse a ``simulate`` scenario; unspecified fields use the default scenario.

    The scenario may be the top-level object or nested under ``scenario``.
    """
    f = _read_config(path)
    if "scenario" in f.obj:
        f.reject_unknown({"scenario"})
        f = f.child("scenario")
        assert f is not None
    f.reject_unknown({"grid", "p0", "s0", "T", "dt", "stride"})
    base = DEFAULT_SCENARIO
    p0 = f.number("p0")
    if p0 is None:
        p0 = base.grid[0].p0
    elif p0 <= 0:
        raise ConfigError("must be > 0", field=f.where("p0"))
    if "grid" in f.obj:
        grid = expand_grid(f.obj["grid"], p0=p0, path=f.where("grid"))
    else:
        grid = tuple(dataclasses.replace(p, p0=p0) for p in base.grid)
    s0 = base.s0
    if "s0" in f.obj:
        raw = f.obj["s0"]
        if (
            not isinstance(raw, list) or len(raw) != 2
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in raw)
        ):
            raise ConfigError("expected [w, v]", field=f.where("s0"))
        s0 = PistonState(float(raw[0]), float(raw[1]))
    T = f.number("T")  # pylint: disable=invalid-name
    dt = f.number("dt")
    stride = f.integer("stride", minimum=1)
    T = base.T if T is None else T  # pylint: disable=invalid-name
    dt = base.dt if dt is None else dt
    if not dt > 0:
        raise ConfigError("must be > 0", field=f.where("dt"))
    if not T >= dt:
        raise ConfigError("must be >= dt", field=f.where("T"))
    return Scenario(
        grid=grid, s0=s0, T=T, dt=dt,
        stride=base.stride if stride is None else stride,
    )
