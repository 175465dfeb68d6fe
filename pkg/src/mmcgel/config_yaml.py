"""YAML run configuration with environment variable support."""

import os
import re
from dataclasses import fields
from pathlib import Path
from typing import Any

import yaml

from mmcgel.export.base import atomic_write_text
from mmcgel.models import (
    InitialCondition,
    MeshStudySettings,
    NewtonSettings,
    RunConfig,
    RunSettings,
    TimeStepPolicy,
)
from mmcgel.params import GridGeometry, ModelParams, ParameterError

OUTPUT_DIR_ENV = "MMCGEL_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "./mmcgel-output"


class ConfigError(Exception):
    """Configuration error."""

    pass


def _substitute_env_vars(value: str) -> str:
    """Substitute environment variables in a string.

    Supports:
    - ${VAR_NAME} - required variable
    - ${VAR_NAME:-default} - variable with default value
    """
    pattern = r"\$\{([^}:]+)(?::-([^}]*))?\}"

    def replacer(match: re.Match) -> str:
        var_name = match.group(1)
        default = match.group(2)
        env_value = os.environ.get(var_name)

        if env_value is not None:
            return env_value
        if default is not None:
            return default
        raise ConfigError(f"Environment variable '{var_name}' is not set and no default provided")

    return re.sub(pattern, replacer, value)


def _process_env_vars(data: Any) -> Any:
    """Recursively process environment variables in configuration data."""
    if isinstance(data, str):
        return _substitute_env_vars(data)
    elif isinstance(data, dict):
        return {k: _process_env_vars(v) for k, v in data.items()}
    elif isinstance(data, list):
        return [_process_env_vars(item) for item in data]
    return data


# Scalar coercion. YAML 1.1 reads "1e-9" as a string, and env substitution
# always yields strings, so numbers may arrive as text.


def _as_float(path: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{path}: expected a number, got {value!r}")


def _as_int(path: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected an integer, got a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and re.fullmatch(r"[+-]?\d+", value.strip()):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise ConfigError(f"{path}: expected an integer, got {value!r}")


def _as_str(path: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _section(data: dict, name: str) -> dict:
    section = data.get(name, {})
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"{name}: expected a mapping")
    return section


def _reject_unknown(section: dict, allowed: set[str], prefix: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}: unknown key")


def _build(cls: type, prefix: str, **kwargs: Any) -> Any:
    """Construct a config dataclass, re-raising field errors with the dotted path."""
    try:
        return cls(**kwargs)
    except ParameterError as e:
        raise ConfigError(f"{prefix}.{e.field}: {str(e).split(': ', 1)[1]}") from e


def _parse_model(data: dict) -> ModelParams:
    """Parse the model section."""
    _reject_unknown(data, {"chi", "M", "N", "epsilon"}, "model")
    return _build(
        ModelParams,
        "model",
        chi=_as_float("model.chi", data.get("chi", 2.37)),
        M=_as_float("model.M", data.get("M", 0.16)),
        N=_as_float("model.N", data.get("N", 4.34)),
        epsilon=_as_float("model.epsilon", data.get("epsilon", 0.0)),
    )


def _parse_grid(data: dict) -> GridGeometry:
    """Parse the grid section."""
    _reject_unknown(data, {"Lx", "Ly", "m", "n"}, "grid")
    return _build(
        GridGeometry,
        "grid",
        Lx=_as_float("grid.Lx", data.get("Lx", 50.0)),
        Ly=_as_float("grid.Ly", data.get("Ly", 50.0)),
        m=_as_int("grid.m", data.get("m", 64)),
        n=_as_int("grid.n", data.get("n", 64)),
    )


_TIME_FLOATS = (
    "T", "s_const", "s_min", "s_max", "alpha_min", "A",
    "switch_threshold", "alpha_regime2", "energy_tolerance",
)


def _parse_time(data: dict) -> TimeStepPolicy:
    """Parse the time section."""
    _reject_unknown(data, {"mode", "max_steps", *_TIME_FLOATS}, "time")
    kwargs: dict[str, Any] = {
        name: _as_float(f"time.{name}", data[name]) for name in _TIME_FLOATS if name in data
    }
    if "mode" in data:
        kwargs["mode"] = _as_str("time.mode", data["mode"])
    if data.get("max_steps") is not None:
        kwargs["max_steps"] = _as_int("time.max_steps", data["max_steps"])
    return _build(TimeStepPolicy, "time", **kwargs)


def _parse_initial(data: dict) -> InitialCondition:
    """Parse the initial section."""
    _reject_unknown(data, {"kind", "base", "amplitude"}, "initial")
    kwargs: dict[str, Any] = {}
    if "kind" in data:
        kwargs["kind"] = _as_str("initial.kind", data["kind"])
    for name in ("base", "amplitude"):
        if name in data:
            kwargs[name] = _as_float(f"initial.{name}", data[name])
    return _build(InitialCondition, "initial", **kwargs)


_SOLVER_KEYS = {
    "tol_newton": _as_float,
    "max_newton": _as_int,
    "tol_gmres": _as_float,
    "restart": _as_int,
    "max_restarts": _as_int,
    "domain_guard": _as_float,
}
_SOLVER_FIELDS = {
    "max_newton": "max_newton_iters",
    "restart": "gmres_restart",
    "max_restarts": "max_gmres_restarts",
}


def _parse_solver(data: dict) -> NewtonSettings:
    """Parse the solver section."""
    _reject_unknown(data, set(_SOLVER_KEYS), "solver")
    kwargs = {
        _SOLVER_FIELDS.get(key, key): conv(f"solver.{key}", data[key])
        for key, conv in _SOLVER_KEYS.items()
        if key in data
    }
    try:
        return NewtonSettings(**kwargs)
    except ParameterError as e:
        key = next((k for k, v in _SOLVER_FIELDS.items() if v == e.field), e.field)
        raise ConfigError(f"solver.{key}: {str(e).split(': ', 1)[1]}") from e


def _parse_run(data: dict) -> RunSettings:
    """Parse the run section."""
    _reject_unknown(data, {"seed", "n_samples", "snapshot_times", "output_dir", "workers"}, "run")
    kwargs: dict[str, Any] = {}
    for name in ("seed", "n_samples"):
        if name in data:
            kwargs[name] = _as_int(f"run.{name}", data[name])
    if data.get("workers") is not None:
        kwargs["workers"] = _as_int("run.workers", data["workers"])
    if data.get("output_dir") is not None:
        kwargs["output_dir"] = _as_str("run.output_dir", data["output_dir"])
    times = data.get("snapshot_times") or []
    if not isinstance(times, list):
        raise ConfigError("run.snapshot_times: expected a list")
    kwargs["snapshot_times"] = tuple(
        _as_float(f"run.snapshot_times[{i}]", t) for i, t in enumerate(times)
    )
    return _build(RunSettings, "run", **kwargs)


def _parse_mesh_study(data: dict) -> MeshStudySettings:
    """Parse the mesh_study section."""
    _reject_unknown(data, {"grids"}, "mesh_study")
    if "grids" not in data:
        return MeshStudySettings()
    grids = data["grids"]
    if not isinstance(grids, list):
        raise ConfigError("mesh_study.grids: expected a list of [m, n] pairs")
    pairs = []
    for i, pair in enumerate(grids):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(f"mesh_study.grids[{i}]: expected [m, n]")
        pairs.append(
            (_as_int(f"mesh_study.grids[{i}][0]", pair[0]), _as_int(f"mesh_study.grids[{i}][1]", pair[1]))
        )
    return _build(MeshStudySettings, "mesh_study", grids=tuple(pairs))


_SECTIONS = ("model", "grid", "time", "initial", "solver", "run", "mesh_study")


def config_from_dict(data: dict) -> RunConfig:
    """Build a validated RunConfig from already-loaded YAML data.

    Raises:
        ConfigError: On unknown keys or invalid values
    """
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a mapping")
    _reject_unknown(data, set(_SECTIONS), "config")
    data = _process_env_vars(data)

    config = RunConfig(
        model=_parse_model(_section(data, "model")),
        grid=_parse_grid(_section(data, "grid")),
        time=_parse_time(_section(data, "time")),
        initial=_parse_initial(_section(data, "initial")),
        solver=_parse_solver(_section(data, "solver")),
        run=_parse_run(_section(data, "run")),
        mesh_study=_parse_mesh_study(_section(data, "mesh_study")),
    )
    if config.stochastic and config.time.adaptive:
        raise ConfigError("time.mode: adaptive stepping unsupported with noise")
    if config.initial.kind == "disturbed_uniform" and (
        config.initial.base - config.initial.amplitude <= 0
        or config.initial.base + config.initial.amplitude >= config.model.phi_max
    ):
        raise ConfigError(
            f"initial: base +/- amplitude must lie inside (0, {config.model.phi_max!r})"
        )
    if config.initial.kind == "uniform" and config.initial.base >= config.model.phi_max:
        raise ConfigError(f"initial.base: must be < {config.model.phi_max!r}")
    return config


def config_to_dict(config: RunConfig) -> dict:
    """Convert RunConfig to a dictionary with every default materialised."""
    solver = config.solver
    return {
        "model": {
            "chi": config.model.chi,
            "M": config.model.M,
            "N": config.model.N,
            "epsilon": config.model.epsilon,
        },
        "grid": {f.name: getattr(config.grid, f.name) for f in fields(config.grid)},
        "time": {f.name: getattr(config.time, f.name) for f in fields(config.time)},
        "initial": {f.name: getattr(config.initial, f.name) for f in fields(config.initial)},
        "solver": {
            "tol_newton": solver.tol_newton,
            "max_newton": solver.max_newton_iters,
            "tol_gmres": solver.tol_gmres,
            "restart": solver.gmres_restart,
            "max_restarts": solver.max_gmres_restarts,
            "domain_guard": solver.domain_guard,
        },
        "run": {
            "seed": config.run.seed,
            "n_samples": config.run.n_samples,
            "snapshot_times": list(config.run.snapshot_times),
            "output_dir": config.run.output_dir,
            "workers": config.run.workers,
        },
        "mesh_study": {"grids": [list(g) for g in config.mesh_study.grids]},
    }


def resolve_output_dir(config: RunConfig, override: str | None = None) -> Path:
    """CLI override, then run.output_dir, then $MMCGEL_OUTPUT_DIR, then ./mmcgel-output."""
    for candidate in (override, config.run.output_dir, os.environ.get(OUTPUT_DIR_ENV)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT_DIR)


class YAMLConfig:
    """YAML run configuration file with environment variable support."""

    def __init__(self, config_path: Path | str):
        """Initialize configuration file handle.

        Args:
            config_path: Path to the YAML run configuration
        """
        self.config_path = Path(config_path)
        self._config: RunConfig | None = None

    @property
    def config(self) -> RunConfig:
        """Get current configuration, loading if necessary."""
        if self._config is None:
            self._config = self.load()
        return self._config

    def load(self) -> RunConfig:
        """Load configuration from the YAML file.

        Returns:
            Validated RunConfig with defaults applied

        Raises:
            ConfigError: If the file is missing, malformed or invalid
        """
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                raw_data = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read {self.config_path}: {e.strerror}") from e
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            problem = getattr(e, "problem", None) or str(e)
            raise ConfigError(f"Invalid YAML syntax in {self.config_path}{where}: {problem}") from e

        self._config = config_from_dict(raw_data if raw_data is not None else {})
        return self._config

    def save(self, config: RunConfig | None = None) -> Path:
        """Save the fully resolved configuration to YAML.

        Args:
            config: Configuration to save (uses current if not provided)

        Returns:
            The written path

        Raises:
            OSError: If the file cannot be written
        """
        if config is None:
            config = self._config or RunConfig()

        text = yaml.safe_dump(
            config_to_dict(config), default_flow_style=False, allow_unicode=True, sort_keys=False
        )
        atomic_write_text(self.config_path, text)
        self._config = config
        return self.config_path


def parse_config(path: Path | str) -> RunConfig:
    """Read and validate a YAML run configuration.

    Args:
        path: Configuration file

    Returns:
        RunConfig with defaults applied

    Raises:
        ConfigError: Parse errors carry the line; validation errors name the field
    """
    return YAMLConfig(path).load()
