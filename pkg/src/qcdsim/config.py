"""Run config loading."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml

from .cmatrix import CMatrixField, GridSpec, SampledCMatrix, product_field, thermal_charfn
from .constants import CONFIG_ENV, THREADS_ENV
from .model import CouplingProfile, ProfileError, RateError, RateInputs, SystemConfig
from .presets import platform_preset

_ENV_VAR_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

# Dotted keys whose values are mappings or lists in their own right.
_LEAF_KEYS = {"times", "scan.Na", "scan.g0t", "profile.segments", "profile.samples", "grid.counts"}

_KNOWN_KEYS = {
    "version",
    "platform",
    "profile.kind",
    "profile.g0",
    "profile.nu",
    "profile.segments",
    "profile.samples",
    "rates.kappa",
    "rates.gamma1",
    "rates.gamma2",
    "rates.Na",
    "rates.Nq",
    "rates.mode",
    "initial.state",
    "initial.path",
    "times",
    "grid.pattern",
    "grid.extent",
    "grid.counts",
    "solver.method",
    "solver.oracle",
    "solver.oracle_points",
    "solver.cutoff",
    "output.path",
    "output.format",
    "scan.Na",
    "scan.g0t",
    "scan.kappa",
    "scan.gamma",
    "scan.oracle_max_Na",
    "runtime.threads",
    "runtime.log_dir",
}

InitialKind = Literal["plus-thermal", "excited-thermal", "ground-thermal", "custom-cmatrix-file"]
OracleMode = Literal["off", "check", "full"]

_QUBIT_STATES = {
    "plus-thermal": np.full((2, 2), 0.5, dtype=complex),
    "excited-thermal": np.diag([1.0, 0.0]).astype(complex),
    "ground-thermal": np.diag([0.0, 1.0]).astype(complex),
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str, line: int | None = None) -> None:
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")
        self.key = key
        self.line = line


def default_config_path() -> Path:
    return Path.cwd() / "config.yaml"


@dataclass
class InitialState:
    kind: InitialKind = "plus-thermal"
    path: Path | None = None

    @property
    def qubit(self) -> np.ndarray:
        if self.kind not in _QUBIT_STATES:
            raise ValueError(f"{self.kind} has no product-state qubit factor")
        return _QUBIT_STATES[self.kind]

    def cmatrix(self, Na: float) -> CMatrixField:
        if self.kind == "custom-cmatrix-file":
            assert self.path is not None
            return SampledCMatrix.read_csv(self.path).to_field()
        return product_field(self.qubit, thermal_charfn(Na))


@dataclass
class SolverSettings:
    method: Literal["auto", "ode", "perturbative"] = "auto"
    oracle: OracleMode = "off"
    oracle_points: int = 5
    cutoff: int | None = None


@dataclass
class OutputSettings:
    path: Path
    format: Literal["csv", "json"] = "csv"


@dataclass
class ScanSettings:
    Na: list[float] = field(default_factory=lambda: [0.0])
    g0t: list[float] = field(default_factory=lambda: [1.0])
    kappa: float = 0.01
    gamma: float = 0.01
    oracle_max_Na: float = 3.0


@dataclass
class RuntimeSettings:
    threads: int = 1
    log_dir: Path = Path("logs")


@dataclass
class RunConfig:
    version: int
    platform: str | None
    system: SystemConfig
    initial: InitialState
    times: list[float]
    grid: GridSpec
    solver: SolverSettings
    output: OutputSettings
    scan: ScanSettings
    runtime: RuntimeSettings


@dataclass
class ConfigLoadResult:
    path: Path
    config: RunConfig


def _resolve_env_vars(value: Any) -> Any:
    if isinstance(value, str):

        def repl(match: re.Match[str]) -> str:
            return os.environ.get(match.group(1), match.group(0))

        return _ENV_VAR_RE.sub(repl, value)
    if isinstance(value, list):
        return [_resolve_env_vars(item) for item in value]
    if isinstance(value, dict):
        return {key: _resolve_env_vars(val) for key, val in value.items()}
    return value


def _load_workspace_env(env_path: Path) -> None:
    if not env_path.exists():
        return

    for line in env_path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip().strip('"').strip("'")
        if key and key not in os.environ:
            os.environ[key] = value


def _key_lines(node: yaml.Node | None, prefix: str = "") -> dict[str, int]:
    """Dotted key -> 1-based line of its key in the source."""
    lines: dict[str, int] = {}
    if not isinstance(node, yaml.MappingNode):
        return lines
    for key_node, value_node in node.value:
        dotted = f"{prefix}{key_node.value}"
        lines[dotted] = key_node.start_mark.line + 1
        if dotted not in _LEAF_KEYS:
            lines.update(_key_lines(value_node, f"{dotted}."))
    return lines


def _flatten(raw: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in raw.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and dotted not in _LEAF_KEYS:
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _load_yaml(config_path: Path) -> tuple[dict[str, Any], dict[str, int]]:
    if not config_path.exists():
        raise FileNotFoundError(f"config.yaml not found at {config_path}")
    text = config_path.read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text) or {}
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<document>", str(exc), mark.line + 1 if mark else None) from exc
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be a mapping", 1)
    return _flatten(_resolve_env_vars(raw)), _key_lines(node)


class _Values:
    """Typed access to the flattened keys, with errors that name key and line."""

    def __init__(self, flat: dict[str, Any], lines: dict[str, int]) -> None:
        self.flat = flat
        self.lines = lines

    def line(self, key: str) -> int | None:
        return self.lines.get(key)

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(key, message, self.line(key))

    def has(self, key: str) -> bool:
        return key in self.flat

    def get(self, key: str, default: Any = None) -> Any:
        return self.flat.get(key, default)

    def number(self, key: str, default: float | None = None) -> float | None:
        if key not in self.flat:
            return default
        value = self.flat[key]
        if isinstance(value, bool):
            raise self.error(key, f"expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise self.error(key, f"expected a number, got {value!r}") from None

    def integer(self, key: str, default: int | None = None) -> int | None:
        value = self.number(key, None if default is None else float(default))
        if value is None:
            return None
        if not float(value).is_integer():
            raise self.error(key, f"expected an integer, got {self.flat.get(key)!r}")
        return int(value)

    def choice(self, key: str, options: tuple[str, ...], default: str) -> str:
        value = self.flat.get(key, default)
        if value is False:
            value = "off"
        if value not in options:
            raise self.error(key, f"must be one of {', '.join(options)}; got {value!r}")
        return str(value)


def _number_list(values: _Values, key: str, default: list[float]) -> list[float]:
    raw = values.get(key)
    if raw is None:
        return list(default)
    if isinstance(raw, dict):
        missing = {"start", "stop", "count"} - raw.keys()
        if missing or set(raw) - {"start", "stop", "count"}:
            raise values.error(key, "range needs exactly start, stop and count")
        try:
            start, stop, count = float(raw["start"]), float(raw["stop"]), int(raw["count"])
        except (TypeError, ValueError):
            raise values.error(key, "range bounds must be numbers") from None
        if count < 1:
            raise values.error(key, "range count must be at least 1")
        return [float(x) for x in np.linspace(start, stop, count)]
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return [float(raw)]
    if not isinstance(raw, list) or not raw:
        raise values.error(key, "expected a non-empty list or a {start, stop, count} range")
    try:
        return [float(x) for x in raw]
    except (TypeError, ValueError):
        raise values.error(key, "list entries must be numbers") from None


def _parse_profile(values: _Values, base: CouplingProfile) -> CouplingProfile:
    kind = values.choice("profile.kind", ("constant", "piecewise", "sampled"), base.kind)
    g0 = values.number("profile.g0", base.g0)
    nu = values.number("profile.nu", base.nu)
    try:
        if kind == "constant":
            return CouplingProfile.constant(g0, nu=nu)
        if kind == "piecewise":
            segments = values.get("profile.segments", base.segments)
            return CouplingProfile.piecewise(
                [tuple(float(x) for x in seg) for seg in segments], nu=nu
            )
        samples = values.get("profile.samples", base.samples)
        return CouplingProfile.sampled([tuple(float(x) for x in s) for s in samples], nu=nu)
    except ProfileError as exc:
        key = {"piecewise": "profile.segments", "sampled": "profile.samples"}.get(kind, "profile")
        raise values.error(key, str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise values.error(f"profile.{kind}", f"malformed profile data: {exc}") from exc


def _parse_rates(values: _Values, base: RateInputs) -> RateInputs:
    try:
        return RateInputs(
            kappa=values.number("rates.kappa", base.kappa),
            gamma1=values.number("rates.gamma1", base.gamma1),
            gamma2=values.number("rates.gamma2", base.gamma2),
            Na=values.number("rates.Na", base.Na),
            Nq=values.number("rates.Nq", base.Nq),
            mode=values.choice("rates.mode", ("standard", "exchanged-qed"), base.mode),
        )
    except RateError as exc:
        name = str(exc).split(" ", 1)[0]
        key = f"rates.{name}" if f"rates.{name}" in _KNOWN_KEYS else "rates"
        raise values.error(key, str(exc)) from exc


def _base_system(values: _Values) -> tuple[str | None, CouplingProfile, RateInputs]:
    name = values.get("platform")
    if name is None:
        return None, CouplingProfile(), RateInputs()
    try:
        preset = platform_preset(str(name))
    except KeyError as exc:
        raise values.error("platform", str(exc.args[0] if exc.args else exc)) from exc
    return str(name), preset.normalized.profile, preset.normalized.rates


def _parse_initial(values: _Values, config_dir: Path) -> InitialState:
    kind = values.choice(
        "initial.state",
        ("plus-thermal", "excited-thermal", "ground-thermal", "custom-cmatrix-file"),
        "plus-thermal",
    )
    path = values.get("initial.path")
    if kind == "custom-cmatrix-file":
        if not path:
            raise values.error("initial.path", "required for custom-cmatrix-file")
        resolved = (config_dir / str(path)).resolve()
        if not resolved.exists():
            raise values.error("initial.path", f"file not found: {resolved}")
        return InitialState(kind=kind, path=resolved)  # type: ignore[arg-type]
    return InitialState(kind=kind)  # type: ignore[arg-type]


def _parse_times(values: _Values) -> list[float]:
    times = _number_list(values, "times", [0.0])
    if any(t < 0 for t in times):
        raise values.error("times", "times must be non-negative")
    if any(b < a for a, b in zip(times, times[1:], strict=False)):
        raise values.error("times", "times must be nondecreasing")
    return times


def _parse_grid(values: _Values, Delta: float) -> GridSpec:
    pattern = values.choice("grid.pattern", ("cartesian", "polar"), "cartesian")
    default = GridSpec.default_for(Delta, pattern)
    counts_raw = values.get("grid.counts", list(default.counts))
    if isinstance(counts_raw, int) and not isinstance(counts_raw, bool):
        counts_raw = [counts_raw, counts_raw]
    try:
        counts = tuple(int(c) for c in counts_raw)
        return GridSpec(
            pattern=pattern,  # type: ignore[arg-type]
            extent=values.number("grid.extent", default.extent),
            counts=counts,  # type: ignore[arg-type]
        )
    except (TypeError, ValueError) as exc:
        key = "grid.counts" if values.has("grid.counts") else "grid.extent"
        raise values.error(key, str(exc)) from exc


def _parse_solver(values: _Values) -> SolverSettings:
    points = values.integer("solver.oracle_points", 5)
    if points is None or points < 1:
        raise values.error("solver.oracle_points", "must be a positive integer")
    cutoff = values.integer("solver.cutoff")
    if cutoff is not None and cutoff < 1:
        raise values.error("solver.cutoff", "must be a positive integer")
    method = values.choice("solver.method", ("auto", "ode", "perturbative"), "auto")
    oracle = values.choice("solver.oracle", ("off", "check", "full"), "off")
    return SolverSettings(
        method=method,  # type: ignore[arg-type]
        oracle=oracle,  # type: ignore[arg-type]
        oracle_points=points,
        cutoff=cutoff,
    )


def _parse_output(values: _Values, config_dir: Path) -> OutputSettings:
    return OutputSettings(
        path=(config_dir / str(values.get("output.path", "out"))).resolve(),
        format=values.choice("output.format", ("csv", "json"), "csv"),  # type: ignore[arg-type]
    )


def _parse_scan(values: _Values) -> ScanSettings:
    defaults = ScanSettings()
    scan = ScanSettings(
        Na=_number_list(values, "scan.Na", defaults.Na),
        g0t=_number_list(values, "scan.g0t", defaults.g0t),
        kappa=values.number("scan.kappa", defaults.kappa),
        gamma=values.number("scan.gamma", defaults.gamma),
        oracle_max_Na=values.number("scan.oracle_max_Na", defaults.oracle_max_Na),
    )
    for key, grid in (("scan.Na", scan.Na), ("scan.g0t", scan.g0t)):
        if any(x < 0 for x in grid):
            raise values.error(key, "entries must be non-negative")
    for key in ("scan.kappa", "scan.gamma"):
        if values.number(key, 0.0) < 0:
            raise values.error(key, "must be non-negative")
    return scan


def _parse_runtime(values: _Values, config_dir: Path) -> RuntimeSettings:
    threads = values.integer("runtime.threads", 1)
    env_threads = os.environ.get(THREADS_ENV)
    if env_threads:
        try:
            threads = int(env_threads)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {env_threads!r}") from None
    if threads is None or threads < 1:
        raise values.error("runtime.threads", "must be a positive integer")
    log_dir = values.get("runtime.log_dir", "logs")
    return RuntimeSettings(threads=threads, log_dir=(config_dir / str(log_dir)).resolve())


def load_config(
    config_path: Path | None = None, workspace_root: Path | None = None
) -> ConfigLoadResult:
    path = config_path or Path(os.environ.get(CONFIG_ENV, str(default_config_path())))
    config_dir = path.resolve().parent

    env_root = workspace_root or config_dir
    _load_workspace_env(env_root / ".env")

    flat, lines = _load_yaml(path)
    values = _Values(flat, lines)
    unknown = sorted(set(flat) - _KNOWN_KEYS)
    if unknown:
        raise values.error(unknown[0], "unknown config key")

    version = values.integer("version", 1)
    platform, base_profile, base_rates = _base_system(values)
    profile = _parse_profile(values, base_profile)
    rates = _parse_rates(values, base_rates)
    system = SystemConfig(profile=profile, rates=rates)

    return ConfigLoadResult(
        path=path,
        config=RunConfig(
            version=version or 1,
            platform=platform,
            system=system,
            initial=_parse_initial(values, config_dir),
            times=_parse_times(values),
            grid=_parse_grid(values, system.derived.Delta),
            solver=_parse_solver(values),
            output=_parse_output(values, config_dir),
            scan=_parse_scan(values),
            runtime=_parse_runtime(values, config_dir),
        ),
    )


def with_overrides(
    config: RunConfig,
    *,
    output: Path | None = None,
    method: str | None = None,
    oracle: str | None = None,
    threads: int | None = None,
) -> RunConfig:
    """Apply command-line flags on top of a loaded config."""
    solver = config.solver
    if method is not None:
        solver = replace(solver, method=method)  # type: ignore[arg-type]
    if oracle is not None:
        solver = replace(solver, oracle=oracle)  # type: ignore[arg-type]
    out = config.output if output is None else replace(config.output, path=output.resolve())
    runtime = config.runtime
    if threads is not None:
        if threads < 1:
            raise ConfigError("--threads", "must be a positive integer")
        runtime = replace(runtime, threads=threads)
    return replace(config, solver=solver, output=out, runtime=runtime)
