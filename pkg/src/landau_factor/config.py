"""Scenario configuration: a TOML tree with dotted-key overrides.

A scenario names the physical parameters, the truncated basis, the path on
the sphere, integrator settings and what to run.  Every section except
``[physical]`` and ``[path]`` has defaults.  Example::

    [physical]
    L = 1.0
    potential = [12.5, 0.0, 0.0]
    eps = 0.01

    [basis]
    Na = 6
    Nb = 6
    Nc = 8
    buffer = 3

    [path]
    family = "cone"
    theta_deg = 60.0
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .geometry import (
    GreatCircleArc,
    PathError,
    PolarTriangle,
    PrecessingCone,
    SampledWaypoints,
    SpherePath,
    TransportedFrame,
    transport_frame,
)
from .hilbert import BasisConfig, DimensionCapError, PhysicalParams

__all__ = [
    "ConfigError",
    "SCHEMA_VERSION",
    "PathSpec",
    "IntegratorConfig",
    "RunConfig",
    "HolonomyConfig",
    "ScanConfig",
    "OutputConfig",
    "ScenarioConfig",
    "load_config",
    "parse_config",
    "apply_overrides",
]

SCHEMA_VERSION = 1

FAMILIES = ("cone", "great_circle", "triangle", "waypoints")
CONTROLS = ("stiffness_k", "rotation_eps")
RESPONSES = ("u_xi", "utilde_eps", "u_eps_first_order")
MODES = ("full", "strong_confinement", "adiabatic")
FORMATS = ("json", "csv", "svg")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


def _angle(section: dict, key: str, where: str, default=None) -> float:
    if key in section and f"{key}_deg" in section:
        raise ConfigError(f"{where}: give either {key!r} or {key + '_deg'!r}, not both")
    if f"{key}_deg" in section:
        return math.radians(float(section[f"{key}_deg"]))
    if key in section:
        return float(section[key])
    if default is None:
        raise ConfigError(f"{where}: missing {key!r} (radians) or {key + '_deg'!r}")
    return default


@dataclass(frozen=True)
class PathSpec:
    """Path family and its geometric parameters (angles in radians)."""

    family: str
    theta: float = math.pi / 3
    dphi: float = math.pi
    periods: float = 1.0
    axis: tuple = (0.0, 0.0, 1.0)
    arc: float = math.pi / 2
    start: tuple | None = None
    times: tuple = ()
    points: tuple = ()
    order: int = 3

    @classmethod
    def from_dict(cls, d: dict) -> "PathSpec":
        where = "[path]"
        fam = d.get("family")
        if fam not in FAMILIES:
            raise ConfigError(f"{where}.family must be one of {FAMILIES}, got {fam!r}")
        known = {"family", "theta", "theta_deg", "dphi", "dphi_deg", "periods", "axis", "arc",
                 "arc_deg", "start", "times", "points", "order"}
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"{where}: unknown keys {extra}")
        kw: dict = {"family": fam}
        if fam in ("cone", "triangle"):
            kw["theta"] = _angle(d, "theta", where)
        if fam == "cone":
            kw["periods"] = float(d.get("periods", 1.0))
        if fam == "triangle":
            kw["dphi"] = _angle(d, "dphi", where)
        if fam == "great_circle":
            kw["axis"] = tuple(float(v) for v in d.get("axis", (0.0, 0.0, 1.0)))
            kw["arc"] = _angle(d, "arc", where)
            if "start" in d:
                kw["start"] = tuple(float(v) for v in d["start"])
        if fam == "waypoints":
            if "times" not in d or "points" not in d:
                raise ConfigError(f"{where}: waypoints need 'times' and 'points'")
            kw["times"] = tuple(float(v) for v in d["times"])
            kw["points"] = tuple(tuple(float(x) for x in p) for p in d["points"])
            kw["order"] = int(d.get("order", 3))
        return cls(**kw)

    def build(self, eps: float) -> SpherePath:
        """The path at angular speed ``eps`` (waypoint times are taken as given)."""
        try:
            if self.family == "cone":
                return PrecessingCone(self.theta, eps, duration=self.periods * 2 * math.pi / eps)
            if self.family == "triangle":
                return PolarTriangle(self.theta, self.dphi, eps)
            if self.family == "great_circle":
                return GreatCircleArc(self.axis, self.arc, eps, self.start)
            return SampledWaypoints(self.times, self.points, self.order)
        except PathError as exc:
            raise ConfigError(f"[path]: {exc}") from exc


@dataclass(frozen=True)
class IntegratorConfig:
    tol: float = 1e-7
    max_steps: int = 20_000
    step_init: float | None = None


@dataclass(frozen=True)
class RunConfig:
    mode: str = "full"
    end_time_fraction: float = 0.2
    sample_count: int = 8


@dataclass(frozen=True)
class HolonomyConfig:
    """Isotropic basis used for closed-loop phases (``N = n_a + n_b + n_c <= cutoff``)."""

    cutoff: int = 3
    m_values: tuple = (-2, -1, 0, 1, 2)


@dataclass(frozen=True)
class ScanConfig:
    control: str = "stiffness_k"
    values: tuple = ()
    response: str = "u_xi"
    expected: float | None = None
    band: float | None = None
    end_time_fraction: float = 1.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = FORMATS


def _dataclass_from(cls, d: dict, where: str, convert=None):
    names = {f.name for f in fields(cls)}
    extra = sorted(set(d) - names)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    kw = dict(d)
    for k, fn in (convert or {}).items():
        if k in kw and kw[k] is not None:
            try:
                kw[k] = fn(kw[k])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}.{k}: {exc}") from exc
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Fully resolved scenario."""

    physical: PhysicalParams
    basis: BasisConfig
    path: PathSpec
    integrator: IntegratorConfig = IntegratorConfig()
    run: RunConfig = RunConfig()
    oracle_basis: BasisConfig | None = None
    holonomy: HolonomyConfig = HolonomyConfig()
    scan: ScanConfig | None = None
    output: OutputConfig = OutputConfig()
    resolved: dict = field(default_factory=dict)

    @property
    def time_scales(self) -> tuple[float, float, float]:
        return self.physical.time_scales()

    def build_path(self, eps: float | None = None) -> SpherePath:
        return self.path.build(self.physical.eps if eps is None else eps)

    def frame(self, eps: float | None = None, path: SpherePath | None = None) -> TransportedFrame:
        path = path or self.build_path(eps)
        n0, nd0 = path.evaluate(0.0)
        e1 = None
        if float(nd0 @ nd0) == 0.0:
            e1 = (1.0, 0.0, 0.0) if abs(n0[0]) < 0.9 else (0.0, 1.0, 0.0)
        return transport_frame(path, initial_e1=e1)

    def end_time(self, path: SpherePath | None = None) -> float:
        """``end_time_fraction * T1``, clipped to the path duration."""
        path = path or self.build_path()
        return min(self.run.end_time_fraction / self.physical.eps, path.duration)

    def sample_times(self, path: SpherePath | None = None) -> list[float]:
        t = self.end_time(path)
        n = self.run.sample_count
        return [t * (k + 1) / n for k in range(n)]

    def with_physical(self, **changes) -> "ScenarioConfig":
        """Copy with some physical parameters replaced (used by scans)."""
        d = {f.name: getattr(self.physical, f.name) for f in fields(PhysicalParams)}
        d.update(changes)
        out = copy.copy(self)
        object.__setattr__(out, "physical", PhysicalParams(**d))
        return out


def _parse_value(text: str):
    """A TOML scalar or array; bare words fall back to strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(tree: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides to a parsed config tree (copied)."""
    out = copy.deepcopy(tree)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = [p.strip() for p in key.strip().split(".") if p.strip()]
        if not parts:
            raise ConfigError(f"override {item!r} has an empty key")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = _parse_value(text.strip())
    return out


def _basis(d: dict, where: str) -> BasisConfig:
    conv = {"buffer": lambda b: tuple(int(x) for x in b) if isinstance(b, (list, tuple)) else int(b)}
    try:
        return _dataclass_from(BasisConfig, d, where, conv)
    except DimensionCapError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(tree: dict) -> ScenarioConfig:
    """Validate a config tree and build the scenario."""
    known = {"physical", "basis", "path", "integrator", "run", "oracle", "holonomy", "scan", "output"}
    extra = sorted(set(tree) - known)
    if extra:
        raise ConfigError(f"unknown sections {extra}")
    for sec in ("physical", "path"):
        if sec not in tree:
            raise ConfigError(f"missing section [{sec}]")
    phys_d = dict(tree["physical"])
    if "stiffness" in phys_d:
        if "potential" in phys_d:
            raise ConfigError("[physical]: give either 'potential' or 'stiffness'")
        phys_d["potential"] = (0.5 * float(phys_d.pop("stiffness")), 0.0, 0.0)
    physical = _dataclass_from(PhysicalParams, phys_d, "[physical]", {"potential": tuple})
    basis = _basis(tree.get("basis", {}), "[basis]")
    path = PathSpec.from_dict(tree["path"])
    integrator = _dataclass_from(IntegratorConfig, tree.get("integrator", {}), "[integrator]",
                                 {"tol": float, "max_steps": int, "step_init": float})
    if integrator.tol <= 0 or integrator.max_steps < 1:
        raise ConfigError("[integrator]: tol must be positive and max_steps >= 1")
    run = _dataclass_from(RunConfig, tree.get("run", {}), "[run]",
                          {"end_time_fraction": float, "sample_count": int})
    if run.mode not in MODES:
        raise ConfigError(f"[run].mode must be one of {MODES}")
    if not (0.0 < run.end_time_fraction <= 1.0):
        raise ConfigError("[run].end_time_fraction must lie in (0, 1]")
    if run.sample_count < 2:
        raise ConfigError("[run].sample_count must be >= 2")
    oracle = _basis(tree["oracle"], "[oracle]") if "oracle" in tree else None
    holonomy = _dataclass_from(HolonomyConfig, tree.get("holonomy", {}), "[holonomy]",
                               {"cutoff": int, "m_values": lambda v: tuple(int(x) for x in v)})
    if holonomy.cutoff < 1:
        raise ConfigError("[holonomy].cutoff must be >= 1")
    for mval in holonomy.m_values:
        if abs(mval) > holonomy.cutoff - 1:
            raise ConfigError(f"[holonomy]: |m| = {abs(mval)} needs cutoff >= {abs(mval) + 1}")
    scan = None
    if "scan" in tree:
        scan = _dataclass_from(ScanConfig, tree["scan"], "[scan]",
                               {"values": lambda v: tuple(float(x) for x in v), "expected": float,
                                "band": float, "end_time_fraction": float})
        if scan.control not in CONTROLS:
            raise ConfigError(f"[scan].control must be one of {CONTROLS}")
        if scan.response not in RESPONSES:
            raise ConfigError(f"[scan].response must be one of {RESPONSES}")
        if not (0.0 < scan.end_time_fraction <= 1.0):
            raise ConfigError("[scan].end_time_fraction must lie in (0, 1]")
    output = _dataclass_from(OutputConfig, tree.get("output", {}), "[output]", {"formats": tuple})
    bad = sorted(set(output.formats) - set(FORMATS))
    if bad:
        raise ConfigError(f"[output].formats: unknown {bad}")
    resolved = _resolved_tree(physical, basis, path, integrator, run, oracle, holonomy, scan, output)
    return ScenarioConfig(physical, basis, path, integrator, run, oracle, holonomy, scan, output, resolved)


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def _resolved_tree(physical, basis, path, integrator, run, oracle, holonomy, scan, output) -> dict:
    def as_dict(dc, skip=()):
        return {f.name: _plain(getattr(dc, f.name)) for f in fields(dc)
                if f.name not in skip and getattr(dc, f.name) is not None}

    path_keys = {
        "cone": ("family", "theta", "periods"),
        "triangle": ("family", "theta", "dphi"),
        "great_circle": ("family", "axis", "arc", "start"),
        "waypoints": ("family", "times", "points", "order"),
    }[path.family]
    tree = {
        "physical": as_dict(physical),
        "basis": as_dict(basis),
        "path": {k: _plain(getattr(path, k)) for k in path_keys if getattr(path, k) is not None},
        "integrator": as_dict(integrator),
        "run": as_dict(run),
        "holonomy": as_dict(holonomy),
        "output": as_dict(output),
    }
    if oracle is not None:
        tree["oracle"] = as_dict(oracle)
    if scan is not None:
        tree["scan"] = as_dict(scan)
    return tree


def load_config(path, overrides=()) -> ScenarioConfig:
    """Read a TOML scenario file, apply overrides and validate."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parse_config(apply_overrides(tree, overrides))
