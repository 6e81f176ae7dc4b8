"""Scenario files: ``Section.key = value`` lines, ``#`` comments.

Sections are ``Scenario``, ``Zones``, ``Bluetooth``, ``Highspeed``,
``Prophet`` and ``Group1`` .. ``GroupN`` (numbered contiguously). Sizes take
``k``/``M``/``G`` suffixes (powers of 1024); times take ``s``/``m``/``h``/``d``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .geo import DEFAULT_SNAP_EPSILON, MapLayer, Point, ZoneModel
from .mobility import Bounds, MobilityConfig, MovementModel
from .net import DEFAULT_INTERFACES, InterfaceKind, InterfaceSpec
from .routing import DEFAULT_TTL, ProphetParams

PHASES = (1, 2, 3, 4)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class GroupConfig:
    label: str
    count: int
    inside_zones: bool
    layer: MapLayer
    buffer: int
    interfaces: tuple[InterfaceKind, ...]
    mobility: MobilityConfig
    detection_capable: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration: float
    zones: ZoneModel
    groups: tuple[GroupConfig, ...]
    step: float = 1.0
    seed: int = 0
    ttl: float = DEFAULT_TTL
    map_path: str | None = None  # None: the bundled synthetic map
    snap_epsilon: float = DEFAULT_SNAP_EPSILON
    world_bounds: Bounds | None = None
    interfaces: dict = field(default_factory=lambda: dict(DEFAULT_INTERFACES))
    prophet: ProphetParams = ProphetParams()

    @property
    def host_count(self) -> int:
        return sum(g.count for g in self.groups)

    def scaled(self, duration_scale: float = 1.0, step: float | None = None, seed: int | None = None) -> ScenarioConfig:
        return replace(
            self,
            duration=self.duration * duration_scale,
            step=self.step if step is None else step,
            seed=self.seed if seed is None else seed,
        )

    def map_text(self) -> str:
        if self.map_path is None:
            return resources.files("pnesim").joinpath("data", "synthetic_map.wkt").read_text()
        return Path(self.map_path).read_text(encoding="utf-8")


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    if not cfg.duration > 0:
        raise ConfigError("Scenario.duration must be positive")
    if not cfg.step > 0:
        raise ConfigError("Scenario.step must be positive")
    if not cfg.ttl > 0:
        raise ConfigError("Scenario.ttl must be positive")
    if not cfg.groups:
        raise ConfigError("scenario needs at least one group")
    for i, g in enumerate(cfg.groups, 1):
        if g.count < 0:
            raise ConfigError(f"Group{i}.nodeCount must be >= 0")
        if g.buffer <= 0:
            raise ConfigError(f"Group{i}.bufferSize must be positive")
        if not g.interfaces:
            raise ConfigError(f"Group{i}.interfaces must not be empty")
        for kind in g.interfaces:
            if kind not in cfg.interfaces:
                raise ConfigError(f"Group{i}.interfaces uses undefined interface {kind.value}")
    capable = sum(g.count for g in cfg.groups if g.detection_capable)
    if any(g.detection_capable and g.count for g in cfg.groups) and capable < 2:
        raise ConfigError("detection-capable groups need at least 2 hosts in total")
    return cfg


# ----------------------------------------------------------------- values

_SIZE = {"": 1, "k": 1024, "M": 1024**2, "G": 1024**3}
_TIME = {"": 1, "s": 1, "m": 60, "h": 3600, "d": 86400}
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def parse_size(text: str) -> int:
    m = re.fullmatch(rf"\s*({_NUM})\s*([kMG]?)\s*", text)
    if not m:
        raise ValueError(f"bad size {text!r}")
    return int(round(float(m.group(1)) * _SIZE[m.group(2)]))


def parse_rate(text: str) -> float:
    m = re.fullmatch(rf"\s*({_NUM})\s*([kMG]?)\s*", text)
    if not m:
        raise ValueError(f"bad rate {text!r}")
    return float(m.group(1)) * _SIZE[m.group(2)]


def parse_time(text: str) -> float:
    m = re.fullmatch(rf"\s*({_NUM})\s*([smhd]?)\s*", text)
    if not m:
        raise ValueError(f"bad time {text!r}")
    return float(m.group(1)) * _TIME[m.group(2)]


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"bad boolean {text!r}")


def _floats(text: str, n: int | None = None, conv=float) -> tuple:
    vals = tuple(conv(v) for v in text.split(","))
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated values, got {len(vals)}")
    return vals


def _kinds(text: str) -> tuple[InterfaceKind, ...]:
    return tuple(InterfaceKind(v.strip().lower()) for v in text.split(",") if v.strip())


# key -> converter
_SCENARIO_KEYS = {
    "name": str.strip,
    "duration": parse_time,
    "step": parse_time,
    "seed": int,
    "ttl": parse_time,
    "map": str.strip,
    "snapEpsilon": float,
    "worldBounds": lambda v: Bounds(*_floats(v, 4)),
}
_ZONE_KEYS = {"center": lambda v: Point(*_floats(v, 2)), "radii": lambda v: _floats(v, 6)}
_IFACE_KEYS = {"range": float, "bitrate": parse_rate}
_PROPHET_KEYS = {"pInit": float, "beta": float, "gamma": float, "agingUnit": parse_time}
_GROUP_KEYS = {
    "label": str.strip,
    "nodeCount": int,
    "insideZones": parse_bool,
    "layer": lambda v: MapLayer(v.strip().lower()),
    "bufferSize": parse_size,
    "interfaces": _kinds,
    "movementModel": lambda v: MovementModel(v.strip()),
    "speed": lambda v: _floats(v, 2, parse_time),
    "waitTime": lambda v: _floats(v, 2, parse_time),
    "detectionCapable": parse_bool,
}
_GROUP_REQUIRED = ("nodeCount", "bufferSize", "interfaces", "movementModel", "speed", "waitTime")


def _section_keys(section: str):
    if section == "Scenario":
        return _SCENARIO_KEYS
    if section == "Zones":
        return _ZONE_KEYS
    if section in ("Bluetooth", "Highspeed"):
        return _IFACE_KEYS
    if section == "Prophet":
        return _PROPHET_KEYS
    if re.fullmatch(r"Group[1-9]\d*", section):
        return _GROUP_KEYS
    return None


def parse_config(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    values: dict[str, dict[str, object]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"([A-Za-z]\w*)\.([A-Za-z]\w*)\s*=\s*(.*)", line)
        if not m:
            raise ConfigError(f"expected 'Section.key = value', got {raw.strip()!r}", lineno)
        section, key, value = m.groups()
        keys = _section_keys(section)
        if keys is None:
            raise ConfigError(f"unknown section {section!r}", lineno)
        if key not in keys:
            raise ConfigError(f"unknown key {section}.{key}", lineno)
        if not value.strip():
            raise ConfigError(f"empty value for {section}.{key}", lineno)
        try:
            values.setdefault(section, {})[key] = keys[key](value)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{section}.{key}: {e}", lineno) from None
    return _assemble(values, base_dir)


def _require(values, section, key):
    try:
        return values[section][key]
    except KeyError:
        raise ConfigError(f"missing required key {section}.{key}") from None


def _assemble(values: dict, base_dir: Path | None) -> ScenarioConfig:
    sc = values.get("Scenario", {})
    n_groups = 0
    while f"Group{n_groups + 1}" in values:
        n_groups += 1
    stray = [s for s in values if s.startswith("Group") and int(s[5:]) > n_groups]
    if stray:
        raise ConfigError(f"group sections must be numbered contiguously from 1: {sorted(stray)}")

    groups = []
    for i in range(1, n_groups + 1):
        sec = f"Group{i}"
        for key in _GROUP_REQUIRED:
            _require(values, sec, key)
        g = values[sec]
        inside = g.get("insideZones", False)
        model = g["movementModel"]
        layer = g.get("layer", MapLayer.INSIDE if inside else MapLayer.OUTSIDE)
        try:
            mob = MobilityConfig(model, *g["speed"], *g["waitTime"], layer=layer)
        except ValueError as e:
            raise ConfigError(f"{sec}: {e}") from None
        groups.append(GroupConfig(
            label=g.get("label", sec),
            count=g["nodeCount"],
            inside_zones=inside,
            layer=layer,
            buffer=g["bufferSize"],
            interfaces=g["interfaces"],
            mobility=mob,
            detection_capable=g.get("detectionCapable", False),
        ))

    try:
        zones = ZoneModel(_require(values, "Zones", "center"), _require(values, "Zones", "radii"))
    except ValueError as e:
        raise ConfigError(f"Zones: {e}") from None

    interfaces = dict(DEFAULT_INTERFACES)
    for kind in InterfaceKind:
        sec = values.get(kind.name.capitalize(), {})
        base = interfaces[kind]
        try:
            interfaces[kind] = InterfaceSpec(kind, sec.get("range", base.range), sec.get("bitrate", base.bitrate))
        except ValueError as e:
            raise ConfigError(f"{kind.name.capitalize()}: {e}") from None

    pr = values.get("Prophet", {})
    d = ProphetParams()
    try:
        prophet = ProphetParams(pr.get("pInit", d.p_init), pr.get("beta", d.beta),
                                pr.get("gamma", d.gamma), pr.get("agingUnit", d.aging_unit))
    except ValueError as e:
        raise ConfigError(f"Prophet: {e}") from None

    map_path = sc.get("map")
    if map_path is not None and base_dir is not None and not Path(map_path).is_absolute():
        map_path = str((base_dir / map_path).resolve())

    cfg = ScenarioConfig(
        name=sc.get("name", "scenario"),
        duration=_require(values, "Scenario", "duration"),
        zones=zones,
        groups=tuple(groups),
        step=sc.get("step", 1.0),
        seed=sc.get("seed", 0),
        ttl=sc.get("ttl", DEFAULT_TTL),
        map_path=map_path,
        snap_epsilon=sc.get("snapEpsilon", DEFAULT_SNAP_EPSILON),
        world_bounds=sc.get("worldBounds"),
        interfaces=interfaces,
        prophet=prophet,
    )
    return validate(cfg)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


def bundled_phase(phase: int) -> ScenarioConfig:
    if phase not in PHASES:
        raise ConfigError(f"no bundled phase {phase}; choose from {PHASES}")
    text = resources.files("pnesim").joinpath("data", f"phase{phase}.cfg").read_text()
    return parse_config(text)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical form: every key explicit, plain units, lossless floats."""
    out = [
        f"Scenario.name = {cfg.name}",
        f"Scenario.duration = {cfg.duration!r}",
        f"Scenario.step = {cfg.step!r}",
        f"Scenario.seed = {cfg.seed}",
        f"Scenario.ttl = {cfg.ttl!r}",
    ]
    if cfg.map_path is not None:
        out.append(f"Scenario.map = {cfg.map_path}")
    out.append(f"Scenario.snapEpsilon = {cfg.snap_epsilon!r}")
    if cfg.world_bounds is not None:
        b = cfg.world_bounds
        out.append(f"Scenario.worldBounds = {b.x0!r}, {b.y0!r}, {b.x1!r}, {b.y1!r}")
    z = cfg.zones
    out.append(f"Zones.center = {z.center.x!r}, {z.center.y!r}")
    out.append("Zones.radii = " + ", ".join(repr(r) for r in z.radii))
    for kind in InterfaceKind:
        spec = cfg.interfaces[kind]
        sec = kind.name.capitalize()
        out.append(f"{sec}.range = {spec.range!r}")
        out.append(f"{sec}.bitrate = {spec.bitrate!r}")
    p = cfg.prophet
    out += [f"Prophet.pInit = {p.p_init!r}", f"Prophet.beta = {p.beta!r}",
            f"Prophet.gamma = {p.gamma!r}", f"Prophet.agingUnit = {p.aging_unit!r}"]
    for i, g in enumerate(cfg.groups, 1):
        m = g.mobility
        sec = f"Group{i}"
        out += [
            f"{sec}.label = {g.label}",
            f"{sec}.nodeCount = {g.count}",
            f"{sec}.insideZones = {str(g.inside_zones).lower()}",
            f"{sec}.layer = {g.layer.value}",
            f"{sec}.bufferSize = {g.buffer}",
            f"{sec}.interfaces = " + ", ".join(k.value for k in g.interfaces),
            f"{sec}.movementModel = {m.model.value}",
            f"{sec}.speed = {m.speed_min!r}, {m.speed_max!r}",
            f"{sec}.waitTime = {m.wait_min!r}, {m.wait_max!r}",
            f"{sec}.detectionCapable = {str(g.detection_capable).lower()}",
        ]
    return "\n".join(out) + "\n"
