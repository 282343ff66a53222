"""Scenario configuration: YAML schema, validation with field paths, defaults logging."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

logger = logging.getLogger(__name__)

NodeId = str
_ID_PATTERN = r"^[A-Za-z0-9_-]+$"
TIERS = ("gateway", "head", "sector", "leaf")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class NodeClassConfig(_Strict):
    tier: Literal["gateway", "head", "sector", "leaf"]
    initial_energy: float = Field(ge=0)


class NodeConfig(_Strict):
    id: NodeId = Field(pattern=_ID_PATTERN)
    x: float
    y: float
    node_class: str = Field(alias="class")
    initial_energy: Optional[float] = Field(default=None, ge=0)


class GeneratorConfig(_Strict):
    kind: Literal["uniform"] = "uniform"
    width: float = Field(default=100.0, gt=0)
    height: float = Field(default=100.0, gt=0)
    counts: dict[str, int]
    gateway_class: str = "gateway"
    sg_id: NodeId = Field(default="SG", pattern=_ID_PATTERN)
    sg_position: Optional[tuple[float, float]] = None  # default: centre of the field


class TopologyConfig(_Strict):
    radius: float = Field(gt=0)
    nodes: Optional[list[NodeConfig]] = None
    generator: Optional[GeneratorConfig] = None

    @model_validator(mode="after")
    def _one_source(self) -> "TopologyConfig":
        if (self.nodes is None) == (self.generator is None):
            raise ValueError("give exactly one of 'nodes' or 'generator'")
        return self


class CostConfig(_Strict):
    transmit: float = Field(default=0.05, ge=0)
    receive: float = Field(default=0.03, ge=0)
    sense: float = Field(default=0.01, ge=0)
    idle: float = Field(default=0.01, ge=0)
    sleep: float = Field(default=0.0005, ge=0)
    processing: float = Field(default=0.002, ge=0)


class ScheduleConfig(_Strict):
    period: int = Field(gt=0)
    offset: int = Field(default=0, ge=0)
    wake: int = Field(gt=0)


def _sched(period: int, offset: int, wake: int) -> ScheduleConfig:
    return ScheduleConfig(period=period, offset=offset, wake=wake)


class SchedulesConfig(_Strict):
    sic: ScheduleConfig = Field(default_factory=lambda: _sched(20, 0, 12))
    sm: ScheduleConfig = Field(default_factory=lambda: _sched(20, 0, 12))
    ln: ScheduleConfig = Field(default_factory=lambda: _sched(20, 0, 5))


class ProtocolConfig(_Strict):
    latency: int = Field(default=1, ge=1)
    round_period: int = Field(default=20, gt=0)
    discovery_period: int = Field(default=500, ge=0)  # 0: discover once, at t=0
    election_period: int = Field(default=100, gt=0)
    sample_period: int = Field(default=100, gt=0)
    clusters: int = Field(default=1, ge=1)
    sectors: int = Field(default=2, ge=1)
    rotation_factor: float = Field(default=0.5, gt=0, le=1)


class DetectionConfig(_Strict):
    enabled: bool = True
    rate_threshold: int = Field(default=10, gt=0)
    window: int = Field(default=20, gt=0)
    margin: float = Field(default=0.8, gt=0, lt=1)
    corroboration: int = Field(default=3, gt=0)


class AttackConfig(_Strict):
    id: NodeId = Field(pattern=_ID_PATTERN)
    targets: list[NodeId] = Field(default_factory=list)
    random_targets: int = Field(default=0, ge=0)
    start: int = Field(ge=0)
    stop: int = Field(ge=0)
    period: int = Field(default=1, ge=1)
    mode: Literal["sleep_targeted", "blind"] = "sleep_targeted"
    x: Optional[float] = None
    y: Optional[float] = None
    range: Optional[float] = Field(default=None, gt=0)
    energy: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "AttackConfig":
        if self.stop < self.start:
            raise ValueError("stop must not precede start")
        if (self.x is None) != (self.y is None):
            raise ValueError("give both x and y, or neither")
        if not self.targets and not self.random_targets:
            raise ValueError("attack needs targets or random_targets")
        return self


class ArrivalConfig(_Strict):
    id: NodeId = Field(pattern=_ID_PATTERN)
    x: float
    y: float
    node_class: str = Field(alias="class")
    at: int = Field(gt=0)
    initial_energy: Optional[float] = Field(default=None, ge=0)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    seed: int = Field(default=0, ge=0, lt=2**64)
    horizon: int = Field(ge=0)
    topology: TopologyConfig
    classes: dict[str, NodeClassConfig]
    costs: CostConfig = Field(default_factory=CostConfig)
    schedules: SchedulesConfig = Field(default_factory=SchedulesConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    detection: DetectionConfig = Field(default_factory=DetectionConfig)
    attacks: list[AttackConfig] = Field(default_factory=list)
    arrivals: list[ArrivalConfig] = Field(default_factory=list)
    output: Optional[str] = None

    def with_overrides(self, **changes: Any) -> "ScenarioConfig":
        """Copy with top-level or dotted-path overrides, e.g. ``{"detection.enabled": False}``."""
        data = self.model_dump(by_alias=True)
        for path, value in changes.items():
            target = data
            *head, last = path.split(".")
            for key in head:
                target = target[key]
            target[last] = value
        return ScenarioConfig.model_validate(data)

    def fingerprint(self) -> str:
        """Hash of everything that must match between a detection-on/off pair."""
        data = self.model_dump(by_alias=True, mode="json")
        data["detection"].pop("enabled")
        data.pop("output")
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid scenario config:\n" + "\n".join(f"  {e}" for e in errors))


def _loc(parts: tuple) -> str:
    return ".".join(str(p) for p in parts) or "<root>"


def _invariant_errors(cfg: ScenarioConfig) -> list[str]:
    errors = []
    for name, cls in cfg.classes.items():
        if not name.replace("_", "").replace("-", "").isalnum():
            errors.append(f"classes.{name}: class names must be alphanumeric")
    costs = cfg.costs
    if not costs.sleep < costs.idle:
        errors.append("costs.sleep: must be lower than costs.idle")
    for role in ("sic", "sm", "ln"):
        s = getattr(cfg.schedules, role)
        if s.wake > s.period:
            errors.append(f"schedules.{role}.wake: must not exceed period")
        if s.offset >= s.period:
            errors.append(f"schedules.{role}.offset: must be below period")

    ids: list[str] = []
    gateways: list[str] = []
    topo = cfg.topology
    if topo.nodes is not None:
        for i, node in enumerate(topo.nodes):
            ids.append(node.id)
            cls = cfg.classes.get(node.node_class)
            if cls is None:
                errors.append(f"topology.nodes.{i}.class: unknown class {node.node_class!r}")
            elif cls.tier == "gateway":
                gateways.append(f"topology.nodes.{i} ({node.id})")
    else:
        gen = topo.generator
        ids.append(gen.sg_id)
        gw = cfg.classes.get(gen.gateway_class)
        if gw is None or gw.tier != "gateway":
            errors.append(f"topology.generator.gateway_class: {gen.gateway_class!r} is not a gateway class")
        else:
            gateways.append(f"topology.generator ({gen.sg_id})")
        for name, count in gen.counts.items():
            cls = cfg.classes.get(name)
            if cls is None:
                errors.append(f"topology.generator.counts.{name}: unknown class")
            elif cls.tier == "gateway":
                errors.append(f"topology.generator.counts.{name}: gateway classes cannot be generated")
            if count < 0:
                errors.append(f"topology.generator.counts.{name}: must be >= 0")
        ids.extend(generated_ids(gen.counts))
    for i, arr in enumerate(cfg.arrivals):
        ids.append(arr.id)
        cls = cfg.classes.get(arr.node_class)
        if cls is None:
            errors.append(f"arrivals.{i}.class: unknown class {arr.node_class!r}")
        elif cls.tier == "gateway":
            gateways.append(f"arrivals.{i} ({arr.id})")
    if len(gateways) != 1:
        found = ", ".join(gateways) if gateways else "none"
        errors.append(f"topology: exactly one SG (gateway-tier node) required, found {found}")
    for node_id, n in Counter(ids).items():
        if n > 1:
            errors.append(f"topology: duplicate node id {node_id!r}")

    known = set(ids)
    for i, attack in enumerate(cfg.attacks):
        if attack.id in known:
            errors.append(f"attacks.{i}.id: {attack.id!r} clashes with a network node")
        for j, target in enumerate(attack.targets):
            if target not in known:
                errors.append(f"attacks.{i}.targets.{j}: unknown node {target!r}")
    return errors


def generated_ids(counts: dict[str, int]) -> list[str]:
    total = sum(max(c, 0) for c in counts.values())
    width = max(2, len(str(total)))
    return [f"N{i:0{width}d}" for i in range(1, total + 1)]


def _walk_defaults(model: BaseModel, prefix: str, out: list[str], inherited: bool = False) -> None:
    """Collect ``path=value`` for every leaf the user did not set. Unset optionals stay silent."""
    for name, field in type(model).model_fields.items():
        value = getattr(model, name)
        path = f"{prefix}{field.alias or name}"
        defaulted = inherited or (name not in model.model_fields_set and not field.is_required())
        if isinstance(value, BaseModel):
            _walk_defaults(value, path + ".", out, defaulted)
        elif isinstance(value, list):
            for i, item in enumerate(value):
                if isinstance(item, BaseModel):
                    _walk_defaults(item, f"{path}.{i}.", out, defaulted)
        elif isinstance(value, dict) and any(isinstance(v, BaseModel) for v in value.values()):
            for k, item in value.items():
                _walk_defaults(item, f"{path}.{k}.", out, defaulted)
        elif defaulted and value is not None:
            out.append(f"{path}={value!r}")


def applied_defaults(cfg: ScenarioConfig) -> list[str]:
    out: list[str] = []
    _walk_defaults(cfg, "", out)
    return out


def validate_data(data: Any) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping"])
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([f"{_loc(e['loc'])}: {e['msg']}" for e in exc.errors()]) from None
    errors = _invariant_errors(cfg)
    if errors:
        raise ConfigError(errors)
    for line in applied_defaults(cfg):
        logger.info("default applied: %s", line)
    return cfg


def validate_text(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from None
    return validate_data(data)


def validate(path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario file; bundled scenario names are accepted too."""
    resolved = resolve_scenario(path)
    try:
        text = resolved.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {resolved}: {exc.strerror}"]) from None
    return validate_text(text)


def serialize(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(by_alias=True, mode="json"), sort_keys=False)


def bundled_scenarios() -> list[str]:
    root = resources.files("wsnguard") / "scenarios"
    return sorted(p.name.rsplit(".", 1)[0] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario(path: str | Path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    stem = p.name.split(".")[0]
    candidate = resources.files("wsnguard") / "scenarios" / f"{stem}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    return p
