"""System configuration: one JSON document covering every module.

Validation collects every violation instead of stopping at the first, and
unknown keys are rejected at all levels. An empty document yields the
documented defaults, including a built-in demo topology: two independent
diamond-shaped domains (four traditional routers, four SDN switches),
each with a pair of disjoint paths between its two edge subnets.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .actioner import ActionerConfig
from .analytics import AnalyticsConfig, MS_PER_HOUR
from .netsim import DeviceSpec, LinkSpec, TopologySpec, Demand, TrafficProfile
from .pipeline import COUNTER_FIELDS

# 2018-04-04T00:00:00Z; a whole-day boundary keeps hour-of-day = virtual hour.
DEFAULT_EPOCH_MS = 1_522_800_000_000
DEFAULT_PORT = 8080
# 8 Mbps links keep a full hour at line rate under one 32-bit counter wrap,
# so hourly deltas stay unambiguous.
DEFAULT_LINK_CAPACITY_BPS = 8_000_000
DEFAULT_LAN_CAPACITY_BPS = 1_000_000_000

BUSINESS_HOURS = range(8, 17)  # 08:00-16:59


class ParseError(Exception):
    pass


class ValidationError(Exception):
    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(violations))


def default_topology_doc() -> dict:
    c = DEFAULT_LINK_CAPACITY_BPS
    return {
        "devices": [
            {"id": "R1", "kind": "traditional", "mgmt_ip": "10.0.0.11"},
            {"id": "R2", "kind": "traditional", "mgmt_ip": "10.0.0.12"},
            {"id": "R3", "kind": "traditional", "mgmt_ip": "10.0.0.13"},
            {"id": "R4", "kind": "traditional", "mgmt_ip": "10.0.0.14"},
            {"id": "S1", "kind": "sdn-switch", "mgmt_ip": "10.0.0.21"},
            {"id": "S2", "kind": "sdn-switch", "mgmt_ip": "10.0.0.22"},
            {"id": "S3", "kind": "sdn-switch", "mgmt_ip": "10.0.0.23"},
            {"id": "S4", "kind": "sdn-switch", "mgmt_ip": "10.0.0.24"},
        ],
        "links": [
            {"a": ["R1", "FastEthernet0_1"], "b": ["R2", "FastEthernet0_1"], "capacity_bps": c},
            {"a": ["R2", "FastEthernet0_2"], "b": ["R3", "FastEthernet0_1"], "capacity_bps": c},
            {"a": ["R1", "FastEthernet0_2"], "b": ["R4", "FastEthernet0_1"], "capacity_bps": c},
            {"a": ["R4", "FastEthernet0_2"], "b": ["R3", "FastEthernet0_2"], "capacity_bps": c},
            {"a": ["S1", "eth1"], "b": ["S2", "eth1"], "capacity_bps": c},
            {"a": ["S2", "eth2"], "b": ["S3", "eth1"], "capacity_bps": c},
            {"a": ["S1", "eth2"], "b": ["S4", "eth1"], "capacity_bps": c},
            {"a": ["S4", "eth2"], "b": ["S3", "eth2"], "capacity_bps": c},
        ],
        "subnets": {
            "10.0.1.0/24": ["R1", "FastEthernet0_0"],
            "10.0.2.0/24": ["R3", "FastEthernet0_0"],
            "10.1.1.0/24": ["S1", "eth0"],
            "10.1.2.0/24": ["S3", "eth0"],
        },
    }


def default_profile_doc() -> dict:
    business = 0.6 * DEFAULT_LINK_CAPACITY_BPS
    off = 0.1 * DEFAULT_LINK_CAPACITY_BPS
    sigma = 0.05 * DEFAULT_LINK_CAPACITY_BPS
    hourly = [business if h in BUSINESS_HOURS else off for h in range(24)]
    return {
        "rng_seed": 42,
        "demands": [
            {
                "src_prefix": "10.0.1.0/24",
                "dst_prefix": "10.0.2.0/24",
                "hourly_mean_bps": hourly,
                "noise_sigma_bps": sigma,
            },
            {
                "src_prefix": "10.1.1.0/24",
                "dst_prefix": "10.1.2.0/24",
                "hourly_mean_bps": hourly,
                "noise_sigma_bps": sigma,
            },
        ],
    }


@dataclass
class SimConfig:
    epoch_ms: int = DEFAULT_EPOCH_MS
    acceleration: float = 3600.0
    free_run: bool = False
    lan_capacity_bps: int = DEFAULT_LAN_CAPACITY_BPS
    topology: dict = field(default_factory=default_topology_doc)
    profile: dict = field(default_factory=default_profile_doc)


@dataclass
class CollectorConfig:
    period_ms: int = MS_PER_HOUR
    jitter_ms: int = 0


@dataclass
class PipelineConfig:
    allow: list[str] = field(default_factory=lambda: list(COUNTER_FIELDS))
    topics: dict[str, str] = field(default_factory=lambda: {"collectd": "collectd", "sdn": "sdn"})


@dataclass
class ServerConfig:
    port: int = DEFAULT_PORT
    static_dir: Optional[str] = None


@dataclass
class SystemConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    collector: CollectorConfig = field(default_factory=CollectorConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)
    actioner: ActionerConfig = field(default_factory=ActionerConfig)
    monitored_links: Optional[list[dict]] = None  # None = derive from demand paths
    server: ServerConfig = field(default_factory=ServerConfig)
    data_dir: str = "trendnet-data"

    def duration_ms(self) -> int:
        return self.actioner.duration_periods * self.analytics.sample_period_ms


_SECTION_KEYS = {
    "sim": {"epoch_ms", "acceleration", "free_run", "lan_capacity_bps", "topology", "profile"},
    "collector": {"period_ms", "jitter_ms"},
    "pipeline": {"allow", "topics"},
    "analytics": {
        "threshold_fraction",
        "deviation_multiplier",
        "confirm_window",
        "sample_period_ms",
        "benchmark_days",
        "benchmark_reset_period_ms",
        "sigma_floor",
    },
    "actioner": {
        "lp_low",
        "lp_high",
        "flow_priority",
        "duration_periods",
        "policy",
        "sdn_hard_timeout",
    },
    "server": {"port", "static_dir"},
}
_TOP_KEYS = set(_SECTION_KEYS) | {"monitored_links", "data_dir"}

# Fields that may change over PUT /config on a live system. Everything
# else shapes the topology, cadence, or storage and needs a restart.
RUNTIME_MUTABLE = {
    ("analytics", "threshold_fraction"),
    ("analytics", "deviation_multiplier"),
    ("analytics", "confirm_window"),
    ("analytics", "benchmark_days"),
    ("analytics", "benchmark_reset_period_ms"),
    ("analytics", "sigma_floor"),
    ("actioner", "lp_low"),
    ("actioner", "lp_high"),
    ("actioner", "flow_priority"),
    ("actioner", "duration_periods"),
    ("actioner", "policy"),
    ("actioner", "sdn_hard_timeout"),
}


def _apply_section(target, doc: dict, section: str, violations: list[str]) -> None:
    known = _SECTION_KEYS[section]
    for key, value in doc.items():
        if key not in known:
            violations.append(f"{section}.{key}: unknown key")
            continue
        setattr(target, key, value)


def _check_types(cfg: SystemConfig, violations: list[str]) -> None:
    numeric_positive = [
        ("sim.epoch_ms", cfg.sim.epoch_ms, True),
        ("sim.acceleration", cfg.sim.acceleration, False),
        ("sim.lan_capacity_bps", cfg.sim.lan_capacity_bps, False),
        ("collector.period_ms", cfg.collector.period_ms, False),
        ("server.port", cfg.server.port, False),
    ]
    for name, value, zero_ok in numeric_positive:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            violations.append(f"{name}: must be a number")
        elif value < 0 or (value == 0 and not zero_ok):
            violations.append(f"{name}: must be positive")
    if cfg.collector.jitter_ms < 0:
        violations.append("collector.jitter_ms: must be non-negative")

    if not cfg.pipeline.allow:
        violations.append("pipeline.allow: must not be empty")
    else:
        unknown = set(cfg.pipeline.allow) - set(COUNTER_FIELDS)
        if unknown:
            violations.append(f"pipeline.allow: unknown counter fields {sorted(unknown)}")
    for src in ("collectd", "sdn"):
        if src not in cfg.pipeline.topics or not cfg.pipeline.topics[src]:
            violations.append(f"pipeline.topics.{src}: required")

    violations.extend(f"analytics.{p}" for p in cfg.analytics.validate())
    violations.extend(f"actioner.{p}" for p in cfg.actioner.validate())

    if cfg.collector.period_ms != cfg.analytics.sample_period_ms:
        violations.append(
            "collector.period_ms: must equal analytics.sample_period_ms "
            "(one poll per analysis sample)"
        )


def build_config(doc: dict) -> SystemConfig:
    """Validate a parsed config document, filling defaults; raises with
    every violation collected."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        raise ValidationError(["config document must be a JSON object"])
    cfg = SystemConfig()
    for key in doc:
        if key not in _TOP_KEYS:
            violations.append(f"{key}: unknown key")
    for section, target in (
        ("sim", cfg.sim),
        ("collector", cfg.collector),
        ("pipeline", cfg.pipeline),
        ("analytics", cfg.analytics),
        ("actioner", cfg.actioner),
        ("server", cfg.server),
    ):
        sub = doc.get(section)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            violations.append(f"{section}: must be an object")
            continue
        _apply_section(target, sub, section, violations)
    if "monitored_links" in doc:
        cfg.monitored_links = doc["monitored_links"]
        if cfg.monitored_links is not None:
            for i, entry in enumerate(cfg.monitored_links):
                if not isinstance(entry, dict) or not {"host_ip", "interface"} <= set(entry):
                    violations.append(f"monitored_links[{i}]: needs host_ip and interface")
    if "data_dir" in doc:
        if not isinstance(doc["data_dir"], str) or not doc["data_dir"]:
            violations.append("data_dir: must be a non-empty string")
        else:
            cfg.data_dir = doc["data_dir"]

    _check_types(cfg, violations)
    try:
        build_topology_spec(cfg.sim.topology)
    except ValidationError as exc:
        violations.extend(f"sim.topology: {v}" for v in exc.violations)
    try:
        build_traffic_profile(cfg.sim.profile)
    except ValidationError as exc:
        violations.extend(f"sim.profile: {v}" for v in exc.violations)

    if violations:
        raise ValidationError(violations)
    return cfg


def load_config(path: str) -> SystemConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return build_config(doc)


def build_topology_spec(doc: dict) -> TopologySpec:
    violations = []
    devices = []
    for i, dev in enumerate(doc.get("devices", [])):
        missing = {"id", "kind", "mgmt_ip"} - set(dev)
        if missing:
            violations.append(f"devices[{i}]: missing {sorted(missing)}")
            continue
        if dev["kind"] not in ("traditional", "sdn-switch"):
            violations.append(f"devices[{i}]: kind must be traditional or sdn-switch")
            continue
        devices.append(DeviceSpec(id=dev["id"], kind=dev["kind"], mgmt_ip=dev["mgmt_ip"]))
    links = []
    for i, link in enumerate(doc.get("links", [])):
        try:
            links.append(
                LinkSpec(
                    endpoint_a=(link["a"][0], link["a"][1]),
                    endpoint_b=(link["b"][0], link["b"][1]),
                    capacity_bps=int(link["capacity_bps"]),
                )
            )
        except (KeyError, IndexError, TypeError, ValueError):
            violations.append(f"links[{i}]: needs a, b endpoints and capacity_bps")
    subnets = {}
    for prefix, attach in doc.get("subnets", {}).items():
        if not isinstance(attach, (list, tuple)) or len(attach) != 2:
            violations.append(f"subnets[{prefix}]: attachment must be [device, interface]")
            continue
        subnets[prefix] = (attach[0], attach[1])
    if violations:
        raise ValidationError(violations)
    return TopologySpec(devices=tuple(devices), links=tuple(links), subnets=subnets)


def build_traffic_profile(doc: dict) -> TrafficProfile:
    violations = []
    demands = []
    for i, d in enumerate(doc.get("demands", [])):
        missing = {"src_prefix", "dst_prefix", "hourly_mean_bps"} - set(d)
        if missing:
            violations.append(f"demands[{i}]: missing {sorted(missing)}")
            continue
        hourly = d["hourly_mean_bps"]
        if len(hourly) != 24:
            violations.append(f"demands[{i}]: hourly_mean_bps needs exactly 24 entries")
            continue
        if any(v < 0 for v in hourly):
            violations.append(f"demands[{i}]: hourly means must be non-negative")
            continue
        sigma = d.get("noise_sigma_bps", 0.0)
        if sigma < 0:
            violations.append(f"demands[{i}]: noise_sigma_bps must be non-negative")
            continue
        demands.append(
            Demand(
                src_prefix=d["src_prefix"],
                dst_prefix=d["dst_prefix"],
                hourly_mean_bps=tuple(float(v) for v in hourly),
                noise_sigma_bps=float(sigma),
            )
        )
    if violations:
        raise ValidationError(violations)
    return TrafficProfile(demands=tuple(demands), rng_seed=int(doc.get("rng_seed", 0)))


def config_document(cfg: SystemConfig) -> dict:
    """The full effective configuration, defaults included."""
    return {
        "sim": {
            "epoch_ms": cfg.sim.epoch_ms,
            "acceleration": cfg.sim.acceleration,
            "free_run": cfg.sim.free_run,
            "lan_capacity_bps": cfg.sim.lan_capacity_bps,
            "topology": cfg.sim.topology,
            "profile": cfg.sim.profile,
        },
        "collector": {"period_ms": cfg.collector.period_ms, "jitter_ms": cfg.collector.jitter_ms},
        "pipeline": {"allow": list(cfg.pipeline.allow), "topics": dict(cfg.pipeline.topics)},
        "analytics": {
            "threshold_fraction": cfg.analytics.threshold_fraction,
            "deviation_multiplier": cfg.analytics.deviation_multiplier,
            "confirm_window": cfg.analytics.confirm_window,
            "sample_period_ms": cfg.analytics.sample_period_ms,
            "benchmark_days": cfg.analytics.benchmark_days,
            "benchmark_reset_period_ms": cfg.analytics.benchmark_reset_period_ms,
            "sigma_floor": cfg.analytics.sigma_floor,
        },
        "actioner": {
            "lp_low": cfg.actioner.lp_low,
            "lp_high": cfg.actioner.lp_high,
            "flow_priority": cfg.actioner.flow_priority,
            "duration_periods": cfg.actioner.duration_periods,
            "policy": cfg.actioner.policy,
            "sdn_hard_timeout": cfg.actioner.sdn_hard_timeout,
        },
        "monitored_links": cfg.monitored_links,
        "server": {"port": cfg.server.port, "static_dir": cfg.server.static_dir},
        "data_dir": cfg.data_dir,
    }


def apply_runtime_update(cfg: SystemConfig, patch: dict) -> list[str]:
    """Apply a PUT /config patch in place; returns violations (empty = ok).

    Only RUNTIME_MUTABLE fields may change while the system is live.
    """
    violations: list[str] = []
    staged: list[tuple[Any, str, Any]] = []
    if not isinstance(patch, dict):
        return ["config patch must be a JSON object"]
    for section, sub in patch.items():
        if section not in _SECTION_KEYS:
            violations.append(f"{section}: unknown or immutable section")
            continue
        if not isinstance(sub, dict):
            violations.append(f"{section}: must be an object")
            continue
        target = getattr(cfg, section)
        for key, value in sub.items():
            if key not in _SECTION_KEYS[section]:
                violations.append(f"{section}.{key}: unknown key")
            elif (section, key) not in RUNTIME_MUTABLE:
                violations.append(f"{section}.{key}: not changeable at runtime")
            else:
                staged.append((target, key, value))
    if violations:
        return violations

    before = [(target, key, getattr(target, key)) for target, key, _v in staged]
    for target, key, value in staged:
        setattr(target, key, value)
    check: list[str] = []
    _check_types(cfg, check)
    if check:
        for target, key, value in before:
            setattr(target, key, value)
        return check
    return []
