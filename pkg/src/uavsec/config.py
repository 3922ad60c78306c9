"""Scenario configuration: schema, validation and loading."""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .channel import ChannelParams
from .errors import ConfigError
from .linkmetrics import NoiseModel
from .policies import PolicyConfig
from .scene import NodeSpec, validate_mobility

CSV_COLUMNS = (
    "t_s",
    "user_x_m",
    "user_y_m",
    "user_z_m",
    "serving_bs",
    "rate_direct_bps",
    "rate_relay_bps",
    "rate_hotzone_bps",
    "secrecy_direct_bps",
    "secrecy_relay_bps",
    "secrecy_handover_bps",
    "detect_flags",
    "mitigation_state",
)

BUNDLED = ("scenario_a", "scenario_b")


class DetectionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    enabled: bool = False
    window_len: int = Field(10, ge=1)
    monitored: Optional[list[str]] = None
    threshold_mode: Literal["absolute", "snr_offset"] = "snr_offset"
    threshold_db: float = Field(0.0, allow_inf_nan=False)
    offset_db: float = Field(10.0, allow_inf_nan=False)
    k_mad: float = Field(3.0, gt=0)


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    duration_s: float = Field(gt=0, allow_inf_nan=False)
    timestep_s: float = Field(0.1, gt=0, allow_inf_nan=False)
    master_seed: int = Field(0, ge=0, lt=2**64)
    nodes: list[NodeSpec]
    channel: ChannelParams = ChannelParams()
    noise: NoiseModel = NoiseModel()
    bandwidth_hz: float = Field(1.0e7, gt=0, allow_inf_nan=False)
    policies: PolicyConfig = PolicyConfig()
    detection: DetectionConfig = DetectionConfig()
    outputs: list[str] = Field(default_factory=lambda: list(CSV_COLUMNS))

    @model_validator(mode="after")
    def _check(self):
        seen = set()
        for n in self.nodes:
            if n.id in seen:
                raise ValueError(f"duplicate node id {n.id!r}")
            seen.add(n.id)
        roles = {n.id: n.role for n in self.nodes}
        if "base_station" not in roles.values():
            raise ValueError("scenario needs at least one base_station")
        if "user" not in roles.values():
            raise ValueError("scenario needs at least one user")
        bad = [c for c in self.outputs if c not in CSV_COLUMNS]
        if bad:
            raise ValueError(f"unknown output columns {bad}")
        pol = self.policies
        _ref(roles, pol.direct_bs, "base_station", "policies.direct_bs")
        _ref(roles, pol.protected_user, "user", "policies.protected_user")
        _ref(roles, pol.uplink.aggressor, "user", "policies.uplink.aggressor")
        if pol.uplink.aggressor is not None:
            try:
                protected = self.protected_user
            except ConfigError as exc:
                raise ValueError(str(exc)) from None
            if pol.uplink.aggressor == protected:
                raise ValueError("the uplink aggressor cannot be the protected user")
            agg = next(n for n in self.nodes if n.id == pol.uplink.aggressor)
            if agg.tx_power_dbm is None:
                raise ValueError("the uplink aggressor needs tx_power_dbm")
        for m in self.detection.monitored or ():
            _ref(roles, m, "user", "detection.monitored")
        try:
            validate_mobility(self.nodes)
        except ConfigError as exc:
            raise ValueError(str(exc)) from None
        return self

    @property
    def protected_user(self) -> str:
        if self.policies.protected_user:
            return self.policies.protected_user
        agg = self.policies.uplink.aggressor
        for n in self.nodes:
            if n.role == "user" and n.id != agg:
                return n.id
        raise ConfigError("no downlink user besides the uplink aggressor")

    def nodes_with_role(self, role: str) -> list[NodeSpec]:
        return [n for n in self.nodes if n.role == role]

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2)


def _ref(roles, node_id, role, field):
    if node_id is None:
        return
    if node_id not in roles:
        raise ValueError(f"{field} refers to unknown node {node_id!r}")
    if roles[node_id] != role:
        raise ValueError(f"{field} must name a {role}, {node_id!r} is a {roles[node_id]}")


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_scenario(data: Union[dict, str], source: str = "<string>") -> ScenarioConfig:
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {_format_validation(exc)}") from None


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("uavsec") / "scenarios" / f"{name}.json"))


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Load and validate a scenario file; bundled names like ``scenario_a`` also resolve."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise OSError(f"cannot read scenario {p}: {exc.strerror}") from exc
    return parse_scenario(text, str(p))


def record_count(cfg: ScenarioConfig) -> int:
    return int(math.floor(cfg.duration_s / cfg.timestep_s + 1e-9)) + 1
