"""Node roster, positions and mobility."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Annotated, Literal, Mapping, Optional, Sequence, Union

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    PlainSerializer,
    field_validator,
    model_validator,
)

from .errors import ConfigError, DomainError

Role = Literal[
    "base_station",
    "user",
    "uav_relay",
    "uav_hotzone",
    "uav_safezone",
    "uav_sensor",
    "eavesdropper",
    "jammer",
]

# roles that cannot exist without a transmit power
TRANSMITTING_ROLES = frozenset({"base_station", "uav_relay", "uav_hotzone", "jammer"})


@dataclass(frozen=True)
class Position3D:
    """Cartesian position in meters; ``z`` is height above ground."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise DomainError(f"non-finite coordinate in {self!r}")
        if self.z < 0:
            raise DomainError(f"negative height in {self!r}")

    def __iter__(self):
        yield self.x
        yield self.y
        yield self.z

    def horizontal_distance(self, other: "Position3D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def _to_position(value):
    if isinstance(value, Position3D):
        return value
    if isinstance(value, Mapping):
        return Position3D(float(value["x"]), float(value["y"]), float(value["z"]))
    if isinstance(value, Sequence) and not isinstance(value, str) and len(value) == 3:
        return Position3D(*(float(v) for v in value))
    raise ValueError("position must be [x, y, z]")


PositionField = Annotated[
    Position3D,
    BeforeValidator(_to_position),
    PlainSerializer(lambda p: [p.x, p.y, p.z], return_type=list),
]

Vector3 = tuple[float, float, float]


class MobilityPolicy(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["static", "linear", "follow"] = "static"
    velocity: Vector3 = (0.0, 0.0, 0.0)
    target: Optional[str] = None
    offset: Vector3 = (0.0, 0.0, 20.0)

    @model_validator(mode="after")
    def _check(self):
        if not all(math.isfinite(v) for v in self.velocity + self.offset):
            raise ValueError("mobility vectors must be finite")
        if self.kind == "follow" and not self.target:
            raise ValueError("follow mobility needs a target node id")
        return self


class NodeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str
    role: Role
    initial_position: PositionField
    tx_power_dbm: Optional[float] = None
    tx_power_dbw: Optional[float] = None
    mobility: MobilityPolicy = MobilityPolicy()

    @field_validator("id")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("node id must be non-empty")
        return v

    @model_validator(mode="after")
    def _power(self):
        dbm, dbw = self.tx_power_dbm, self.tx_power_dbw
        if dbw is not None:
            if not math.isfinite(dbw):
                raise ValueError("tx_power_dbw must be finite")
            if dbm is not None and abs(dbm - (dbw + 30.0)) > 1e-9:
                raise ValueError("tx_power_dbm and tx_power_dbw disagree")
            # echo the effective dBm value
            object.__setattr__(self, "tx_power_dbm", dbw + 30.0)
        if self.tx_power_dbm is not None and not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")
        if self.role == "eavesdropper" and self.tx_power_dbm is not None:
            raise ValueError("eavesdroppers are passive and carry no tx power")
        if self.role in TRANSMITTING_ROLES and self.tx_power_dbm is None:
            raise ValueError(f"role {self.role} requires a tx power")
        return self


Roster = Union[Mapping[str, NodeSpec], Sequence[NodeSpec]]


def _as_map(roster: Roster) -> Mapping[str, NodeSpec]:
    if isinstance(roster, Mapping):
        return roster
    return {n.id: n for n in roster}


def validate_mobility(roster: Roster) -> None:
    """Reject follow targets that are missing or form a cycle."""
    nodes = _as_map(roster)
    for node in nodes.values():
        seen = [node.id]
        cur = node
        while cur.mobility.kind == "follow":
            tgt = cur.mobility.target
            if tgt not in nodes:
                raise ConfigError(f"node {cur.id!r} follows unknown node {tgt!r}")
            if tgt in seen:
                raise ConfigError("follow cycle: " + " -> ".join(seen + [tgt]))
            seen.append(tgt)
            cur = nodes[tgt]


def position_at(node: NodeSpec, roster: Roster, t: float) -> Position3D:
    if t < 0:
        raise DomainError(f"negative time {t}")
    nodes = _as_map(roster)
    return _position(node, nodes, t, ())


def _position(node, nodes, t, chain):
    m = node.mobility
    p = node.initial_position
    if m.kind == "static":
        return p
    if m.kind == "linear":
        vx, vy, vz = m.velocity
        return Position3D(p.x + vx * t, p.y + vy * t, max(0.0, p.z + vz * t))
    if m.target not in nodes:
        raise ConfigError(f"node {node.id!r} follows unknown node {m.target!r}")
    if node.id in chain:
        raise ConfigError("follow cycle through " + node.id)
    base = _position(nodes[m.target], nodes, t, chain + (node.id,))
    ox, oy, oz = m.offset
    return Position3D(base.x + ox, base.y + oy, max(0.0, base.z + oz))


def distance(a: Position3D, b: Position3D) -> float:
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


def elevation_angle(ground: Position3D, aerial: Position3D) -> float:
    """Elevation of ``aerial`` seen from ``ground`` in degrees, in (0, 90]."""
    dz = aerial.z - ground.z
    if not dz > 0:
        raise DomainError("aerial node must be strictly above the ground node")
    h = ground.horizontal_distance(aerial)
    if h == 0:
        return 90.0
    return math.degrees(math.atan2(dz, h))


def azimuth_deg(origin: Position3D, target: Position3D) -> float:
    """Horizontal bearing from origin to target in [0, 360); 0 when coincident."""
    dx, dy = target.x - origin.x, target.y - origin.y
    if dx == 0 and dy == 0:
        return 0.0
    return math.degrees(math.atan2(dy, dx)) % 360.0
