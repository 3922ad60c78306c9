"""Per-step defense policies: relaying, secrecy handover, hot zones,
artificial-noise safe zones and uplink-interference mitigation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .channel import ChannelParams, classify_link, is_aerial, mean_link_gain
from .errors import DomainError
from .linkmetrics import (
    LinkState,
    NoiseModel,
    SecrecyResult,
    dbm_to_watts,
    egc_combine,
    shannon_rate,
)
from .scene import NodeSpec, Position3D, azimuth_deg


class SafezoneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    an_power_dbm: float = Field(20.0, allow_inf_nan=False)
    sector_width_deg: float = Field(30.0, gt=0, le=180)
    guard_angle_deg: float = Field(10.0, ge=0, allow_inf_nan=False)
    sector_centers: Union[Literal["auto"], list[float]] = "auto"


class UplinkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    aggressor: Optional[str] = None
    interference_threshold_dbm: float = Field(-90.0, allow_inf_nan=False)
    mitigation: Literal["deny", "dedicated_resources", "power_control"] = "power_control"
    dedicated_share: float = Field(0.1, gt=0, lt=1)
    num_resource_blocks: int = Field(50, ge=2)
    aggressor_rbs: list[int] = Field(default_factory=lambda: list(range(5)))
    contrast_floor_db: float = 3.0

    @model_validator(mode="after")
    def _rbs(self):
        if not self.aggressor_rbs:
            raise ValueError("aggressor_rbs must be non-empty")
        if any(not 0 <= rb < self.num_resource_blocks for rb in self.aggressor_rbs):
            raise ValueError("aggressor_rbs outside [0, num_resource_blocks)")
        if len(set(self.aggressor_rbs)) == self.num_resource_blocks:
            raise ValueError("aggressor cannot occupy every resource block")
        return self


class PolicyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    relay_enabled: bool = False
    handover_enabled: bool = False
    hotzone_enabled: bool = False
    safezone_enabled: bool = False
    protected_user: Optional[str] = None
    direct_bs: Optional[str] = None
    association: Literal["fixed", "strongest"] = "fixed"
    relay_mode: Literal["forced_relay", "best_of"] = "forced_relay"
    relay_half_duplex: bool = False
    handover_hysteresis_bps: float = Field(0.0, ge=0, allow_inf_nan=False)
    egc_fallback: bool = True
    safezone: SafezoneConfig = SafezoneConfig()
    uplink: UplinkConfig = UplinkConfig()


@dataclass(frozen=True)
class ServingDecision:
    bs_id: str
    reason: Literal["initial", "secrecy_handover"] = "initial"


def select_serving_bs(candidate_rates: Mapping[str, SecrecyResult],
                      current: Optional[ServingDecision],
                      hysteresis_bps: float = 0.0) -> ServingDecision:
    """Secrecy-maximizing base station choice.

    The best candidate (lowest id among ties) replaces the current one only
    when its secrecy rate is strictly higher by more than the hysteresis, so
    an exact tie always keeps the incumbent.
    """
    if not candidate_rates:
        raise DomainError("no candidate base stations")
    best = min(candidate_rates, key=lambda b: (-candidate_rates[b].secrecy_rate_bps, b))
    if current is None or current.bs_id not in candidate_rates:
        return ServingDecision(best, "initial")
    gain = candidate_rates[best].secrecy_rate_bps - candidate_rates[current.bs_id].secrecy_rate_bps
    if best != current.bs_id and gain > hysteresis_bps:
        return ServingDecision(best, "secrecy_handover")
    return current


def evaluate_relay_option(direct: SecrecyResult, relayed: SecrecyResult,
                          mode: Literal["forced_relay", "best_of"]) -> tuple[SecrecyResult, str]:
    if mode == "forced_relay":
        return relayed, "relay"
    if mode != "best_of":
        raise DomainError(f"unknown relay mode {mode!r}")
    if relayed.secrecy_rate_bps > direct.secrecy_rate_bps:
        return relayed, "relay"
    return direct, "direct"


def hotzone_sinr(bs_rx_power_w, uav_rx_power_w, jammer_rx_powers_per_branch: Sequence[float],
                 noise: NoiseModel, egc_fallback: bool = True):
    """Combined SINR at a receiver fed by a base station and a hot-zone UAV.

    Powers may be arrays of per-draw received powers. The jammer term of
    each branch is the interference entering that branch.
    """
    n = noise.noise_power_w
    j_bs, j_uav = jammer_rx_powers_per_branch
    s = egc_combine([np.sqrt(bs_rx_power_w), np.sqrt(uav_rx_power_w)], [n, n], [j_bs, j_uav])
    if egc_fallback:
        s = np.maximum(s, np.maximum(bs_rx_power_w / (n + j_bs), uav_rx_power_w / (n + j_uav)))
    return s


def hotzone_rate(bs_branch: LinkState, uav_branch: LinkState, jammer_rx_powers_per_branch: Sequence[float],
                 noise: NoiseModel, bandwidth_hz: float, egc_fallback: bool = True) -> float:
    if bs_branch.rx != uav_branch.rx:
        raise DomainError("hot-zone branches must share a receiver")
    s = hotzone_sinr(bs_branch.rx_power_w, uav_branch.rx_power_w, jammer_rx_powers_per_branch,
                     noise, egc_fallback)
    return float(shannon_rate(s, bandwidth_hz))


def _angle_diff(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def safezone_targets(eve_positions: Mapping[str, Position3D], user_position: Position3D,
                     an_position: Position3D, cfg: SafezoneConfig) -> list[str]:
    """Eavesdroppers that fall in an AN sector and outside the user's guard angle."""
    user_az = azimuth_deg(an_position, user_position)
    eve_az = {e: azimuth_deg(an_position, p) for e, p in eve_positions.items()}
    centers = list(eve_az.values()) if cfg.sector_centers == "auto" else list(cfg.sector_centers)
    half = cfg.sector_width_deg / 2.0
    hit = []
    for e, az in eve_az.items():
        if _angle_diff(az, user_az) <= cfg.guard_angle_deg:
            continue
        if any(_angle_diff(az, c) <= half for c in centers):
            hit.append(e)
    return hit


def safezone_apply(eve_positions: Mapping[str, Position3D], user_position: Position3D,
                   an_position: Position3D, cfg: SafezoneConfig, params: ChannelParams,
                   an_role: str = "uav_safezone", eve_role: str = "eavesdropper") -> dict[str, float]:
    """Artificial-noise power (W) added to each eavesdropper's interference.

    Every eavesdropper appears in the result; untargeted ones get 0. The
    protected user is assumed nulled and receives no AN.
    """
    targets = set(safezone_targets(eve_positions, user_position, an_position, cfg))
    p_an = dbm_to_watts(cfg.an_power_dbm)
    out = {}
    for e, pos in eve_positions.items():
        if e not in targets:
            out[e] = 0.0
            continue
        cls = classify_link(is_aerial(an_role, an_position.z, params), is_aerial(eve_role, pos.z, params))
        out[e] = p_an * mean_link_gain(an_position, pos, cls, params)
    return out


@dataclass(frozen=True)
class MitigationOutcome:
    kind: str
    tx_power_dbm: float
    denied: bool = False
    power_reduction_db: float = 0.0
    excluded_rbs: tuple[int, ...] = ()
    victim_bandwidth_fraction: float = 1.0
    victim_interference_dbm: dict = field(default_factory=dict)

    def label(self) -> str:
        if self.denied:
            return "deny"
        if self.kind == "dedicated_resources" and self.excluded_rbs:
            return "dedicated_resources"
        if self.power_reduction_db > 0:
            return f"power_control:-{self.power_reduction_db:.2f}dB"
        return "none"


def mitigate_uplink(victim_reports: Mapping[str, float], aggressor: NodeSpec, kind: str,
                    threshold_dbm: float, *, known_ids: Optional[Sequence[str]] = None,
                    current_tx_power_dbm: Optional[float] = None, aggressor_rbs: Sequence[int] = (),
                    dedicated_share: float = 0.1) -> MitigationOutcome:
    """Apply one uplink-interference remedy given per-victim interference (dBm).

    Interference at each victim scales dB-for-dB with the aggressor's
    transmit power, so power control backs off by exactly the worst excess.
    """
    if known_ids is not None and aggressor.id not in known_ids:
        raise DomainError(f"unknown aggressor {aggressor.id!r}")
    power = aggressor.tx_power_dbm if current_tx_power_dbm is None else current_tx_power_dbm
    if power is None:
        raise DomainError(f"aggressor {aggressor.id!r} has no transmit power")
    if kind == "deny":
        return MitigationOutcome(kind, -math.inf, denied=True,
                                 victim_interference_dbm={b: -math.inf for b in victim_reports})
    if kind == "power_control":
        worst = max(victim_reports.values(), default=-math.inf)
        cut = max(0.0, worst - threshold_dbm)
        return MitigationOutcome(kind, power - cut, power_reduction_db=cut,
                                 victim_interference_dbm={b: v - cut for b, v in victim_reports.items()})
    if kind == "dedicated_resources":
        return MitigationOutcome(kind, power, excluded_rbs=tuple(aggressor_rbs),
                                 victim_bandwidth_fraction=1.0 - dedicated_share,
                                 victim_interference_dbm={b: -math.inf for b in victim_reports})
    raise DomainError(f"unknown mitigation kind {kind!r}")
