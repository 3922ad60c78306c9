"""Large-scale path loss, air-to-ground LoS probability and small-scale fading.

Ground links use a log-distance model anchored to free space at the
reference distance. Links with an aerial endpoint use free-space loss plus
an excess loss that depends on whether the line of sight is realized; the
LoS probability is the elevation-angle logistic model. Fading is Rayleigh,
except for realized-LoS links with an aerial endpoint, which are Rician.
All fading draws have unit mean power.
"""

from __future__ import annotations

import hashlib
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError
from .scene import Position3D, distance

SPEED_OF_LIGHT = 299_792_458.0
# 20*log10(4*pi/c): the constant of the Friis formula with d in m and f in Hz
FSPL_CONST_DB = 20.0 * math.log10(4.0 * math.pi / SPEED_OF_LIGHT)
MIN_ELEVATION_DEG = 1e-6


class ChannelParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    carrier_frequency_hz: float = Field(2.0e9, gt=0)
    ground_pathloss_exponent: float = Field(3.5, ge=2.0, le=6.0)
    reference_distance_m: float = Field(1.0, gt=0)
    a2g_a: float = Field(9.61, gt=0)
    a2g_b: float = Field(0.16, gt=0)
    eta_los_db: float = Field(1.0, gt=0)
    eta_nlos_db: float = Field(20.0, gt=0)
    rician_k_db: float = Field(10.0, gt=0)
    fading_samples_per_step: int = Field(1000, ge=1)
    aerial_height_m: float = Field(10.0, gt=0)
    min_distance_m: float = Field(1.0, gt=0)
    fading_enabled: bool = True

    @model_validator(mode="after")
    def _finite(self):
        for name, value in self:
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        return self


class LinkClass(str, Enum):
    GROUND_GROUND = "ground_ground"
    AIR_GROUND = "air_ground"
    AIR_AIR = "air_air"


def is_aerial(role: str, z: float, params: ChannelParams) -> bool:
    # base stations are terrestrial infrastructure whatever their mast height
    return role != "base_station" and z >= params.aerial_height_m


def classify_link(tx_aerial: bool, rx_aerial: bool) -> LinkClass:
    if tx_aerial and rx_aerial:
        return LinkClass.AIR_AIR
    if tx_aerial or rx_aerial:
        return LinkClass.AIR_GROUND
    return LinkClass.GROUND_GROUND


def fspl_db(d, f_hz):
    """Free-space path loss in dB: 20log10(d) + 20log10(f) - 147.55."""
    return 20.0 * np.log10(d) + 20.0 * np.log10(f_hz) + FSPL_CONST_DB


def link_elevation_deg(tx: Position3D, rx: Position3D) -> float:
    """Elevation between the endpoints, floored so the LoS model stays in domain."""
    h = tx.horizontal_distance(rx)
    theta = math.degrees(math.atan2(abs(tx.z - rx.z), h))
    return max(theta, MIN_ELEVATION_DEG)


def los_probability(theta_deg, params: ChannelParams):
    theta = np.asarray(theta_deg, dtype=float)
    if np.any(~(theta > 0)) or np.any(theta > 90):
        raise DomainError(f"elevation {theta_deg} outside (0, 90] degrees")
    a, b = params.a2g_a, params.a2g_b
    p = 1.0 / (1.0 + a * np.exp(-b * (theta - a)))
    return float(p) if p.ndim == 0 else p


def _ground_loss(d, params):
    d0 = params.reference_distance_m
    return fspl_db(d0, params.carrier_frequency_hz) + 10.0 * params.ground_pathloss_exponent * np.log10(d / d0)


def path_loss_db(tx: Position3D, rx: Position3D, link_class: LinkClass,
                 params: ChannelParams, los_realized: bool) -> float:
    d = distance(tx, rx)
    if d <= 0:
        raise DomainError("path loss undefined for coincident endpoints")
    return float(_loss_at(d, link_class, params, los_realized))


def _loss_at(d, link_class, params, los_realized):
    if link_class is LinkClass.GROUND_GROUND:
        return _ground_loss(d, params)
    excess = np.where(los_realized, params.eta_los_db, params.eta_nlos_db)
    return fspl_db(d, params.carrier_frequency_hz) + excess


def a2g_mean_path_loss_db(d, theta_deg, params: ChannelParams):
    """Fading-averaged A2G loss: LoS/NLoS mixture of linear gains, in dB.

    Vectorized over ``d`` and ``theta_deg``.
    """
    p = los_probability(theta_deg, params)
    fs = fspl_db(d, params.carrier_frequency_hz)
    mix = p * 10.0 ** (-params.eta_los_db / 10.0) + (1.0 - p) * 10.0 ** (-params.eta_nlos_db / 10.0)
    return fs - 10.0 * np.log10(mix)


def _link_geometry(tx, rx, params):
    d = max(distance(tx, rx), params.min_distance_m)
    return d, link_elevation_deg(tx, rx)


def _los_prob_for(link_class, theta, params):
    if link_class is LinkClass.AIR_GROUND:
        return los_probability(theta, params)
    return 1.0 if link_class is LinkClass.AIR_AIR else 0.0


def mean_link_gain(tx: Position3D, rx: Position3D, link_class: LinkClass,
                   params: ChannelParams) -> float:
    """Expected power gain over fading and LoS state (deterministic gain when fading is off)."""
    d, theta = _link_geometry(tx, rx, params)
    p = _los_prob_for(link_class, theta, params)
    if not params.fading_enabled:
        return 10.0 ** (-float(_loss_at(d, link_class, params, p >= 0.5)) / 10.0)
    if link_class is LinkClass.GROUND_GROUND:
        return 10.0 ** (-float(_ground_loss(d, params)) / 10.0)
    g_los = 10.0 ** (-float(_loss_at(d, link_class, params, True)) / 10.0)
    g_nlos = 10.0 ** (-float(_loss_at(d, link_class, params, False)) / 10.0)
    return p * g_los + (1.0 - p) * g_nlos


def draw_fading(link_class: LinkClass, los_realized, params: ChannelParams,
                rng: np.random.Generator, size=None):
    """Unit-power fading amplitudes.

    ``los_realized`` may be a boolean array matching ``size``; Rician draws
    are used where it is true on a non-ground link, Rayleigh elsewhere.
    """
    shape = () if size is None else size
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    rician = np.logical_and(link_class is not LinkClass.GROUND_GROUND, los_realized)
    k = 10.0 ** (params.rician_k_db / 10.0)
    los_amp = np.where(rician, math.sqrt(k / (k + 1.0)), 0.0)
    scatter = np.where(rician, math.sqrt(1.0 / (k + 1.0)), 1.0) * math.sqrt(0.5)
    amp = np.hypot(los_amp + scatter * re, scatter * im)
    return float(amp) if size is None else amp


def sample_link_gains(tx: Position3D, rx: Position3D, link_class: LinkClass,
                      params: ChannelParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` independent power-gain draws (LoS state and fading redrawn per sample)."""
    d, theta = _link_geometry(tx, rx, params)
    p = _los_prob_for(link_class, theta, params)
    if not params.fading_enabled:
        return np.full(n, mean_link_gain(tx, rx, link_class, params))
    if link_class is LinkClass.AIR_GROUND:
        los = rng.random(n) < p
    else:
        los = np.full(n, link_class is LinkClass.AIR_AIR)
    loss = _loss_at(d, link_class, params, los)
    amp = draw_fading(link_class, los, params, rng, n)
    return 10.0 ** (-np.asarray(loss) / 10.0) * amp * amp


def link_gain_linear(tx: Position3D, rx: Position3D, link_class: LinkClass,
                     params: ChannelParams, rng: np.random.Generator) -> float:
    return float(sample_link_gains(tx, rx, link_class, params, rng, 1)[0])


def _key_words(text: str) -> tuple[int, int]:
    h = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(h[:4], "little"), int.from_bytes(h[4:], "little")


def link_stream(master_seed: int, tx_id: str, rx_id: str, step: int) -> np.random.Generator:
    """Random stream for one link at one timestep, keyed by ids rather than draw order."""
    key = _key_words(tx_id + "\x00" + rx_id) + (int(step),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=key)))
