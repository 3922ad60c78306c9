"""Power conversions, SINR, combining and rate metrics.

The arithmetic helpers accept scalars or numpy arrays so the engine can
evaluate all fading draws of a step at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DomainError


def _pow10(x_db):
    out = np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def dbm_to_watts(p_dbm):
    return _pow10(np.asarray(p_dbm, dtype=float) - 30.0)


def dbw_to_watts(p_dbw):
    return _pow10(p_dbw)


def db_to_linear(x_db):
    return _pow10(x_db)


def linear_to_db(x):
    out = 10.0 * np.log10(x)
    return float(out) if np.ndim(out) == 0 else out


def watts_to_dbm(p_w):
    return linear_to_db(p_w) + 30.0


class NoiseModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    noise_power_w: float = Field(1e-12, gt=0, allow_inf_nan=False)


@dataclass(frozen=True)
class LinkState:
    tx: str
    rx: str
    gain_linear: float
    rx_power_w: float
    sinr_linear: float
    rate_bps: float


@dataclass(frozen=True)
class SecrecyResult:
    legit_rate_bps: float
    max_eve_rate_bps: float
    secrecy_rate_bps: float


def sinr(desired_rx_power_w, interferer_rx_powers_w: Sequence = (), noise: NoiseModel | float = 1e-12):
    n = noise.noise_power_w if isinstance(noise, NoiseModel) else noise
    interference = sum(interferer_rx_powers_w, 0.0)
    return desired_rx_power_w / (n + interference)


def egc_combine(branch_amplitudes_v, branch_noise_w, branch_interference_w):
    """Post-combining SINR of equal gain combining: (sum a_i)^2 / sum(N_i + I_i).

    Branch amplitudes are square roots of branch received signal powers.
    Each argument is a sequence with one entry per branch; entries may be
    arrays (one element per fading draw).
    """
    k = len(branch_amplitudes_v)
    if k == 0:
        raise DomainError("equal gain combining needs at least one branch")
    if len(branch_noise_w) != k or len(branch_interference_w) != k:
        raise DomainError("branch lists must have equal length")
    amp = sum(branch_amplitudes_v[1:], branch_amplitudes_v[0])
    denom = sum((n + i for n, i in zip(branch_noise_w, branch_interference_w)), 0.0)
    return amp * amp / denom


def shannon_rate(sinr_linear, bandwidth_hz: float):
    if bandwidth_hz <= 0:
        raise DomainError("bandwidth must be positive")
    return bandwidth_hz * np.log2(1.0 + sinr_linear)


def secrecy_rate(legit_rate: float, eve_rates: Sequence[float] = ()) -> SecrecyResult:
    eve = max(eve_rates, default=0.0)
    return SecrecyResult(legit_rate, eve, max(0.0, legit_rate - eve))


def relay_path_rate(hop1_rate: float, hop2_rate: float, half_duplex: bool = False) -> float:
    """Decode-and-forward end-to-end rate; ``half_duplex`` splits airtime between hops."""
    r = min(hop1_rate, hop2_rate)
    return 0.5 * r if half_duplex else r


def link_state(tx: str, rx: str, gain: float, tx_power_w: float, interference_w: float,
               noise: NoiseModel, bandwidth_hz: float) -> LinkState:
    p = tx_power_w * gain
    s = sinr(p, [interference_w], noise)
    return LinkState(tx, rx, gain, p, s, float(shannon_rate(s, bandwidth_hz)))


def is_finite(x) -> bool:
    return bool(np.all(np.isfinite(x))) if np.ndim(x) else math.isfinite(x)
