"""Time-stepped simulation loop, result records and output writers."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .channel import classify_link, is_aerial, link_stream, mean_link_gain, sample_link_gains
from .config import CSV_COLUMNS, ScenarioConfig, parse_scenario, record_count
from .detectloc import MetricWindow, detect_centralized, detect_distributed, identify_uplink_aggressor
from .errors import ConfigError, NumericError
from .linkmetrics import (
    dbm_to_watts,
    linear_to_db,
    relay_path_rate,
    secrecy_rate,
    shannon_rate,
    watts_to_dbm,
)
from .policies import (
    ServingDecision,
    evaluate_relay_option,
    hotzone_sinr,
    mitigate_uplink,
    safezone_apply,
    select_serving_bs,
)
from .scene import position_at

log = logging.getLogger(__name__)

CURVE_COLUMNS = (
    "rate_direct_bps",
    "rate_relay_bps",
    "rate_hotzone_bps",
    "secrecy_direct_bps",
    "secrecy_relay_bps",
    "secrecy_handover_bps",
)


@dataclass
class StepRecord:
    step: int
    t: float
    positions: dict
    serving_bs: str
    values: dict
    secrecy: dict
    links: dict
    detect_flags: tuple = ()
    detection: dict = field(default_factory=dict)
    mitigation_state: str = ""
    uplink: dict = field(default_factory=dict)

    def column(self, name: str, user: str):
        if name == "t_s":
            return self.t
        if name in ("user_x_m", "user_y_m", "user_z_m"):
            return self.positions[user]["xyz".index(name[5])]
        if name == "serving_bs":
            return self.serving_bs
        if name == "detect_flags":
            return ";".join(self.detect_flags)
        if name == "mitigation_state":
            return self.mitigation_state
        return self.values.get(name)


@dataclass
class RunSummary:
    name: str
    seed: int
    config_digest: str
    n_steps: int
    curves: dict
    handover_count: int
    handover_times: list
    detection_first_flag_s: dict
    detection_flag_steps: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    config: ScenarioConfig
    records: list
    summary: RunSummary


class _Topology:
    """Static bookkeeping of which links a scenario needs."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        pol = cfg.policies
        self.nodes = {n.id: n for n in cfg.nodes}
        self.user = cfg.protected_user
        self.bss = sorted(n.id for n in cfg.nodes_with_role("base_station"))
        self.eves = [n.id for n in cfg.nodes_with_role("eavesdropper")]
        self.jammers = [n.id for n in cfg.nodes_with_role("jammer")]
        self.relay = _first(cfg, "uav_relay") if pol.relay_enabled else None
        self.hotzone = _first(cfg, "uav_hotzone") if pol.hotzone_enabled else None
        self.an = _first(cfg, "uav_safezone") if pol.safezone_enabled else None
        for flag, node, role in ((pol.relay_enabled, self.relay, "uav_relay"),
                                 (pol.hotzone_enabled, self.hotzone, "uav_hotzone"),
                                 (pol.safezone_enabled, self.an, "uav_safezone")):
            if flag and node is None:
                raise ConfigError(f"policy enabled but no {role} node present")
        self.direct_bs = pol.direct_bs or self.bss[0]
        det = cfg.detection
        self.monitored = list(det.monitored) if det.monitored else [self.user]
        self.aggressor = pol.uplink.aggressor

        links = []
        for b in self.bss:
            links.append((b, self.user))
            links.extend((b, e) for e in self.eves)
            if self.relay:
                links.append((b, self.relay))
        if self.relay:
            links.append((self.relay, self.user))
            links.extend((self.relay, e) for e in self.eves)
        if self.hotzone:
            links.append((self.hotzone, self.user))
        for m in self.monitored:
            if m != self.user:
                links.extend((b, m) for b in self.bss)
        self.links = list(dict.fromkeys(links))


def _first(cfg, role):
    nodes = cfg.nodes_with_role(role)
    return nodes[0].id if nodes else None


class Simulator:
    """Runs one scenario step by step. Use :func:`run` for the common case."""

    def __init__(self, cfg: ScenarioConfig, threads: int = 1):
        self.cfg = cfg
        self.topo = _Topology(cfg)
        self.threads = max(1, int(threads))
        params = cfg.channel
        self.n_draws = params.fading_samples_per_step if params.fading_enabled else 1
        self.noise_w = cfg.noise.noise_power_w
        self.serving: Optional[ServingDecision] = None
        self.windows = {m: [] for m in self.topo.monitored}
        self.snr_windows = {m: [] for m in self.topo.monitored}
        uplink = cfg.policies.uplink
        self.agg_power = self.topo.nodes[uplink.aggressor].tx_power_dbm if uplink.aggressor else None
        self.agg_denied = False
        self.agg_dedicated = False
        self.agg_cut_db = 0.0

    # -- geometry and channel helpers --------------------------------------

    def _aerial(self, node_id, pos):
        return is_aerial(self.topo.nodes[node_id].role, pos.z, self.cfg.channel)

    def _class(self, tx, rx, pos):
        return classify_link(self._aerial(tx, pos[tx]), self._aerial(rx, pos[rx]))

    def _tx_w(self, node_id):
        return dbm_to_watts(self.topo.nodes[node_id].tx_power_dbm)

    def _mean_rx_w(self, tx, rx, pos, tx_w=None):
        p = self._tx_w(tx) if tx_w is None else tx_w
        return p * mean_link_gain(pos[tx], pos[rx], self._class(tx, rx, pos), self.cfg.channel)

    def _sample(self, step, pos, link):
        tx, rx = link
        rng = link_stream(self.cfg.master_seed, tx, rx, step)
        g = sample_link_gains(pos[tx], pos[rx], self._class(tx, rx, pos), self.cfg.channel, rng, self.n_draws)
        return self._tx_w(tx) * g

    # -- main step ----------------------------------------------------------

    def step(self, k: int) -> StepRecord:
        cfg, topo = self.cfg, self.topo
        pol = cfg.policies
        t = round(k * cfg.timestep_s, 9)
        pos = {nid: position_at(n, topo.nodes, t) for nid, n in topo.nodes.items()}

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                powers = list(pool.map(lambda l: self._sample(k, pos, l), topo.links))
        else:
            powers = [self._sample(k, pos, l) for l in topo.links]
        rx_draws = dict(zip(topo.links, powers))

        receivers = {rx for _, rx in topo.links}
        interference = {rx: sum((self._mean_rx_w(j, rx, pos) for j in topo.jammers), 0.0)
                        for rx in sorted(receivers)}

        # safezone: artificial noise raises eavesdropper interference only
        an_added = {}
        if topo.an is not None and topo.eves:
            an_added = safezone_apply({e: pos[e] for e in topo.eves}, pos[topo.user], pos[topo.an],
                                      pol.safezone, cfg.channel)
            for e, w in an_added.items():
                interference[e] += w

        B, N = cfg.bandwidth_hz, self.noise_w
        links = {}

        def rate(tx, rx):
            key = f"{tx}->{rx}"
            if key not in links:
                s = rx_draws[(tx, rx)]
                r = float(np.mean(shannon_rate(s / (interference[rx] + N), B)))
                mean_s = float(np.mean(s))
                links[key] = {
                    "rate_bps": r,
                    "sinr_db": linear_to_db(mean_s / (interference[rx] + N)),
                    "snr_db": linear_to_db(mean_s / N),
                }
                _check(links[key], key, k)
            return links[key]["rate_bps"]

        if pol.association == "strongest":
            direct_bs = min(topo.bss, key=lambda b: (-self._mean_rx_w(b, topo.user, pos), b))
        else:
            direct_bs = topo.direct_bs

        per_bs = {b: secrecy_rate(rate(b, topo.user), [rate(b, e) for e in topo.eves]) for b in topo.bss}
        direct = per_bs[direct_bs]
        values = {"rate_direct_bps": direct.legit_rate_bps, "secrecy_direct_bps": direct.secrecy_rate_bps}
        secrecy = {"direct": direct}

        if topo.relay is not None:
            relay_rate = relay_path_rate(rate(direct_bs, topo.relay), rate(topo.relay, topo.user),
                                         pol.relay_half_duplex)
            eve = [max(rate(direct_bs, e), rate(topo.relay, e)) for e in topo.eves]
            relayed = secrecy_rate(relay_rate, eve)
            chosen, label = evaluate_relay_option(direct, relayed, pol.relay_mode)
            values["rate_relay_bps"] = relay_rate
            values["secrecy_relay_bps"] = chosen.secrecy_rate_bps
            secrecy["relay"] = chosen
            secrecy["relay_label"] = label

        serving_bs = direct_bs
        if pol.handover_enabled:
            self.serving = select_serving_bs(per_bs, self.serving, pol.handover_hysteresis_bps)
            serving_bs = self.serving.bs_id
            values["secrecy_handover_bps"] = per_bs[serving_bs].secrecy_rate_bps
            secrecy["handover"] = per_bs[serving_bs]
            secrecy["per_bs"] = per_bs

        if topo.hotzone is not None:
            s = hotzone_sinr(rx_draws[(direct_bs, topo.user)], rx_draws[(topo.hotzone, topo.user)],
                             (interference[topo.user], interference[topo.user]), cfg.noise,
                             pol.egc_fallback)
            values["rate_hotzone_bps"] = float(np.mean(shannon_rate(s, B)))
            _check({"rate_bps": values["rate_hotzone_bps"]}, f"{direct_bs}+{topo.hotzone}->{topo.user}", k)

        mitigation_state, uplink = self._uplink(pos)
        flags, detection = self._detect(pos, rate, direct_bs, links)

        return StepRecord(
            step=k,
            t=t,
            positions={nid: (p.x, p.y, p.z) for nid, p in pos.items()},
            serving_bs=serving_bs,
            values=values,
            secrecy=secrecy,
            links=links,
            detect_flags=flags,
            detection=detection,
            mitigation_state=mitigation_state,
            uplink=uplink,
        )

    def _uplink(self, pos):
        upc = self.cfg.policies.uplink
        agg = upc.aggressor
        if agg is None:
            return "", {}
        topo = self.topo
        home = min(topo.bss, key=lambda b: (-self._mean_rx_w(agg, b, pos), b))
        victims = [b for b in topo.bss if b != home]

        def levels():
            if self.agg_denied or self.agg_dedicated:
                return {b: -math.inf for b in victims}
            tx_w = dbm_to_watts(self.agg_power)
            return {b: watts_to_dbm(self._mean_rx_w(agg, b, pos, tx_w)) for b in victims}

        reports = levels()
        if victims and not self.agg_denied:
            floor = watts_to_dbm(self.noise_w / upc.num_resource_blocks)
            share = 10.0 * math.log10(len(upc.aggressor_rbs))
            rb_reports = {}
            for b, lvl in reports.items():
                per_rb = np.full(upc.num_resource_blocks, floor)
                if math.isfinite(lvl):
                    per_rb[upc.aggressor_rbs] = watts_to_dbm(dbm_to_watts(floor) + dbm_to_watts(lvl - share))
                rb_reports[b] = per_rb
            found = identify_uplink_aggressor(rb_reports, {agg: upc.aggressor_rbs}, upc.contrast_floor_db)
            worst = max(reports.values())
            if found.uav_id == agg and worst > upc.interference_threshold_dbm:
                out = mitigate_uplink(reports, topo.nodes[agg], upc.mitigation, upc.interference_threshold_dbm,
                                      known_ids=list(topo.nodes), current_tx_power_dbm=self.agg_power,
                                      aggressor_rbs=upc.aggressor_rbs, dedicated_share=upc.dedicated_share)
                self.agg_denied = out.denied
                self.agg_dedicated = self.agg_dedicated or bool(out.excluded_rbs)
                if not out.denied:
                    self.agg_cut_db += out.power_reduction_db
                    self.agg_power = out.tx_power_dbm
                reports = levels()
        if self.agg_denied:
            state = "deny"
        elif self.agg_dedicated:
            state = "dedicated_resources"
        elif self.agg_cut_db > 0:
            state = f"power_control:-{self.agg_cut_db:.2f}dB"
        else:
            state = "none"
        return state, {"home_bs": home, "victim_interference_dbm": reports, "tx_power_dbm": self.agg_power}

    def _detect(self, pos, rate, direct_bs, links):
        det = self.cfg.detection
        topo = self.topo
        for m in topo.monitored:
            bs = direct_bs if m == topo.user else min(
                topo.bss, key=lambda b: (-self._mean_rx_w(b, m, pos), b))
            rate(bs, m)
            entry = links[f"{bs}->{m}"]
            self.windows[m].append(entry["sinr_db"])
            self.snr_windows[m].append(entry["snr_db"])
            del self.windows[m][:-det.window_len]
            del self.snr_windows[m][:-det.window_len]
        if not det.enabled:
            return (), {}
        windows = [MetricWindow(m, tuple(self.windows[m]), det.window_len) for m in topo.monitored]
        out = {}
        if det.threshold_mode == "absolute":
            out["centralized"] = list(detect_centralized(windows, det.threshold_db).flagged)
        else:
            flagged = []
            for w in windows:
                thr = float(np.mean(self.snr_windows[w.node_id])) - det.offset_db
                flagged.extend(detect_centralized([w], thr).flagged)
            out["centralized"] = sorted(flagged)
        if len(windows) >= 3:
            out["distributed"] = list(detect_distributed(windows, det.k_mad).flagged)
        flags = tuple(sorted(set().union(*map(set, out.values()))))
        return flags, out


def _check(entry, key, step):
    for name, v in entry.items():
        if not math.isfinite(v):
            raise NumericError(f"non-finite {name} on link {key} at step {step}")


def iter_run(cfg: ScenarioConfig, threads: int = 1) -> Iterator[StepRecord]:
    sim = Simulator(cfg, threads)
    for k in range(record_count(cfg)):
        yield sim.step(k)


def summarize(cfg: ScenarioConfig, records: Sequence[StepRecord]) -> RunSummary:
    curves = {}
    for col in CURVE_COLUMNS:
        vals = [r.values[col] for r in records if col in r.values]
        if vals:
            curves[col] = {"mean": float(np.mean(vals)), "min": float(min(vals)), "max": float(max(vals))}
    handovers = []
    if cfg.policies.handover_enabled:
        handovers = [b.t for a, b in zip(records, records[1:]) if a.serving_bs != b.serving_bs]
    first_flag, flag_steps = {}, {}
    for r in records:
        for node in r.detect_flags:
            first_flag.setdefault(node, r.t)
            flag_steps[node] = flag_steps.get(node, 0) + 1
    return RunSummary(cfg.name, cfg.master_seed, cfg.digest(), len(records), curves,
                      len(handovers), handovers, first_flag, flag_steps)


def run(cfg: ScenarioConfig, threads: int = 1) -> RunResult:
    records = list(iter_run(cfg, threads))
    log.info("%s: %d steps, seed %d", cfg.name, len(records), cfg.master_seed)
    return RunResult(cfg, records, summarize(cfg, records))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(result: RunResult, out_dir, fmt: str = "csv") -> list[Path]:
    """Write per-step records (CSV or JSON) and a JSON summary into ``out_dir``."""
    cfg = result.config
    cols = [c for c in CSV_COLUMNS if c in cfg.outputs]
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        if fmt == "csv":
            p = out / "records.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                for r in result.records:
                    w.writerow([_fmt(r.column(c, cfg.protected_user)) for c in cols])
        elif fmt == "json":
            p = out / "records.json"
            rows = [{c: r.column(c, cfg.protected_user) for c in cols} for r in result.records]
            p.write_text(json.dumps(rows, indent=1))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        paths.append(p)
        s = out / "summary.json"
        s.write_text(json.dumps(result.summary.to_dict(), indent=2, sort_keys=True))
        paths.append(s)
        e = out / "effective_config.json"
        e.write_text(cfg.to_json())
        paths.append(e)
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc.strerror}") from exc
    return paths


def _set_path(data, path: str, value):
    parts = path.split(".")
    cur = data
    for i, part in enumerate(parts[:-1]):
        if part == "nodes" and isinstance(cur, dict) and i + 1 < len(parts):
            cur = cur["nodes"]
            continue
        if isinstance(cur, list):
            if part.isdigit():
                cur = cur[int(part)]
            else:
                match = [n for n in cur if isinstance(n, dict) and n.get("id") == part]
                if not match:
                    raise ConfigError(f"sweep path {path!r}: no node {part!r}")
                cur = match[0]
        elif isinstance(cur, dict) and part in cur:
            cur = cur[part]
        else:
            raise ConfigError(f"sweep path {path!r}: no field {part!r}")
    last = parts[-1]
    if isinstance(cur, list) and last.isdigit() and int(last) < len(cur):
        key = int(last)
    elif isinstance(cur, dict) and last in cur:
        key = last
    else:
        raise ConfigError(f"sweep path {path!r}: no field {last!r}")
    old = cur[key]
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ConfigError(f"sweep path {path!r} does not address a numeric field")
    cur[key] = value


def sweep_configs(base: ScenarioConfig, path: str, values: Sequence[float]) -> list[ScenarioConfig]:
    out = []
    for i, v in enumerate(values):
        data = copy.deepcopy(base.model_dump(mode="json"))
        _set_path(data, path, v)
        data["master_seed"] = (base.master_seed + i) % 2**64
        out.append(parse_scenario(data, f"sweep[{i}]"))
    return out


def sweep(base: ScenarioConfig, path: str, values: Sequence[float], threads: int = 1) -> list[dict]:
    """Run one variant per value (seed = base seed + index) and tabulate summaries."""
    rows = []
    for v, cfg in zip(values, sweep_configs(base, path, values)):
        summary = run(cfg, threads).summary
        row = {"param": path, "value": v, "seed": cfg.master_seed, "config_digest": summary.config_digest,
               "handover_count": summary.handover_count}
        for col, stats in summary.curves.items():
            row[f"{col}_mean"] = stats["mean"]
        rows.append(row)
    return rows
