"""Command-line entry point: ``uavsec simulate | localize | sweep``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .channel import ChannelParams
from .config import load_scenario, parse_scenario
from .detectloc import RssMeasurement, rss_localize
from .engine import emit, run, sweep
from .errors import ConfigError, DomainError, NumericError
from .scene import Position3D

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _floats(text, n=None):
    vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
    return vals


def build_parser():
    ap = argparse.ArgumentParser(prog="uavsec", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write records + summary")
    sim.add_argument("--scenario", required=True, help="scenario JSON file or bundled name")
    sim.add_argument("--seed", type=_u64, help="override master_seed")
    sim.add_argument("--out", required=True, type=Path)
    sim.add_argument("--format", choices=("csv", "json"), default="csv")
    sim.add_argument("--fading", choices=("on", "off"), default=None)
    sim.add_argument("--threads", type=int, default=1)

    loc = sub.add_parser("localize", help="RSS jammer localization from a CSV of readings")
    loc.add_argument("--input", required=True, type=Path, help="CSV with columns x,y,z,rss_dbm")
    loc.add_argument("--bounds", required=True, type=lambda s: _floats(s, 6),
                     help="x0,y0,z0,x1,y1,z1")
    loc.add_argument("--scenario", help="take channel parameters from this scenario")

    sw = sub.add_parser("sweep", help="vary one numeric config field")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--param", required=True, help="dotted path, e.g. nodes.relay.mobility.offset.2")
    sw.add_argument("--values", required=True, type=_floats)
    sw.add_argument("--out", type=Path, help="write the table as CSV here instead of stdout")
    sw.add_argument("--threads", type=int, default=1)
    return ap


def _with_overrides(cfg, seed=None, fading=None):
    data = cfg.model_dump(mode="json")
    if seed is not None:
        data["master_seed"] = seed
    if fading is not None:
        data["channel"]["fading_enabled"] = fading == "on"
    return parse_scenario(data, cfg.name)


def _read_measurements(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = {"x", "y", "z", "rss_dbm"} - set(rows[0] if rows else {})
    if missing:
        raise ConfigError(f"{path}: missing columns {sorted(missing)}")
    return [RssMeasurement(Position3D(float(r["x"]), float(r["y"]), float(r["z"])), float(r["rss_dbm"]))
            for r in rows]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "simulate":
            cfg = _with_overrides(load_scenario(args.scenario), args.seed, args.fading)
            result = run(cfg, threads=args.threads)
            for p in emit(result, args.out, args.format):
                print(p)
        elif args.cmd == "localize":
            params = load_scenario(args.scenario).channel if args.scenario else ChannelParams()
            est = rss_localize(_read_measurements(args.input), params, tuple(args.bounds))
            print(json.dumps({
                "position": list(est.position),
                "est_tx_power_dbm": est.est_tx_power_dbm,
                "residual_db2": est.residual,
                "bounds_limited": est.bounds_limited,
            }))
        else:
            rows = sweep(load_scenario(args.scenario), args.param, args.values, threads=args.threads)
            fh = args.out.open("w", newline="") if args.out else sys.stdout
            try:
                if rows:
                    w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                    w.writeheader()
                    w.writerows(rows)
            finally:
                if args.out:
                    fh.close()
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
