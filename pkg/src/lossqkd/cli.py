"""Command-line entry point.

Exit codes: 0 ok, 1 error (or a failed randomness battery for ``keytest``),
2 insecure verdict, 3 intervention detected.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, ConfigError, load_config
from .losscontrol import OTDRTrace, TraceParseError, alarm_onsets, detect_intervention, simulate_loss_series
from .losscontrol.otdr import events_to_dict
from .pipeline import StageError, output_dir, run_otdr, run_simulate, run_sweep, stage_rng, write_sweep_csv
from .postprocess import BitKey, randomness_battery
from .postprocess.bitkey import KeyFileError

EXIT_OK, EXIT_ERROR, EXIT_INSECURE, EXIT_INTERVENTION = 0, 1, 2, 3

log = logging.getLogger("lossqkd")


def _parse_set(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    return load_config(args.config, args.preset, overrides)


def _parse_grid(text: str):
    """``start:stop:count`` (inclusive linspace) or a comma-separated list."""
    if text.count(":") == 2:
        a, b, n = text.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(n))]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_simulate(args) -> int:
    cfg = _config(args)
    report = run_simulate(cfg, output=args.output_dir)
    tp = report.throughput_bps
    print(f"verdict: {report.verdict}")
    print("throughput (bit/s): " + ", ".join(f"{k} {v:.1f}" for k, v in tp.items()))
    budget = report.stages.get("budget", {})
    if "analytic_rate_bps" in budget:
        print(f"analytic rate: {budget['analytic_rate_bps']:.1f} bit/s")
    print(f"report: {output_dir(cfg, args.output_dir) / 'report.json'}")
    return report.exit_code


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = run_sweep(cfg, args.param, _parse_grid(args.grid), workers=args.workers)
    out = Path(args.out) if args.out else output_dir(cfg, args.output_dir) / "sweep.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out, rows)
    for r in rows:
        rate = "" if r["rate_bps"] is None else f"{r['rate_bps']:.3f}"
        print(f"{args.param}={r['value']:g}\trate_bps={rate}\t{r['error'] or ''}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_otdr(args) -> int:
    cfg = _config(args)
    trace = OTDRTrace.read_csv(args.trace) if args.trace else None
    out = output_dir(cfg, args.output_dir)
    res = run_otdr(cfg, trace, output=out, known_splices_km=args.splice or ())
    for e in res.events:
        print(json.dumps(events_to_dict(e)))
    print(f"{len(res.events)} events, {len(res.leaks)} unexplained leak(s); wrote {out / 'otdr_events.json'}")
    return EXIT_INTERVENTION if res.intervention else EXIT_OK


def cmd_transmit(args) -> int:
    cfg = _config(args)
    lc = cfg.losscontrol
    tap = args.tap if args.tap is not None else lc.tap_loss
    tap_epoch = args.tap_epoch if args.tap_epoch is not None else (lc.tap_epoch if lc.tap_epoch >= 0 else None)
    series = simulate_loss_series(
        args.epochs or lc.transmit_epochs,
        noise_std=lc.transmit_noise_std,
        tap_loss=tap,
        tap_epoch=tap_epoch,
        refresh_every=lc.refresh_every,
        rng=stage_rng(cfg.run.seed, "transmittometry"),
    )
    alarms = detect_intervention(series, lc.transmit_noise_std, lc.transmit_k)
    onsets = alarm_onsets(alarms)
    print(f"epochs {len(series)}, mean loss {series.losses.mean():.5f}, std {series.losses.std():.5f}")
    print(f"alarm onsets: {onsets if onsets else 'none'}")
    return EXIT_INTERVENTION if alarms else EXIT_OK


def cmd_keytest(args) -> int:
    key = BitKey.read(args.key)
    report = randomness_battery(key, args.sequence_length)
    text = report.to_json(indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK if report.passed else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lossqkd", description="Loss-controlled QKD simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="INI config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="baseline")
        sp.add_argument("--seed", type=int, help="root seed (overrides run.seed)")
        sp.add_argument("-o", "--output-dir", help="output directory (overrides config and $LOSSQKD_OUTPUT_DIR)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")

    sp = sub.add_parser("simulate", help="full key-generation run")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="analytic key rate over a parameter grid")
    common(sp)
    sp.add_argument("--param", required=True, help="e.g. secrecy.r_e or line.n_spans")
    sp.add_argument("--grid", required=True, help="start:stop:count or v1,v2,...")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", help="CSV path (default <output-dir>/sweep.csv)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("otdr", help="localize loss events in a reflectogram")
    common(sp)
    sp.add_argument("--trace", help="CSV with distance_km,power_dB (synthetic line if omitted)")
    sp.add_argument("--splice", type=float, action="append", help="known splice position in km")
    sp.set_defaults(func=cmd_otdr)

    sp = sub.add_parser("transmit", help="simulate lock-in transmittometry and detect taps")
    common(sp)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--tap", type=float, help="injected tap loss fraction")
    sp.add_argument("--tap-epoch", type=int)
    sp.set_defaults(func=cmd_transmit)

    sp = sub.add_parser("keytest", help="randomness battery on a key file")
    sp.add_argument("key")
    sp.add_argument("--sequence-length", type=int, default=50_000)
    sp.add_argument("--out", help="write the JSON report here")
    sp.set_defaults(func=cmd_keytest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, StageError, TraceParseError, KeyFileError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
