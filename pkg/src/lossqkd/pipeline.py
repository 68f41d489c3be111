"""End-to-end runs: line checks, key generation, post-processing, reports."""
from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import sample_bob_stream
from .config import OUTPUT_ENV, RunConfig
from .losscontrol import (
    LossEvent,
    OTDRTrace,
    detect_intervention,
    l1_trend_filter,
    localize_losses,
    simulate_loss_series,
    synthesize_otdr,
    unexplained_leaks,
    write_events_json,
)
from .losscontrol.otdr import events_to_dict
from .postprocess import (
    BitKey,
    LdpcCode,
    RateInsufficient,
    ToeplitzSeed,
    privacy_amplify,
    randomness_battery,
    reconcile,
)
from .postprocess.bitkey import concat
from .secrecy import SecrecyBudget, final_key_length
from .sifting import (
    NoPositiveRate,
    holevo_curve,
    optimize_thresholds,
    sift,
    sift_stats,
    thresholds_for_kept_fraction,
)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def stage_rng(root_seed: int, stage: str) -> np.random.Generator:
    """Independent generator for one stage, keyed by the stage name."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), zlib.crc32(stage.encode())]))


def output_dir(cfg: RunConfig, override=None) -> Path:
    path = override or os.environ.get(OUTPUT_ENV) or cfg.run.output_dir
    return Path(path)


# -- analytic budget ------------------------------------------------------

@dataclass
class AnalyticPoint:
    thresholds: object = None
    stats: object = None
    chi: float = 0.0
    budget: SecrecyBudget | None = None
    analytic_rate_per_pulse: float = 0.0
    analytic_rate_bps: float = 0.0
    secure: bool = False
    reason: str = ""

    def to_dict(self) -> dict:
        d = {
            "secure": self.secure,
            "reason": self.reason,
            "analytic_rate_per_pulse": self.analytic_rate_per_pulse,
            "analytic_rate_bps": self.analytic_rate_bps,
        }
        if self.thresholds is not None:
            d["thresholds"] = self.thresholds.to_dict()
        if self.stats is not None:
            d["sift"] = self.stats.to_dict()
        if self.budget is not None:
            d["budget"] = self.budget.to_dict()
        return d


def analytic_point(cfg: RunConfig) -> AnalyticPoint:
    """Thresholds and the asymptotic secrecy budget for ``cfg``."""
    if cfg.degenerate_pulses:
        return AnalyticPoint(reason="identical pulse intensities carry no key")
    model = cfg.detection_model()
    pulses = cfg.pulses()
    mode, arg = cfg.threshold_mode()
    if mode == "optimize":
        try:
            opt = optimize_thresholds(model, pulses, cfg.secrecy.r_e, cfg.secrecy.f, cfg.sifting.max_imbalance)
        except NoPositiveRate as exc:
            return AnalyticPoint(reason=str(exc))
        th = opt.thresholds
    elif mode == "kept":
        th = thresholds_for_kept_fraction(model, arg)
    else:
        th = arg
    st = sift_stats(model, th)
    chi = float(holevo_curve(pulses, cfg.secrecy.r_e)(st.weights[0])[0])
    budget = SecrecyBudget(
        st.s_a, st.s_a_given_b, min(chi, 1.0), cfg.secrecy.f, st.p_conc, float(cfg.run.n_pulses)
    )
    kl = final_key_length(budget)
    per_pulse = st.p_conc * budget.rate_per_sifted_bit
    return AnalyticPoint(
        th, st, chi, budget, per_pulse, per_pulse * cfg.run.raw_rate_bps, kl.secure,
        "" if kl.secure else "secrecy budget is not positive",
    )


# -- simulate ---------------------------------------------------------------

@dataclass
class RunReport:
    verdict: str
    exit_code: int
    stages: dict = field(default_factory=dict)
    throughput_bps: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "verdict": self.verdict,
            "exit_code": self.exit_code,
            "throughput_bps": self.throughput_bps,
            "stages": self.stages,
            "manifest": self.manifest,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _reflectometry(cfg: RunConfig, rng, out: Path | None):
    lc = cfg.losscontrol
    line = cfg.line_model()
    events = []
    if lc.injected_leak > 0:
        events.append(LossEvent(lc.injected_leak_km, lc.injected_leak, "leak"))
    trace = synthesize_otdr(line, events, lc.otdr_noise_std, lc.otdr_pulse_duration_s, lc.otdr_averages, rng)
    filtered = l1_trend_filter(trace, lc.otdr_lambda)
    found = localize_losses(filtered, lc.jump_threshold_db)
    leaks = unexplained_leaks(found, lc.leak_threshold)
    files = []
    if out is not None:
        trace.write_csv(out / "otdr_trace.csv")
        filtered.write_csv(out / "otdr_filtered.csv")
        write_events_json(out / "otdr_events.json", found)
        files = ["otdr_trace.csv", "otdr_filtered.csv", "otdr_events.json"]
    summary = {
        "line_length_km": line.length_km,
        "samples": len(trace),
        "resolution_km": trace.resolution_km,
        "n_events": len(found),
        "n_amplifiers": sum(e.kind == "amplifier" for e in found),
        "leaks": [events_to_dict(e) for e in leaks],
        "intervention": bool(leaks),
    }
    return summary, files


def _transmittometry(cfg: RunConfig, rng, out: Path | None):
    lc = cfg.losscontrol
    series = simulate_loss_series(
        lc.transmit_epochs,
        noise_std=lc.transmit_noise_std,
        tap_loss=lc.tap_loss,
        tap_epoch=lc.tap_epoch if lc.tap_epoch >= 0 else None,
        refresh_every=lc.refresh_every,
        rng=rng,
    )
    alarms = detect_intervention(series, lc.transmit_noise_std, lc.transmit_k)
    files = []
    if out is not None:
        with open(out / "transmittometry.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "time_s", "loss", "a_ref"])
            for i, (t, l, a) in enumerate(zip(series.timestamps, series.losses, series.a_ref)):
                w.writerow([i, repr(float(t)), repr(float(l)), repr(float(a))])
        files = ["transmittometry.csv"]
    summary = {
        "epochs": len(series),
        "mean_loss": float(series.losses.mean()),
        "std_loss": float(series.losses.std(ddof=1)) if len(series) > 1 else 0.0,
        "alarms": len(alarms),
        "first_alarm": alarms[0] if alarms else None,
        "intervention": bool(alarms),
    }
    return summary, files


def _reconcile_blocks(cfg: RunConfig, alice_bits, bob_bits, root_seed):
    pp = cfg.postprocess
    code = LdpcCode.regular(pp.code_length, pp.code_rate, pp.column_weight, pp.ldpc_seed)
    n_blocks = alice_bits.size // code.length
    n_errors = int(np.count_nonzero(alice_bits != bob_bits))
    p_est = n_errors / max(1, alice_bits.size)
    seeds = np.random.SeedSequence([int(root_seed), zlib.crc32(b"reconcile")]).spawn(max(n_blocks, 1))
    results = []
    for b in range(n_blocks):
        sl = slice(b * code.length, (b + 1) * code.length)
        try:
            res = reconcile(
                BitKey(alice_bits[sl]), BitKey(bob_bits[sl]), code, p_est,
                rng=np.random.default_rng(seeds[b]), hash_bits=pp.hash_bits,
            )
        except RateInsufficient as exc:
            raise StageError("error_correction", str(exc)) from None
        results.append(res)
    return code, p_est, results


def _privacy_amplification(cfg: RunConfig, alice_bits, results, code, s_a, chi, rng):
    """Compress portions of at least ``pa_min_block`` corrected bits."""
    portions, cur, cur_disclosed = [], [], 0
    for b, res in enumerate(results):
        if not res.success:
            continue
        cur.append(alice_bits[b * code.length : (b + 1) * code.length])
        cur_disclosed += res.disclosed_bits
        if sum(c.size for c in cur) >= cfg.postprocess.pa_min_block:
            portions.append((np.concatenate(cur), cur_disclosed))
            cur, cur_disclosed = [], 0
    # failed blocks leaked their syndromes too; charge them to the first portion
    failed_disclosed = sum(r.disclosed_bits for r in results if not r.success)
    out = []
    for i, (bits, disclosed) in enumerate(portions):
        if i == 0:
            disclosed += failed_disclosed
        n_out = int(math.floor(bits.size * (s_a - chi))) - disclosed
        if n_out <= 0:
            continue
        seed = ToeplitzSeed.random(n_out, bits.size, rng)
        out.append(privacy_amplify(BitKey(bits), n_out, seed))
    return out, len(portions)


def run_simulate(cfg: RunConfig, output=None, write_files: bool = True) -> RunReport:
    """Full key-generation run; files go to ``output`` (or the configured directory)."""
    out = output_dir(cfg, output) if write_files else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for stale in ("final_key.bin", "report.json", "randomness.json"):
            (out / stale).unlink(missing_ok=True)
    seed = cfg.run.seed
    duration_s = cfg.run.n_pulses / cfg.run.raw_rate_bps
    files: list[str] = []
    stages: dict = {}
    tp = {"raw": cfg.run.raw_rate_bps, "sifted": 0.0, "corrected": 0.0, "final": 0.0}
    report = RunReport("insecure", 2, stages, tp, config=cfg.to_dict())

    def finish():
        if out is not None:
            report.manifest = {name: _sha256(out / name) for name in sorted(files)}
            (out / "report.json").write_text(report.to_json())
        return report

    try:
        refl, f = _reflectometry(cfg, stage_rng(seed, "reflectometry"), out)
    except (ValueError, RuntimeError) as exc:
        raise StageError("reflectometry", str(exc)) from exc
    stages["reflectometry"] = refl
    files += f
    try:
        trans, f = _transmittometry(cfg, stage_rng(seed, "transmittometry"), out)
    except ValueError as exc:
        raise StageError("transmittometry", str(exc)) from exc
    stages["transmittometry"] = trans
    files += f
    if refl["intervention"] or trans["intervention"]:
        report.verdict, report.exit_code = "intervention", 3
        return finish()

    try:
        point = analytic_point(cfg)
    except ValueError as exc:
        raise StageError("sifting", str(exc)) from exc
    stages["budget"] = point.to_dict()
    if not point.secure:
        return finish()

    rng_bits = stage_rng(seed, "bits")
    alice = rng_bits.integers(0, 2, size=cfg.run.n_pulses, dtype=np.uint8)
    values = sample_bob_stream(cfg.detection_model(), alice, stage_rng(seed, "detection"))
    bob_key, kept = sift(values, alice, point.thresholds)
    alice_key = alice[kept]
    n_sifted = int(kept.size)
    stages["sifting"] = {
        "sifted_bits": n_sifted,
        "p_conc_empirical": n_sifted / cfg.run.n_pulses,
        "p_err_empirical": float(np.mean(alice_key != bob_key)) if n_sifted else None,
        "ones_fraction": float(alice_key.mean()) if n_sifted else None,
    }
    tp["sifted"] = n_sifted / duration_s
    if n_sifted < cfg.postprocess.code_length:
        stages["error_correction"] = {"blocks": 0, "reason": "fewer sifted bits than one code block"}
        return finish()

    code, p_est, results = _reconcile_blocks(cfg, alice_key, bob_key, seed)
    ok = [r for r in results if r.success]
    disclosed = sum(r.disclosed_bits for r in results)
    corrected_bits = len(ok) * code.length
    stages["error_correction"] = {
        "code_length": code.length,
        "syndrome_bits": code.n_checks,
        "p_err_estimate": p_est,
        "blocks": len(results),
        "succeeded": len(ok),
        "discarded_remainder_bits": n_sifted - len(results) * code.length,
        "disclosed_bits": disclosed,
        "mean_iterations": float(np.mean([r.iterations for r in results])) if results else 0.0,
    }
    tp["corrected"] = corrected_bits / duration_s

    budget = point.budget
    keys, n_portions = _privacy_amplification(
        cfg, alice_key, results, code, budget.s_a, budget.chi, stage_rng(seed, "privacy")
    )
    final = concat(keys) if keys else BitKey(np.zeros(0, dtype=np.uint8))
    stages["privacy_amplification"] = {"portions": n_portions, "final_bits": final.length}
    tp["final"] = final.length / duration_s
    if final.length == 0:
        stages["privacy_amplification"]["reason"] = "disclosed bits exhaust the secrecy budget"
        return finish()

    battery = randomness_battery(final, cfg.postprocess.randomness_sequence_length)
    stages["randomness"] = battery.to_dict()
    report.verdict, report.exit_code = "secure", 0
    if out is not None:
        final.write(out / "final_key.bin")
        (out / "randomness.json").write_text(battery.to_json(indent=2))
        files += ["final_key.bin", "randomness.json"]
    return finish()


# -- sweep ------------------------------------------------------------------

SWEEP_COLUMNS = [
    "value", "secure", "p_conc", "p_err", "S_A", "S_A_given_B", "chi", "rate_per_pulse", "rate_bps", "error",
]


def _sweep_row(cfg: RunConfig, param: str, value) -> dict:
    row = {k: None for k in SWEEP_COLUMNS}
    row["value"] = value
    try:
        pt = analytic_point(cfg.with_value(param, value))
    except (ValueError, RuntimeError) as exc:
        row["error"] = str(exc)
        row["secure"] = False
        return row
    row["secure"] = pt.secure
    row["rate_per_pulse"] = pt.analytic_rate_per_pulse
    row["rate_bps"] = pt.analytic_rate_bps
    if pt.stats is not None:
        row.update(p_conc=pt.stats.p_conc, p_err=pt.stats.p_err, S_A=pt.stats.s_a,
                   S_A_given_B=pt.stats.s_a_given_b, chi=pt.chi)
    if not pt.secure:
        row["error"] = pt.reason
    return row


def run_sweep(cfg: RunConfig, param: str, values, workers: int = 1) -> list[dict]:
    """Analytic key rate at every grid point; rows come back in grid order."""
    values = list(values)
    if not values:
        raise ValueError("sweep grid is empty")
    cfg.with_value(param, values[0])  # fail fast on a bad parameter name
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda v: _sweep_row(cfg, param, v), values))
    return [_sweep_row(cfg, param, v) for v in values]


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})


# -- otdr -------------------------------------------------------------------

@dataclass
class OtdrResult:
    events: list
    filtered: OTDRTrace
    leaks: list

    @property
    def intervention(self) -> bool:
        return bool(self.leaks)


def run_otdr(
    cfg: RunConfig, trace: OTDRTrace | None = None, output=None, rng=None, known_splices_km=()
) -> OtdrResult:
    """Analyse ``trace``, or a synthetic trace of the configured line."""
    lc = cfg.losscontrol
    if trace is None:
        rng = stage_rng(cfg.run.seed, "reflectometry") if rng is None else rng
        events = []
        if lc.injected_leak > 0:
            events.append(LossEvent(lc.injected_leak_km, lc.injected_leak, "leak"))
        trace = synthesize_otdr(
            cfg.line_model(), events, lc.otdr_noise_std, lc.otdr_pulse_duration_s, lc.otdr_averages, rng
        )
    filtered = l1_trend_filter(trace, lc.otdr_lambda)
    events = localize_losses(filtered, lc.jump_threshold_db, known_splices_km=known_splices_km)
    result = OtdrResult(events, filtered, unexplained_leaks(events, lc.leak_threshold))
    if output is not None:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        filtered.write_csv(out / "otdr_filtered.csv")
        write_events_json(out / "otdr_events.json", events)
    return result
