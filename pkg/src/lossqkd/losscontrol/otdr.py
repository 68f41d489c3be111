"""Synthetic reflectograms and loss-event localization.

Traces are two-way: backscatter from distance z has crossed every element
before z twice, so fiber contributes a slope of ``-2 * attenuation`` dB/km,
an amplifier of gain G a jump of ``+2 G`` dB and a point loss m a step of
``20 * log10(1 - m)`` dB.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import constants

from ..channel import Amplifier, FiberSpan, LineModel

GROUP_INDEX = 1.468
DEFAULT_AVERAGES = 2**12
EVENT_KINDS = ("leak", "splice", "amplifier")


class TraceParseError(ValueError):
    pass


def spatial_resolution(pulse_duration_s: float, group_index: float = GROUP_INDEX) -> float:
    """Sample spacing ``c_fiber * tau / 2`` in km."""
    if pulse_duration_s <= 0:
        raise ValueError("pulse duration must be > 0")
    return constants.c / group_index * pulse_duration_s / 2.0 / 1e3


@dataclass(frozen=True)
class LossEvent:
    position_km: float
    magnitude: float
    kind: str = "leak"

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"kind must be one of {EVENT_KINDS}, got {self.kind!r}")
        if not self.magnitude < 1:
            raise ValueError("magnitude must be < 1 (a loss of 100% has no finite step)")
        if self.kind in ("leak", "splice") and not 0 <= self.magnitude:
            raise ValueError(f"{self.kind} magnitude must lie in [0, 1), got {self.magnitude}")
        if self.kind == "amplifier" and self.magnitude > 0:
            raise ValueError("amplifier events carry a negative loss")

    @property
    def step_db(self) -> float:
        """Two-way power step produced by this event."""
        return 20.0 * math.log10(1.0 - self.magnitude)

    @classmethod
    def from_step(cls, position_km: float, step_db: float, kind: str | None = None) -> "LossEvent":
        mag = 1.0 - 10.0 ** (step_db / 20.0)
        if kind is None:
            kind = "amplifier" if step_db > 0 else "leak"
        return cls(float(position_km), float(mag), kind)


@dataclass(frozen=True)
class OTDRTrace:
    distance_km: np.ndarray
    power_db: np.ndarray
    resolution_km: float
    pulse_duration_s: float
    averages: int = DEFAULT_AVERAGES

    def __post_init__(self):
        d = np.array(self.distance_km, dtype=np.float64)
        p = np.array(self.power_db, dtype=np.float64)
        if d.shape != p.shape or d.ndim != 1:
            raise ValueError("distance and power must be 1-D arrays of equal length")
        if not (np.isfinite(d).all() and np.isfinite(p).all()):
            raise ValueError("trace samples must be finite")
        if not self.resolution_km > 0:
            raise ValueError("resolution must be > 0")
        if self.averages < 1:
            raise ValueError("averages must be >= 1")
        d.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "distance_km", d)
        object.__setattr__(self, "power_db", p)

    def __len__(self):
        return self.power_db.size

    def with_power(self, power_db) -> "OTDRTrace":
        return replace(self, power_db=np.asarray(power_db, dtype=np.float64))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["distance_km", "power_dB"])
            for d, p in zip(self.distance_km, self.power_db):
                w.writerow([repr(float(d)), repr(float(p))])

    @classmethod
    def read_csv(cls, path, averages: int = DEFAULT_AVERAGES, group_index: float = GROUP_INDEX) -> "OTDRTrace":
        """Read a ``distance_km,power_dB`` CSV; resolution comes from the spacing."""
        dist, power = [], []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if lineno == 1 and row[0].strip().lower().startswith("distance"):
                    continue
                if len(row) != 2:
                    raise TraceParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    d, p = float(row[0]), float(row[1])
                except ValueError:
                    raise TraceParseError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
                if not (math.isfinite(d) and math.isfinite(p)):
                    raise TraceParseError(f"{path}:{lineno}: non-finite value in {row!r}")
                if dist and d <= dist[-1]:
                    raise TraceParseError(f"{path}:{lineno}: distance must increase")
                dist.append(d)
                power.append(p)
        if len(dist) < 3:
            raise TraceParseError(f"{path}: need at least 3 samples, got {len(dist)}")
        res = float(np.median(np.diff(dist)))
        tau = 2.0 * res * 1e3 * group_index / constants.c
        return cls(np.array(dist), np.array(power), res, tau, averages)


def write_events_json(path, events) -> None:
    with open(path, "w") as fh:
        json.dump([events_to_dict(e) for e in events], fh, indent=2)


def events_to_dict(e: LossEvent) -> dict:
    d = asdict(e)
    return {"position": d["position_km"], "magnitude": d["magnitude"], "kind": d["kind"]}


def read_events_json(path) -> list[LossEvent]:
    with open(path) as fh:
        raw = json.load(fh)
    return [LossEvent(float(r["position"]), float(r["magnitude"]), r["kind"]) for r in raw]


def _clean_trace(line: LineModel, events, distances, launch_db):
    """Noise-free two-way trace along ``distances``."""
    power = np.full(distances.size, float(launch_db))
    pos = 0.0
    for el in line.elements:
        if isinstance(el, FiberSpan):
            end = pos + el.length_km
            covered = np.clip(distances, pos, end) - pos
            power -= 2.0 * el.attenuation_db_per_km * covered
            pos = end
        elif isinstance(el, Amplifier):
            power[distances > pos] += 2.0 * el.gain_db
    for ev in events:
        power[distances > ev.position_km] += ev.step_db
    return power


def synthesize_otdr(
    line: LineModel,
    events=(),
    noise_std: float = 2.0,
    pulse_duration_s: float = 3e-6,
    averages: int = DEFAULT_AVERAGES,
    rng=None,
    launch_db: float = 0.0,
) -> OTDRTrace:
    """Two-way reflectogram of ``line`` with extra point losses ``events``.

    ``noise_std`` is the single-shot noise in dB; the trace carries
    ``noise_std / sqrt(averages)``.
    """
    length = line.length_km
    for ev in events:
        if not 0 <= ev.position_km <= length:
            raise ValueError(f"event at {ev.position_km} km lies outside the {length} km line")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    res = spatial_resolution(pulse_duration_s)
    distances = np.arange(int(math.floor(length / res)) + 1) * res
    power = _clean_trace(line, events, distances, launch_db)
    if noise_std > 0:
        rng = np.random.default_rng(rng)
        power = power + noise_std / math.sqrt(averages) * rng.standard_normal(distances.size)
    return OTDRTrace(distances, power, res, pulse_duration_s, averages)


def _groups(mask, signs, max_gap=0):
    """Runs of True in ``mask`` sharing a sign, as (start, stop) index pairs."""
    idx = np.flatnonzero(mask)
    out = []
    for i in idx:
        if out and i - out[-1][1] <= max_gap + 1 and signs[i] == signs[out[-1][0]]:
            out[-1][1] = i
        else:
            out.append([i, i])
    return [(a, b + 1) for a, b in out]


def _line_at(t, v, at):
    if t.size >= 2:
        coef = np.polyfit(t, v, 1)
        return float(np.polyval(coef, at))
    return float(v.mean())


def localize_losses(
    filtered: OTDRTrace,
    jump_threshold: float = 0.05,
    fit_samples: int = 100,
    known_splices_km=(),
    splice_tolerance_km: float | None = None,
    dead_zone_samples: int = 2,
) -> list[LossEvent]:
    """Point events of a (filtered) reflectogram.

    Derivative samples deviating from the median fiber slope by more than
    ``jump_threshold`` dB are grouped into events.  Each step is measured
    between straight lines fitted to up to ``fit_samples`` samples on either
    side, so a step smeared over a few samples by the filter keeps its full
    height.  Up-steps are amplifiers; down-steps near a known splice are
    splices and the rest are leaks.  Groups within ``dead_zone_samples`` of
    either trace end are ignored, since the filter is least constrained
    there.
    """
    x = filtered.power_db
    z = filtered.distance_km
    if x.size < 3:
        return []
    d = np.diff(x)
    excess = d - np.median(d)
    sign = np.sign(excess)
    mask = np.abs(excess) > jump_threshold
    if dead_zone_samples:
        mask[:dead_zone_samples] = False
        mask[-dead_zone_samples:] = False
    groups = _groups(mask, sign, max_gap=1)
    if not groups:
        return []
    tol = filtered.resolution_km * 2 if splice_tolerance_km is None else splice_tolerance_km
    events = []
    for gi, (a, b) in enumerate(groups):
        lo = groups[gi - 1][1] + 1 if gi > 0 else 0
        hi = groups[gi + 1][0] if gi + 1 < len(groups) else d.size
        k = a + int(np.argmax(np.abs(excess[a:b])))
        at = 0.5 * (z[k] + z[k + 1])
        left = np.arange(max(lo, a - fit_samples), a + 1)
        right = np.arange(b, min(hi, b + fit_samples) + 1)
        if left.size >= 2 and right.size >= 2:
            step = _line_at(z[right], x[right], at) - _line_at(z[left], x[left], at)
        else:
            step = float(excess[a:b].sum())
        if step == 0:
            continue
        if step > 0:
            kind = "amplifier"
        elif any(abs(at - s) <= tol for s in known_splices_km):
            kind = "splice"
        else:
            kind = "leak"
        events.append(LossEvent.from_step(at, step, kind))
    return events


def unexplained_leaks(events, min_magnitude: float = 0.01) -> list[LossEvent]:
    return [e for e in events if e.kind == "leak" and e.magnitude >= min_magnitude]
