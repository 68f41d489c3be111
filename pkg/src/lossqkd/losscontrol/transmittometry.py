"""Lock-in transmittometry: end-to-end loss from a sinusoidal probe.

Each epoch Bob measures the amplitude ``a_t`` of a known carrier and
compares it with a reference amplitude ``a_ref`` captured at the last
refresh.  An intervention shows up as a sharp rise of the loss above its
recent baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats


class ProbeError(ValueError):
    """Probe settings that make the single-bin estimate ambiguous."""


@dataclass(frozen=True)
class TransmitProbe:
    carrier_freq: float = 25e6
    duration: float = 1e-3
    sample_rate: float = 125e6
    amplitude: float = 1.0

    def __post_init__(self):
        if self.carrier_freq <= 0 or self.duration <= 0:
            raise ProbeError("carrier frequency and duration must be > 0")
        if not self.sample_rate > 2 * self.carrier_freq:
            raise ProbeError(
                f"sample rate {self.sample_rate:g} Hz must exceed twice the carrier {self.carrier_freq:g} Hz"
            )
        cycles = self.carrier_freq * self.duration
        if abs(cycles - round(cycles)) > 1e-9 * max(1.0, cycles):
            raise ProbeError(f"probe spans {cycles:.6g} carrier cycles; an integer number is required")
        samples = self.sample_rate * self.duration
        if abs(samples - round(samples)) > 1e-9 * samples:
            raise ProbeError(f"probe spans {samples:.6g} samples; an integer number is required")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))

    @property
    def cycles(self) -> int:
        return int(round(self.carrier_freq * self.duration))

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def waveform(self, amplitude: float | None = None, phase: float = 0.0) -> np.ndarray:
        a = self.amplitude if amplitude is None else amplitude
        return a * np.sin(2 * np.pi * self.carrier_freq * self.times() + phase)


def lockin_amplitude(samples, probe: TransmitProbe):
    """Amplitude of the carrier bin, ``2 |X_k| / N``.

    ``samples`` may carry leading batch dimensions; the last axis is time.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = probe.n_samples
    if x.shape[-1] != n:
        raise ProbeError(f"expected {n} samples per probe, got {x.shape[-1]}")
    phase = 2 * np.pi * probe.cycles * np.arange(n) / n
    re = x @ np.cos(phase)
    im = x @ np.sin(phase)
    return 2.0 * np.hypot(re, im) / n


def loss_estimate(a_t, a_ref):
    """Fractional loss ``1 - a_t / a_ref``; negative values are kept."""
    a_ref = np.asarray(a_ref, dtype=np.float64)
    if np.any(a_ref <= 0):
        raise ValueError("reference amplitude must be > 0")
    out = 1.0 - np.asarray(a_t, dtype=np.float64) / a_ref
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LossSeries:
    """Per-epoch losses, each against the reference current at that epoch."""

    timestamps: np.ndarray
    losses: np.ndarray
    a_ref: np.ndarray
    refresh_epochs: np.ndarray

    def __post_init__(self):
        n = len(self.losses)
        for name in ("timestamps", "a_ref"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per epoch")
        ref = np.asarray(self.refresh_epochs, dtype=np.int64)
        if n and (ref.size == 0 or ref[0] != 0):
            raise ValueError("a reference must be captured at epoch 0")
        if np.any(np.diff(ref) <= 0) or (ref.size and ref[-1] >= max(n, 1)):
            raise ValueError("refresh epochs must be increasing and inside the series")
        a_ref = np.asarray(self.a_ref, dtype=np.float64)
        # the reference only changes at refresh epochs
        if n > 1:
            changed = np.flatnonzero(a_ref[1:] != a_ref[:-1]) + 1
            if not np.isin(changed, ref).all():
                raise ValueError("a_ref changes outside a refresh epoch")
        for name, arr in (("timestamps", self.timestamps), ("losses", self.losses), ("a_ref", a_ref),
                          ("refresh_epochs", ref)):
            arr = np.array(arr, dtype=ref.dtype if name == "refresh_epochs" else np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.losses.size

    @property
    def amplitudes(self) -> np.ndarray:
        return (1.0 - self.losses) * self.a_ref

    def cumulative_losses(self) -> np.ndarray:
        """Losses re-expressed against the first reference of the series."""
        return 1.0 - self.amplitudes / self.a_ref[0]

    @classmethod
    def from_amplitudes(cls, amplitudes, ref_amplitudes, refresh_every: int, epoch_interval: float = 1e-3):
        """Build a series where ``ref_amplitudes[i]`` is captured every ``refresh_every`` epochs."""
        a = np.asarray(amplitudes, dtype=np.float64)
        if refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        refresh = np.arange(0, a.size, refresh_every)
        refs = np.asarray(ref_amplitudes, dtype=np.float64)
        if refs.size < refresh.size:
            raise ValueError("not enough reference captures")
        a_ref = np.repeat(refs[: refresh.size], refresh_every)[: a.size]
        return cls(np.arange(a.size) * epoch_interval, loss_estimate(a, a_ref), a_ref, refresh)


def simulate_loss_series(
    n_epochs: int,
    noise_std: float = 0.002,
    tap_loss: float = 0.0,
    tap_epoch: int | None = None,
    refresh_every: int = 5,
    rng=None,
    probe: TransmitProbe | None = None,
    line_transmittance: float = 1.0,
    drift_amplitude: float = 0.0,
    drift_period_epochs: float = 1000.0,
    waveform: bool = False,
) -> LossSeries:
    """Synthetic transmittometry run.

    Every amplitude measurement, reference captures included, carries
    independent additive detector noise of std ``noise_std`` times the
    nominal received amplitude, so the noise does not shrink when a tap
    removes light.  A tap of fractional power ``tap_loss`` starts at
    ``tap_epoch``.  With ``waveform=True`` each measurement goes through the
    lock-in on a sampled noisy sinusoid, with the white-noise level chosen
    to give the same amplitude noise.
    """
    if n_epochs < 1:
        raise ValueError("n_epochs must be >= 1")
    if not 0 <= tap_loss < 1:
        raise ValueError("tap_loss must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    probe = probe or TransmitProbe()
    epochs = np.arange(n_epochs)
    trans = np.full(n_epochs, line_transmittance, dtype=np.float64)
    if drift_amplitude:
        trans *= 1.0 + drift_amplitude * np.sin(2 * np.pi * epochs / drift_period_epochs)
    if tap_epoch is not None and tap_loss > 0:
        trans[epochs >= tap_epoch] *= 1.0 - tap_loss
    refresh = np.arange(0, n_epochs, refresh_every)
    clean = probe.amplitude * trans
    noise = noise_std * probe.amplitude * line_transmittance
    if waveform:
        amps = _measure_waveforms(clean, noise, probe, rng)
        refs = _measure_waveforms(clean[refresh], noise, probe, rng)
    else:
        amps = clean + noise * rng.standard_normal(n_epochs)
        refs = clean[refresh] + noise * rng.standard_normal(refresh.size)
    return LossSeries.from_amplitudes(amps, refs, refresh_every, probe.duration)


def _measure_waveforms(amplitudes, amp_noise, probe, rng, chunk=64):
    n = probe.n_samples
    base = probe.waveform(1.0)
    # white-noise std giving an amplitude-estimate std of amp_noise
    sigma = amp_noise * math.sqrt(n / 2.0)
    out = np.empty(len(amplitudes))
    for s in range(0, len(amplitudes), chunk):
        a = np.asarray(amplitudes[s : s + chunk])[:, None]
        x = a * base + sigma * rng.standard_normal((a.shape[0], n))
        out[s : s + chunk] = lockin_amplitude(x, probe)
    return out


def running_baseline(values, window: int = 32) -> np.ndarray:
    """Median of the previous ``window`` values; 0 where there is no history."""
    v = np.asarray(values, dtype=np.float64)
    out = np.zeros(v.size)
    head = min(window, v.size)
    for t in range(1, head):
        out[t] = np.median(v[:t])
    if v.size > window:
        out[window:] = np.median(sliding_window_view(v[:-1], window), axis=1)[: v.size - window]
    return out


def exceedances(series: LossSeries, sigma_ref: float, k: float = 3.0, window: int = 32) -> np.ndarray:
    """Epochs whose loss is more than ``k * sigma_ref`` above the running baseline."""
    if sigma_ref <= 0:
        raise ValueError("sigma_ref must be > 0")
    cum = series.cumulative_losses()
    return cum - running_baseline(cum, window) > k * sigma_ref


def _clusters(epochs, max_gap: int):
    """Split sorted epochs wherever more than ``max_gap`` epochs are skipped."""
    groups: list[list[int]] = []
    for e in epochs:
        if groups and e - groups[-1][-1] <= max_gap + 1:
            groups[-1].append(int(e))
        else:
            groups.append([int(e)])
    return groups


def detect_intervention(
    series: LossSeries,
    sigma_ref: float,
    k: float = 3.0,
    window: int = 32,
    persistence: int = 3,
    max_gap: int = 1,
) -> list[int]:
    """Alarm epochs of a loss series.

    Exceedances separated by at most ``max_gap`` quiet epochs form a
    cluster; every exceedance in a cluster of at least ``persistence``
    members is an alarm.  Isolated noise spikes therefore never alarm,
    while a real step, which exceeds on almost every epoch after it, does
    even if one epoch right after the step dips below the threshold.
    """
    if persistence < 1:
        raise ValueError("persistence must be >= 1")
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    exc = np.flatnonzero(exceedances(series, sigma_ref, k, window))
    alarms: list[int] = []
    for group in _clusters(exc, max_gap):
        if len(group) >= persistence:
            alarms.extend(group)
    return alarms


def alarm_onsets(alarms, max_gap: int = 1) -> list[int]:
    """First epoch of every alarm cluster."""
    return [g[0] for g in _clusters(sorted(alarms), max_gap)]


def exceedance_probability(step: float, sigma: float, k: float = 3.0) -> float:
    """Chance that one epoch after a step of ``step`` exceeds ``k * sigma``.

    Baseline noise is neglected, so this is the Gaussian tail
    ``P(step + sigma * xi > k * sigma)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return float(stats.norm.sf(k - step / sigma))
