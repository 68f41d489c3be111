"""Optical line and detection statistics.

The line is an ordered list of fiber spans and amplifiers.  Mean photon
numbers are propagated deterministically through it; shot noise enters only
through the detection models, which give the per-bit outcome distributions
for Bob and for an eavesdropper tapping a fraction ``r_e`` of the signal
right after the sender.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import stats

PMF_TOL = 1e-9


def fock_cutoff(mean: float) -> int:
    """Largest count kept; the Poisson tail beyond it is below 1e-12."""
    return int(math.ceil(mean + 12.0 * math.sqrt(mean) + 30.0))


class TruncationError(ValueError):
    """Raised when an outcome grid cannot hold the distribution."""


@dataclass(frozen=True)
class FiberSpan:
    length_km: float
    attenuation_db_per_km: float = 0.2

    def __post_init__(self):
        if not self.length_km > 0:
            raise ValueError(f"span length must be > 0 km, got {self.length_km}")
        if self.attenuation_db_per_km < 0:
            raise ValueError("attenuation must be >= 0 dB/km")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.attenuation_db_per_km

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)


@dataclass(frozen=True)
class Amplifier:
    gain_db: float
    ase_noise_photons: float = 0.0

    def __post_init__(self):
        if self.gain_db < 0:
            raise ValueError("amplifier gain must be >= 0 dB")
        if self.ase_noise_photons < 0:
            raise ValueError("ASE noise photons must be >= 0")

    @property
    def gain(self) -> float:
        return 10.0 ** (self.gain_db / 10.0)


Element = Union[FiberSpan, Amplifier]


@dataclass(frozen=True)
class LineModel:
    elements: tuple
    wavelength_nm: float = 1530.33
    receiver_gain_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise ValueError("line must contain at least one element")
        for el in self.elements:
            if not isinstance(el, (FiberSpan, Amplifier)):
                raise TypeError(f"unsupported line element {el!r}")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength must be > 0")

    @classmethod
    def amplified(
        cls,
        n_spans: int,
        span_km: float = 50.0,
        attenuation_db_per_km: float = 0.2,
        gain_db: float | None = None,
        ase_noise_photons: float = 0.0,
        tail_km: float = 0.0,
        **kwargs,
    ) -> "LineModel":
        """Build ``n_spans`` spans each followed by an amplifier.

        By default every amplifier exactly compensates its span.  A final
        unamplified span of ``tail_km`` is appended when positive.
        """
        if n_spans < 0:
            raise ValueError("n_spans must be >= 0")
        span = FiberSpan(span_km, attenuation_db_per_km)
        amp = Amplifier(span.loss_db if gain_db is None else gain_db, ase_noise_photons)
        elements: list = []
        for _ in range(n_spans):
            elements += [span, amp]
        if tail_km > 0:
            elements.append(FiberSpan(tail_km, attenuation_db_per_km))
        return cls(tuple(elements), **kwargs)

    @property
    def length_km(self) -> float:
        return sum(el.length_km for el in self.elements if isinstance(el, FiberSpan))

    @property
    def amplifier_positions_km(self) -> list[float]:
        pos, out = 0.0, []
        for el in self.elements:
            if isinstance(el, FiberSpan):
                pos += el.length_km
            else:
                out.append(pos)
        return out

    def boundary_means(self, n_in: float) -> np.ndarray:
        """Mean photon number after each element (receiver gain excluded)."""
        if n_in < 0:
            raise ValueError("n_in must be >= 0")
        n = float(n_in)
        out = np.empty(len(self.elements))
        for i, el in enumerate(self.elements):
            if isinstance(el, FiberSpan):
                n *= el.transmittance
            else:
                n = n * el.gain + el.ase_noise_photons
            out[i] = n
        return out


def end_to_end_mean(line: LineModel, n_in: float) -> float:
    """Mean photon number reaching the detector for ``n_in`` sent photons.

    ASE added by an amplifier is carried through all downstream loss and
    gain, including the receiver preamplifier.
    """
    n = line.boundary_means(n_in)[-1]
    return float(n * 10.0 ** (line.receiver_gain_db / 10.0))


@dataclass(frozen=True)
class PulseSpec:
    """Mean photon numbers of the two bit-encoding coherent states."""

    n0: float
    n1: float
    pulse_duration_ns: float = 2.5

    def __post_init__(self):
        if not 0 <= self.n0 < self.n1:
            raise ValueError(f"need 0 <= n0 < n1, got n0={self.n0}, n1={self.n1}")

    def mean(self, bit: int) -> float:
        return self.n1 if _check_bit(bit) else self.n0


# Intensities used for the rate budget and for the Bob/Eve histograms.
BASELINE_PULSES = PulseSpec(12300.0, 13700.0)
WIDE_PULSES = PulseSpec(11400.0, 15100.0)


@dataclass(frozen=True)
class EveTap:
    r_e: float
    position: int = 0

    def __post_init__(self):
        if not 0.0 <= self.r_e <= 1.0:
            raise ValueError(f"r_e must lie in [0, 1], got {self.r_e}")
        if self.position != 0:
            raise NotImplementedError("only a tap right after the sender is modelled")


def _check_bit(bit) -> int:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    return int(bit)


@dataclass(frozen=True)
class PoissonIdeal:
    """Photon counting with pure shot noise: ``Poisson(mean_bit)``."""

    mean0: float
    mean1: float
    variant: str = field(default="poisson", init=False)

    def __post_init__(self):
        if self.mean0 < 0 or self.mean1 < 0:
            raise ValueError("Poisson means must be >= 0")

    @classmethod
    def from_line(cls, line: LineModel, pulses: PulseSpec) -> "PoissonIdeal":
        return cls(end_to_end_mean(line, pulses.n0), end_to_end_mean(line, pulses.n1))

    discrete = True

    def mean(self, bit):
        return self.mean1 if _check_bit(bit) else self.mean0

    def std(self, bit):
        return math.sqrt(self.mean(bit))

    def cdf_right(self, bit, x):
        """P(X <= x)."""
        return stats.poisson.cdf(np.floor(x), self.mean(bit))

    def cdf_left(self, bit, x):
        """P(X < x)."""
        return stats.poisson.cdf(np.ceil(x) - 1, self.mean(bit))

    def quantile(self, bit, q):
        return stats.poisson.ppf(q, self.mean(bit))

    def support(self):
        return 0.0, float(fock_cutoff(max(self.mean0, self.mean1)))

    def sample(self, bit, count, rng):
        return rng.poisson(self.mean(bit), size=count).astype(np.float64)

    def scaled(self, a, b):
        raise TypeError("photon-count outcomes cannot be affinely rescaled")


@dataclass(frozen=True)
class GaussianCalibrated:
    """Gaussian voltage histograms, e.g. the calibrated detector of the 1079 km line.

    ``volts_per_photon`` maps voltages back to photon numbers; it is not fixed
    by the published calibration and only enters :meth:`to_photons`.
    """

    loc0: float
    loc1: float
    scale0: float
    scale1: float
    volts_per_photon: float = 0.138 / 11400.0
    variant: str = field(default="gaussian", init=False)

    discrete = False

    def __post_init__(self):
        if not (self.scale0 > 0 and self.scale1 > 0):
            raise ValueError("Gaussian scales must be > 0")
        if self.volts_per_photon <= 0:
            raise ValueError("volts_per_photon must be > 0")

    def mean(self, bit):
        return self.loc1 if _check_bit(bit) else self.loc0

    def std(self, bit):
        return self.scale1 if _check_bit(bit) else self.scale0

    def cdf_right(self, bit, x):
        return stats.norm.cdf(x, self.mean(bit), self.std(bit))

    cdf_left = cdf_right

    def quantile(self, bit, q):
        return stats.norm.ppf(q, self.mean(bit), self.std(bit))

    def support(self):
        lo = min(self.loc0 - 12 * self.scale0, self.loc1 - 12 * self.scale1)
        hi = max(self.loc0 + 12 * self.scale0, self.loc1 + 12 * self.scale1)
        return lo, hi

    def sample(self, bit, count, rng):
        return rng.normal(self.mean(bit), self.std(bit), size=count)

    def scaled(self, a, b):
        """Model of ``a * V + b`` for ``a > 0``."""
        if a <= 0:
            raise ValueError("scale factor must be > 0")
        return GaussianCalibrated(
            a * self.loc0 + b, a * self.loc1 + b, a * self.scale0, a * self.scale1, a * self.volts_per_photon
        )

    def to_photons(self, volts):
        return np.asarray(volts) / self.volts_per_photon


# Bob's histograms at the end of the 1079 km line.
CALIBRATED_BOB = GaussianCalibrated(0.138, 0.176, 0.044, 0.050)

DetectionModel = Union[PoissonIdeal, GaussianCalibrated]


def interval_mass(model: DetectionModel, bit: int, lo, hi):
    """Probability that an outcome for ``bit`` lands in ``[lo, hi]`` (inclusive)."""
    m = np.asarray(model.cdf_right(bit, hi)) - np.asarray(model.cdf_left(bit, lo))
    return np.clip(m, 0.0, 1.0)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_bob(model: DetectionModel, bit: int, count: int, rng_seed=None) -> np.ndarray:
    """Draw ``count`` of Bob's outcomes conditioned on the sent ``bit``."""
    _check_bit(bit)
    if count < 1:
        raise ValueError("count must be >= 1")
    return model.sample(bit, count, _rng(rng_seed))


def sample_bob_stream(model: DetectionModel, bits: np.ndarray, rng_seed=None) -> np.ndarray:
    """Outcomes for a whole stream of sent bits, one draw per bit."""
    rng = _rng(rng_seed)
    bits = np.asarray(bits)
    out = np.empty(bits.size)
    for b in (0, 1):
        idx = np.flatnonzero(bits == b)
        if idx.size:
            out[idx] = model.sample(b, idx.size, rng)
    return out


def sample_eve(spec: PulseSpec, tap: EveTap, bit: int, count: int, rng_seed=None) -> np.ndarray:
    """Eve's photon counts: Poisson with mean ``r_e * n_bit`` (phase-averaged tap)."""
    if not isinstance(tap, EveTap):
        tap = EveTap(float(tap))
    if count < 1:
        raise ValueError("count must be >= 1")
    return _rng(rng_seed).poisson(tap.r_e * spec.mean(bit), size=count)


def eve_model(spec: PulseSpec, tap: EveTap) -> PoissonIdeal:
    return PoissonIdeal(tap.r_e * spec.n0, tap.r_e * spec.n1)


@dataclass(frozen=True)
class OutcomePMF:
    grid: np.ndarray
    probs: np.ndarray
    edges: np.ndarray | None = None

    @property
    def mean(self) -> float:
        return float(np.dot(self.grid, self.probs))


def analytic_pmf(model: DetectionModel, bit: int, grid: Sequence[float] | None = None, bin_width=None) -> OutcomePMF:
    """Outcome distribution for ``bit`` on a finite grid.

    Poisson models use integer counts ``0..N``; Gaussian models use bins whose
    centres are returned as the grid.  A caller-supplied grid (counts, or bin
    edges for the Gaussian case) that leaves more than 1e-9 of the mass
    outside raises :class:`TruncationError`.
    """
    _check_bit(bit)
    if model.discrete:
        if grid is None:
            grid = np.arange(fock_cutoff(model.mean(bit)) + 1)
        grid = np.asarray(grid, dtype=np.float64)
        probs = stats.poisson.pmf(grid, model.mean(bit))
        missing = 1.0 - probs.sum()
        if missing > PMF_TOL:
            raise TruncationError(f"grid misses {missing:.3g} of the Poisson mass")
        return OutcomePMF(grid, probs)
    if grid is None:
        lo, hi = model.support()
        width = bin_width or min(model.scale0, model.scale1) / 100.0
        n_bins = int(math.ceil((hi - lo) / width))
        grid = lo + width * np.arange(n_bins + 1)
    edges = np.asarray(grid, dtype=np.float64)
    cdf = model.cdf_right(bit, edges)
    probs = np.diff(cdf)
    missing = 1.0 - probs.sum()
    if missing > PMF_TOL:
        raise TruncationError(f"grid misses {missing:.3g} of the Gaussian mass")
    return OutcomePMF(0.5 * (edges[1:] + edges[:-1]), probs, edges)


def write_samples_csv(path, bits, values) -> None:
    """Write outcomes as ``index,bit,value`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "bit", "value"])
        for i, (b, v) in enumerate(zip(np.asarray(bits), np.asarray(values))):
            w.writerow([i, int(b), repr(float(v))])


def read_samples_csv(path) -> tuple[np.ndarray, np.ndarray]:
    bits, values = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            bits.append(int(row["bit"]))
            values.append(float(row["value"]))
    return np.asarray(bits, dtype=np.uint8), np.asarray(values)
