"""A subset of the SP 800-22 statistical tests applied to final keys.

Implemented: Frequency, Block Frequency, Runs, Longest Run of Ones and
Cumulative Sums (forward and reverse).  Each test function accepts a 1-D
bit array and returns a p-value, or ``None`` when the sequence is shorter
than the test's minimum length.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .. import kernels
from .bitkey import BitKey

ALPHA = 0.01
MIN_PROPORTION = 0.96

MIN_LENGTH = {
    "Frequency": 100,
    "BlockFrequency": 100,
    "Runs": 100,
    "LongestRun": 128,
    "CumulativeSums": 100,
}

# Longest-run class boundaries and probabilities by block length.
_LONGEST_RUN_TABLE = {
    8: (1, 4, [0.2148, 0.3672, 0.2305, 0.1875]),
    128: (4, 9, [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124]),
    10_000: (10, 16, [0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727]),
}


def _bits(seq) -> np.ndarray:
    if isinstance(seq, BitKey):
        return seq.bits
    b = np.asarray(seq, dtype=np.uint8)
    if b.ndim != 1:
        raise ValueError("expected a 1-D bit sequence")
    return b


def _too_short(bits, name) -> bool:
    return bits.size < MIN_LENGTH[name]


def frequency_test(seq):
    bits = _bits(seq)
    if _too_short(bits, "Frequency"):
        return None
    n = bits.size
    s = 2 * int(bits.sum(dtype=np.int64)) - n
    return float(special.erfc(abs(s) / math.sqrt(2 * n)))


def block_frequency_test(seq, block_len: int = 128):
    bits = _bits(seq)
    if _too_short(bits, "BlockFrequency") or bits.size < block_len:
        return None
    n_blocks = bits.size // block_len
    blocks = bits[: n_blocks * block_len].reshape(n_blocks, block_len)
    pi = blocks.mean(axis=1)
    chi2 = 4.0 * block_len * np.sum((pi - 0.5) ** 2)
    return float(special.gammaincc(n_blocks / 2.0, chi2 / 2.0))


def runs_test(seq):
    bits = _bits(seq)
    if _too_short(bits, "Runs"):
        return None
    n = bits.size
    pi = bits.mean()
    # frequency prerequisite: the runs statistic is meaningless on a biased sequence
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return float(special.erfc(num / den))


def _longest_run_block(n: int) -> int:
    if n < 6272:
        return 8
    if n < 750_000:
        return 128
    return 10_000


def longest_run_test(seq, backend: str | None = None):
    bits = _bits(seq)
    if _too_short(bits, "LongestRun"):
        return None
    m = _longest_run_block(bits.size)
    lo, hi, probs = _LONGEST_RUN_TABLE[m]
    runs = kernels.get_backend(backend).longest_ones_runs(np.ascontiguousarray(bits), m)
    counts = np.bincount(np.clip(runs, lo, hi) - lo, minlength=len(probs))
    n_blocks = runs.size
    expected = n_blocks * np.asarray(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(special.gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0))


def _cdiv(a: int, b: int) -> int:
    """Integer division truncating toward zero, as in C."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def cumulative_sums_test(seq, reverse: bool = False):
    bits = _bits(seq)
    if _too_short(bits, "CumulativeSums"):
        return None
    x = 2 * bits.astype(np.int64) - 1
    if reverse:
        x = x[::-1]
    z = int(np.abs(np.cumsum(x)).max())
    n = bits.size
    if z == 0:  # unreachable for +-1 steps, kept for safety
        return 1.0
    sq = math.sqrt(n)
    k1 = np.arange(_cdiv(_cdiv(-n, z) + 1, 4), _cdiv(_cdiv(n, z) - 1, 4) + 1)
    k2 = np.arange(_cdiv(_cdiv(-n, z) - 3, 4), _cdiv(_cdiv(n, z) - 1, 4) + 1)
    phi = stats.norm.cdf
    s1 = np.sum(phi((4 * k1 + 1) * z / sq) - phi((4 * k1 - 1) * z / sq))
    s2 = np.sum(phi((4 * k2 + 3) * z / sq) - phi((4 * k2 + 1) * z / sq))
    return float(min(1.0, max(0.0, 1.0 - s1 + s2)))


TESTS = {
    "Frequency": frequency_test,
    "BlockFrequency": block_frequency_test,
    "Runs": runs_test,
    "LongestRun": longest_run_test,
    "CumulativeSums (forward)": lambda b: cumulative_sums_test(b, reverse=False),
    "CumulativeSums (reverse)": lambda b: cumulative_sums_test(b, reverse=True),
}


def uniformity_p_value(p_values) -> float:
    """Chi-square uniformity of p-values over ten equal bins."""
    p = np.asarray(p_values, dtype=np.float64)
    counts, _ = np.histogram(p, bins=10, range=(0.0, 1.0))
    expected = p.size / 10.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(special.gammaincc(4.5, chi2 / 2.0))


@dataclass
class TestResult:
    test: str
    applicable: bool
    p_value: float | None = None
    proportion: float | None = None
    n_sequences: int = 0
    p_values: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.applicable and self.proportion is not None and self.proportion > MIN_PROPORTION

    @property
    def assessment(self) -> str:
        if not self.applicable:
            return "not applicable"
        return "success" if self.passed else "failure"


@dataclass
class RandomnessReport:
    results: list
    sequence_length: int
    n_sequences: int

    @property
    def passed(self) -> bool:
        applicable = [r for r in self.results if r.applicable]
        return bool(applicable) and all(r.passed for r in applicable)

    def __getitem__(self, name) -> TestResult:
        for r in self.results:
            if r.test == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "sequence_length": self.sequence_length,
            "n_sequences": self.n_sequences,
            "passed": self.passed,
            "tests": [
                {
                    "test": r.test,
                    "p-value": r.p_value,
                    "proportion": r.proportion,
                    "assessment": r.assessment,
                }
                for r in self.results
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def randomness_battery(key, sequence_length: int = 50_000) -> RandomnessReport:
    """Run every implemented test on consecutive ``sequence_length`` chunks.

    Keys shorter than one chunk are tested as a single sequence.  The
    reported p-value is that of the single sequence, or the uniformity
    p-value of the per-sequence p-values when there are several.
    """
    bits = _bits(key)
    if sequence_length <= 0:
        raise ValueError("sequence_length must be positive")
    n_seq = bits.size // sequence_length
    if n_seq <= 1:
        seqs = [bits]
        seq_len = bits.size
    else:
        seqs = [bits[i * sequence_length : (i + 1) * sequence_length] for i in range(n_seq)]
        seq_len = sequence_length
    results = []
    for name, fn in TESTS.items():
        ps = [fn(s) for s in seqs]
        if any(p is None for p in ps):
            results.append(TestResult(name, applicable=False, n_sequences=len(seqs)))
            continue
        ps = np.asarray(ps)
        prop = float(np.mean(ps > ALPHA))
        p_rep = float(ps[0]) if ps.size == 1 else uniformity_p_value(ps)
        results.append(TestResult(name, True, p_rep, prop, len(seqs), ps.tolist()))
    return RandomnessReport(results, seq_len, len(seqs))


@dataclass(frozen=True)
class BinomialSummary:
    """Ones-count statistics over many equal-length sequences."""

    n_sequences: int
    length: int
    mean: float
    variance: float
    std: float
    expected_mean: float
    expected_variance: float

    @property
    def expected_std(self) -> float:
        return math.sqrt(self.expected_variance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["expected_std"] = self.expected_std
        return d


def binomial_summary(keys, p: float = 0.5) -> BinomialSummary:
    """Sample mean and dispersion of the ones count, next to binomial moments.

    ``keys`` is a sequence of :class:`BitKey` or a 2-D bit array with one
    sequence per row.
    """
    if isinstance(keys, np.ndarray) and keys.ndim == 2:
        counts = keys.sum(axis=1, dtype=np.int64)
        length = keys.shape[1]
    else:
        keys = [_bits(k) for k in keys]
        lengths = {k.size for k in keys}
        if len(lengths) != 1:
            raise ValueError("all sequences must have the same length")
        length = lengths.pop()
        counts = np.array([k.sum(dtype=np.int64) for k in keys])
    if counts.size < 2:
        raise ValueError("need at least two sequences")
    var = float(np.var(counts, ddof=1))
    return BinomialSummary(
        n_sequences=int(counts.size),
        length=int(length),
        mean=float(counts.mean()),
        variance=var,
        std=math.sqrt(var),
        expected_mean=length * p,
        expected_variance=length * p * (1 - p),
    )
