"""Post-selection of Bob's intensity measurements.

Bob keeps an outcome as bit 0 when it falls in ``[theta3, theta1]``, as bit 1
in ``[theta2, theta4]`` and discards everything else.  Both intervals are
closed.  Sent bits are assumed equiprobable throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np
from scipy import optimize, special

from .channel import DetectionModel, PulseSpec, interval_mass
from .secrecy import HolevoCurve, binary_entropy, eve_state

LN2 = math.log(2.0)


class SiftOutcome(IntEnum):
    ZERO = 0
    ONE = 1
    FAIL = -1


class NoConclusiveRegion(ValueError):
    pass


class NoPositiveRate(ValueError):
    """The key rate is not positive anywhere the optimizer looked."""


@dataclass(frozen=True)
class Thresholds:
    theta1: float
    theta2: float
    theta3: float
    theta4: float

    def __post_init__(self):
        if not (self.theta3 <= self.theta1 < self.theta2 <= self.theta4):
            raise ValueError(
                "thresholds must satisfy theta3 <= theta1 < theta2 <= theta4, got "
                f"{self.theta3}, {self.theta1}, {self.theta2}, {self.theta4}"
            )

    @classmethod
    def from_sequence(cls, t3, t1, t2, t4) -> "Thresholds":
        return cls(theta1=float(t1), theta2=float(t2), theta3=float(t3), theta4=float(t4))

    def as_tuple(self):
        """``(theta3, theta1, theta2, theta4)``, i.e. in increasing order."""
        return (self.theta3, self.theta1, self.theta2, self.theta4)

    def scaled(self, a: float, b: float) -> "Thresholds":
        return Thresholds.from_sequence(*(a * t + b for t in self.as_tuple()))

    def widened(self, lower: float, upper: float) -> "Thresholds":
        """Enlarge the discarded gap by moving theta1 down and theta2 up."""
        t1 = max(self.theta3, self.theta1 - lower)
        t2 = min(self.theta4, self.theta2 + upper)
        return replace(self, theta1=t1, theta2=t2)

    def to_dict(self):
        return {"theta1": self.theta1, "theta2": self.theta2, "theta3": self.theta3, "theta4": self.theta4}


def classify(value: float, th: Thresholds) -> SiftOutcome:
    if th.theta3 <= value <= th.theta1:
        return SiftOutcome.ZERO
    if th.theta2 <= value <= th.theta4:
        return SiftOutcome.ONE
    return SiftOutcome.FAIL


def classify_array(values, th: Thresholds) -> np.ndarray:
    """Vectorized :func:`classify`; returns int8 codes 0, 1 and -1."""
    v = np.asarray(values, dtype=np.float64)
    out = np.full(v.shape, SiftOutcome.FAIL, dtype=np.int8)
    out[(v >= th.theta3) & (v <= th.theta1)] = SiftOutcome.ZERO
    out[(v >= th.theta2) & (v <= th.theta4)] = SiftOutcome.ONE
    return out


def sift(values, sent_bits, th: Thresholds):
    """Return ``(raw_key_bob, kept_indices)`` for a measured stream."""
    values = np.asarray(values)
    sent_bits = np.asarray(sent_bits)
    if values.shape != sent_bits.shape:
        raise ValueError(f"length mismatch: {values.size} outcomes vs {sent_bits.size} sent bits")
    codes = classify_array(values, th)
    kept = np.flatnonzero(codes != SiftOutcome.FAIL)
    return codes[kept].astype(np.uint8), kept


def _entr2(x):
    return special.entr(x) / LN2


@dataclass(frozen=True)
class SiftStats:
    """Conclusive-outcome statistics.

    ``masses[a][b]`` is the probability that sent bit ``a`` is measured as the
    conclusive bit ``b``.
    """

    masses: tuple
    p_conc_0: float
    p_conc_1: float
    p_conc: float
    p_err: float

    @property
    def weights(self):
        """Posterior weights of Alice's bit among conclusive events."""
        w0 = self.p_conc_0 / (2.0 * self.p_conc)
        return w0, 1.0 - w0

    @property
    def joint(self) -> np.ndarray:
        return 0.5 * np.asarray(self.masses) / self.p_conc

    @property
    def s_a(self) -> float:
        return binary_entropy(self.weights[0])

    @property
    def s_a_given_b(self) -> float:
        j = self.joint
        return max(0.0, float(_entr2(j).sum() - _entr2(j.sum(axis=0)).sum()))

    @property
    def bob_imbalance(self) -> float:
        b = self.joint.sum(axis=0)
        return float(abs(b[0] - b[1]))

    @property
    def alice_imbalance(self) -> float:
        w0, w1 = self.weights
        return abs(w0 - w1)

    def to_dict(self):
        return {
            "p_conc_0": self.p_conc_0,
            "p_conc_1": self.p_conc_1,
            "p_conc": self.p_conc,
            "p_err": self.p_err,
            "S_A": self.s_a,
            "S_A_given_B": self.s_a_given_b,
            "bob_imbalance": self.bob_imbalance,
        }


def _masses(model: DetectionModel, t3, t1, t2, t4):
    m00 = interval_mass(model, 0, t3, t1)
    m01 = interval_mass(model, 0, t2, t4)
    m10 = interval_mass(model, 1, t3, t1)
    m11 = interval_mass(model, 1, t2, t4)
    return m00, m01, m10, m11


def sift_stats(model: DetectionModel, th: Thresholds) -> SiftStats:
    m00, m01, m10, m11 = (float(m) for m in _masses(model, *th.as_tuple()))
    pc0, pc1 = m00 + m01, m10 + m11
    p_conc = 0.5 * (pc0 + pc1)
    if p_conc <= 0:
        raise NoConclusiveRegion("no outcome mass falls inside the conclusive intervals")
    p_err = 0.5 * (m01 + m10) / p_conc
    return SiftStats(((m00, m01), (m10, m11)), pc0, pc1, p_conc, p_err)


def empirical_sift_stats(values, sent_bits, th: Thresholds) -> SiftStats:
    """Monte-Carlo counterpart of :func:`sift_stats` (uses the realized bit frequencies)."""
    codes = classify_array(values, th)
    sent = np.asarray(sent_bits)
    m = np.zeros((2, 2))
    for a in (0, 1):
        sel = codes[sent == a]
        if sel.size:
            m[a, 0] = np.mean(sel == 0)
            m[a, 1] = np.mean(sel == 1)
    pc0, pc1 = m[0].sum(), m[1].sum()
    p_conc = 0.5 * (pc0 + pc1)
    if p_conc <= 0:
        raise NoConclusiveRegion("no conclusive outcomes in the stream")
    p_err = 0.5 * (m[0, 1] + m[1, 0]) / p_conc
    return SiftStats(tuple(map(tuple, m)), pc0, pc1, p_conc, p_err)


def holevo_curve(pulses: PulseSpec, r_e: float) -> HolevoCurve:
    return HolevoCurve(eve_state(r_e, pulses.n0), eve_state(r_e, pulses.n1))


def _rate_surface(model, chi_curve, f, t3, t1, t2, t4):
    """Per-pulse key rate and balance for arrays of thresholds."""
    m00, m01, m10, m11 = _masses(model, t3, t1, t2, t4)
    pc0, pc1 = m00 + m01, m10 + m11
    p_conc = 0.5 * (pc0 + pc1)
    ok = p_conc > 0
    safe = np.where(ok, p_conc, 1.0)
    j00, j01, j10, j11 = (0.5 * m / safe for m in (m00, m01, m10, m11))
    w0 = j00 + j01
    b0, b1 = j00 + j10, j01 + j11
    s_a = binary_entropy(np.clip(w0, 0.0, 1.0))
    h_joint = _entr2(j00) + _entr2(j01) + _entr2(j10) + _entr2(j11)
    s_ab = np.maximum(h_joint - _entr2(b0) - _entr2(b1), 0.0)
    chi = chi_curve(w0).reshape(np.shape(w0))
    rate = np.where(ok, p_conc * (s_a - f * s_ab - chi), -np.inf)
    imbalance = np.maximum(np.abs(b0 - b1), np.abs(2.0 * w0 - 1.0))
    return rate, imbalance


def key_rate(model: DetectionModel, th: Thresholds, pulses: PulseSpec, r_e: float, f: float) -> float:
    """Asymptotic final-key bits per sent pulse for the given borders."""
    rate, _ = _rate_surface(model, holevo_curve(pulses, r_e), f, *map(np.atleast_1d, th.as_tuple()))
    return float(rate[0])


@dataclass(frozen=True)
class ThresholdOptimum:
    thresholds: Thresholds
    rate: float
    stats: SiftStats
    chi: float
    balance: float
    evaluations: int

    def to_dict(self):
        return {
            "thresholds": self.thresholds.to_dict(),
            "rate_per_pulse": self.rate,
            "chi": self.chi,
            "balance": self.balance,
            "evaluations": self.evaluations,
        }


_LEVELS = np.array(
    [1e-6, 1e-4, 1e-3, 0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5,
     0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.98, 0.99, 0.995, 0.999, 0.9999, 1 - 1e-6]
)


def _candidate_values(model: DetectionModel) -> np.ndarray:
    lo, hi = model.support()
    vals = np.concatenate([model.quantile(0, _LEVELS), model.quantile(1, _LEVELS), [lo, hi]])
    vals = vals[np.isfinite(vals)]
    return np.unique(vals)


def _ordered_index_combos(k: int) -> np.ndarray:
    i = np.arange(k)
    i3, i1, i2, i4 = np.meshgrid(i, i, i, i, indexing="ij", sparse=True)
    mask = (i3 <= i1) & (i1 < i2) & (i2 <= i4)
    return np.stack(np.nonzero(mask), axis=1)


def optimize_thresholds(
    model: DetectionModel,
    pulses: PulseSpec,
    r_e: float,
    f: float = 1.15,
    max_imbalance: float = 0.02,
    n_starts: int = 6,
) -> ThresholdOptimum:
    """Borders maximizing the per-pulse rate p✓ (S(A) - f S(A|B) - χ).

    A coarse grid over quantiles of both bit distributions seeds a
    coordinate search whose step shrinks to 1e-3 of the distance between
    the two distribution means.  Points whose sifted key is more imbalanced
    than ``max_imbalance`` (Bob's classified bits, or Alice's bits among
    conclusive events) are infeasible.
    """
    chi_curve = holevo_curve(pulses, r_e)
    vals = _candidate_values(model)
    combos = _ordered_index_combos(vals.size)
    t = vals[combos]
    rate, imb = _rate_surface(model, chi_curve, f, t[:, 0], t[:, 1], t[:, 2], t[:, 3])
    rate = np.where(imb <= max_imbalance, rate, -np.inf)
    evaluations = rate.size

    spread = abs(model.mean(1) - model.mean(0))
    if spread == 0:
        spread = max(model.std(0), model.std(1))
    tol = 1e-3 * spread
    discrete = model.discrete
    lo, hi = model.support()

    order = np.argsort(rate)[::-1][:n_starts]
    best_t, best_r = None, -np.inf
    for idx in order:
        if not np.isfinite(rate[idx]):
            break
        cur, cur_r, n_eval = _coordinate_search(
            model, chi_curve, f, max_imbalance, t[idx].copy(), rate[idx], spread / 8, tol, discrete, lo, hi
        )
        evaluations += n_eval
        if cur_r > best_r:
            best_t, best_r = cur, cur_r

    if best_t is None or not best_r > 1e-12:
        raise NoPositiveRate("key rate is not positive for any admissible thresholds")
    th = Thresholds.from_sequence(*best_t)
    st = sift_stats(model, th)
    chi = float(chi_curve(st.weights[0])[0])
    return ThresholdOptimum(th, float(best_r), st, chi, st.bob_imbalance, evaluations)


def _coordinate_search(model, chi_curve, f, max_imb, cur, cur_r, step, tol, discrete, lo, hi):
    n_eval = 0
    if discrete:
        step = max(1.0, float(np.round(step)))
    while True:
        moves = []
        for c in range(4):
            for d in (-1.0, 1.0):
                cand = cur.copy()
                cand[c] = np.clip(cand[c] + d * step, lo, hi)
                if cand[0] <= cand[1] < cand[2] <= cand[3] and not np.array_equal(cand, cur):
                    moves.append(cand)
        if moves:
            m = np.array(moves)
            r, imb = _rate_surface(model, chi_curve, f, m[:, 0], m[:, 1], m[:, 2], m[:, 3])
            r = np.where(imb <= max_imb, r, -np.inf)
            n_eval += r.size
            k = int(np.argmax(r))
            if r[k] > cur_r:
                cur, cur_r = m[k], r[k]
                continue
        if discrete:
            if step <= 1.0:
                break
            step = max(1.0, float(np.floor(step / 2)))
        else:
            if step < tol:
                break
            step /= 2.0
    return cur, float(cur_r), n_eval


def mixture_quantile(model: DetectionModel, q: float) -> float:
    """Quantile of the equal-weight mixture of both bit distributions."""
    lo, hi = model.support()
    g = lambda x: 0.5 * (model.cdf_right(0, x) + model.cdf_right(1, x)) - q  # noqa: E731
    x = optimize.brentq(g, lo, hi, xtol=1e-12 * max(1.0, abs(hi - lo)))
    return float(np.ceil(x)) if model.discrete else float(x)


def thresholds_for_kept_fraction(model: DetectionModel, kept: float) -> Thresholds:
    """Tail borders that keep about ``kept`` of all outcomes, half in each tail."""
    if not 0 < kept < 1:
        raise ValueError("kept fraction must lie in (0, 1)")
    lo, hi = model.support()
    t1 = mixture_quantile(model, kept / 2)
    t2 = mixture_quantile(model, 1 - kept / 2)
    return Thresholds.from_sequence(lo, t1, t2, hi)
