"""Eavesdropper states, Holevo bound and final key length.

Phase randomization makes Eve's tapped states diagonal in the Fock basis,
so every entropy here is the Shannon entropy of a Poisson weight vector and
no matrix diagonalization is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants, special, stats

from .channel import fock_cutoff

MASS_TOL = 1e-9
TAIL_TOL = 1e-12


def binary_entropy(p):
    """h2(p) in bits, with h2(0) = h2(1) = 0."""
    p = np.asarray(p, dtype=np.float64)
    out = (special.entr(p) + special.entr(1.0 - p)) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DiagonalState:
    """Density matrix diagonal in the Fock basis, truncated at ``len(probs) - 1``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be >= 0")
        if abs(p.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"state mass {p.sum():.12g} differs from 1 by more than {MASS_TOL}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def cutoff(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def padded(self, size: int) -> np.ndarray:
        if size < self.probs.size:
            dropped = self.probs[size:].sum()
            if dropped > TAIL_TOL:
                raise ValueError(f"re-truncation would drop {dropped:.3g} > {TAIL_TOL} of the state")
            return self.probs[:size]
        out = np.zeros(size)
        out[: self.probs.size] = self.probs
        return out


def eve_state(r_e: float, n_mean: float, cutoff: int | None = None) -> DiagonalState:
    """Eve's phase-averaged tap of a coherent state: Poisson(r_e * n_mean)."""
    if not 0.0 <= r_e <= 1.0:
        raise ValueError(f"r_e must lie in [0, 1], got {r_e}")
    if n_mean < 0:
        raise ValueError("n_mean must be >= 0")
    mu = r_e * n_mean
    if cutoff is None:
        cutoff = fock_cutoff(mu)
    if mu == 0:
        probs = np.zeros(cutoff + 1)
        probs[0] = 1.0
    else:
        probs = stats.poisson.pmf(np.arange(cutoff + 1), mu)
    return DiagonalState(probs)


def von_neumann_entropy(state: DiagonalState) -> float:
    """-tr(rho log2 rho) for a diagonal state, i.e. the Shannon entropy of its weights."""
    return float(special.entr(state.probs).sum() / math.log(2.0))


def holevo_bound(rho0: DiagonalState, rho1: DiagonalState, w0: float, w1: float) -> float:
    """Holevo quantity of the ensemble {w0: rho0, w1: rho1} in bits."""
    if abs(w0 + w1 - 1.0) > MASS_TOL or w0 < 0 or w1 < 0:
        raise ValueError(f"weights must be a distribution, got ({w0}, {w1})")
    size = max(rho0.probs.size, rho1.probs.size)
    p0, p1 = rho0.padded(size), rho1.padded(size)
    mix = w0 * p0 + w1 * p1
    ln2 = math.log(2.0)
    chi = (special.entr(mix).sum() - w0 * special.entr(p0).sum() - w1 * special.entr(p1).sum()) / ln2
    return max(0.0, float(chi))


class HolevoCurve:
    """Vectorized χ(w0) for a fixed pair of Eve states.

    Used by the threshold optimizer, which evaluates many weight values for
    the same tap.
    """

    def __init__(self, rho0: DiagonalState, rho1: DiagonalState):
        size = max(rho0.probs.size, rho1.probs.size)
        self.p0 = rho0.padded(size)
        self.p1 = rho1.padded(size)
        self.h0 = special.entr(self.p0).sum()
        self.h1 = special.entr(self.p1).sum()

    def __call__(self, w0):
        w0 = np.atleast_1d(np.asarray(w0, dtype=np.float64))
        out = np.empty(w0.shape)
        chunk = max(1, 2_000_000 // self.p0.size)
        for s in range(0, w0.size, chunk):
            w = w0[s : s + chunk, None]
            mix = w * self.p0 + (1.0 - w) * self.p1
            h = special.entr(mix).sum(axis=1)
            out[s : s + chunk] = h - w[:, 0] * self.h0 - (1.0 - w[:, 0]) * self.h1
        return np.maximum(out / math.log(2.0), 0.0)


def state_overlap(n0: float, n1: float, r_e: float) -> float:
    """Overlap exp(-r_e (|γ0| - |γ1|)^2) of Eve's tapped states, |γ| = sqrt(n)."""
    if n0 < 0 or n1 < 0:
        raise ValueError("photon numbers must be >= 0")
    return math.exp(-r_e * (math.sqrt(n0) - math.sqrt(n1)) ** 2)


def photons_from_energy(energy_j: float, wavelength_nm: float, planck=constants.h) -> float:
    """Mean photon number E / (h ν) of a pulse of energy ``energy_j``.

    ``planck`` may be overridden to explore the classical limit h -> 0.
    """
    if energy_j < 0:
        raise ValueError("energy must be >= 0")
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be > 0")
    return energy_j * wavelength_nm * 1e-9 / (planck * constants.c)


def energy_from_photons(n: float, wavelength_nm: float, planck=constants.h) -> float:
    return n * planck * constants.c / (wavelength_nm * 1e-9)


@dataclass(frozen=True)
class SecrecyBudget:
    """Ingredients of the final-length formula, all entropies in bits per sifted bit."""

    s_a: float
    s_a_given_b: float
    chi: float
    f: float
    p_conc: float
    length: float

    def __post_init__(self):
        eps = 1e-12
        if not -eps <= self.chi <= 1 + eps:
            raise ValueError(f"chi must lie in [0, 1], got {self.chi}")
        if not -eps <= self.s_a <= 1 + eps:
            raise ValueError(f"S(A) must lie in [0, 1], got {self.s_a}")
        if self.s_a_given_b < -eps:
            raise ValueError("S(A|B) must be >= 0")
        if self.f < 1:
            raise ValueError(f"error-correction efficiency f must be >= 1, got {self.f}")
        if not 0 <= self.p_conc <= 1:
            raise ValueError("p_conc must lie in [0, 1]")
        if self.length < 0:
            raise ValueError("length must be >= 0")

    @property
    def rate_per_sifted_bit(self) -> float:
        return self.s_a - self.f * self.s_a_given_b - self.chi

    def to_dict(self) -> dict:
        return {
            "S_A": self.s_a,
            "S_A_given_B": self.s_a_given_b,
            "chi": self.chi,
            "f": self.f,
            "p_conc": self.p_conc,
            "L": self.length,
        }


@dataclass(frozen=True)
class KeyLength:
    bits: float
    secure: bool

    def __bool__(self):
        return self.secure

    @property
    def verdict(self) -> str:
        return "secure" if self.secure else "insecure"


INSECURE = KeyLength(0.0, False)


def final_key_length(budget: SecrecyBudget) -> KeyLength:
    """p✓ L (S(A) - f S(A|B) - χ), or the insecure verdict when that is not positive."""
    lf = budget.p_conc * budget.length * budget.rate_per_sifted_bit
    if lf > 0:
        return KeyLength(lf, True)
    return INSECURE
