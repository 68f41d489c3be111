"""Classical post-processing: reconciliation, privacy amplification, key tests."""
from .bitkey import BitKey
from .randomness import BinomialSummary, RandomnessReport, binomial_summary, randomness_battery
from .reconciliation import LdpcCode, RateInsufficient, ReconcileResult, ec_leakage, reconcile, split_blocks, verify_keys
from .toeplitz import ToeplitzSeed, collision_probe, privacy_amplify

__all__ = [
    "BinomialSummary",
    "BitKey",
    "LdpcCode",
    "RandomnessReport",
    "RateInsufficient",
    "ReconcileResult",
    "ToeplitzSeed",
    "binomial_summary",
    "collision_probe",
    "ec_leakage",
    "privacy_amplify",
    "randomness_battery",
    "reconcile",
    "split_blocks",
    "verify_keys",
]
