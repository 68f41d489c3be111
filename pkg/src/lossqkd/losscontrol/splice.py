"""Power budget of a fiber splice."""


def splice_leak_budget(transmittance: float, reflectance: float, external_fraction: float) -> float:
    """Fraction of the incident power leaking out of the fiber at a splice.

    The power not transmitted or reflected is scattered, ``S = 1 - T - R``;
    ``external_fraction`` of it escapes to the environment, where an
    eavesdropper could collect it.
    """
    if transmittance < 0 or reflectance < 0:
        raise ValueError("T and R must be >= 0")
    if transmittance + reflectance > 1 + 1e-12:
        raise ValueError(f"T + R = {transmittance + reflectance} exceeds 1")
    if not 0 <= external_fraction <= 1:
        raise ValueError("external_fraction must lie in [0, 1]")
    return max(0.0, 1.0 - transmittance - reflectance) * external_fraction
