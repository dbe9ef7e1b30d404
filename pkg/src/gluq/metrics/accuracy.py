import numpy as np

from ..exceptions import DomainError, SizeError

__all__ = ["mard", "zone_a_fraction"]


def mard(pred, ref) -> float:
    """Mean absolute relative difference, in percent: ``100 * mean(|pred - ref| / ref)``."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"pred and ref lengths differ: {pred.size} vs {ref.size}")
    if ref.size == 0:
        raise SizeError("MARD of an empty sample")
    if np.any(ref <= 0):
        raise DomainError("reference values must be strictly positive")
    return float(100.0 * np.mean(np.abs(pred - ref) / ref))


def zone_a_fraction(zones) -> float:
    """Percentage of points classified into zone A."""
    zones = np.asarray(zones).ravel()
    if zones.size == 0:
        raise SizeError("zone A fraction of an empty sample")
    return float(100.0 * np.count_nonzero(zones == "A") / zones.size)
