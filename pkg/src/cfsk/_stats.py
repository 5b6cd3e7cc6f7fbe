import numpy as np
from scipy.stats import binomtest


def wilson_ci(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(errors), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def binomial_sigma(p: float, trials: int) -> float:
    """Standard error of an error fraction; floored at one event for p = 0."""
    p = max(p, 1.0 / trials) if p == 0 else p
    return float(np.sqrt(p * (1 - p) / trials))
