"""Small statistics helpers for Monte Carlo summaries."""

from __future__ import annotations

from scipy import stats


def binomial_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        raise ValueError("n must be positive")
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def binomial_contains(k: int, n: int, p: float, level: float = 0.99) -> bool:
    lo, hi = binomial_ci(k, n, level)
    return lo <= p <= hi
