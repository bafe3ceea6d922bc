"""Accuracy aggregation and the one-sided Welch t-test used for comparisons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc


class StatsError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrialSet:
    accuracies: tuple
    condition: dict = field(default_factory=dict)  # latent_dim, K, factor, method

    def __post_init__(self):
        if len(self.accuracies) == 0:
            raise StatsError("empty trial set")


def aggregate(trials) -> tuple[float, float]:
    """(mean, sample std); singleton sets fall back to population convention."""
    a = np.asarray(trials.accuracies if hasattr(trials, "accuracies") else trials, dtype=float)
    if len(a) == 0:
        raise StatsError("nothing to aggregate")
    mean = float(a.mean())
    std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return mean, std


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF via the regularized incomplete beta function."""
    if df <= 0:
        raise StatsError("df must be positive")
    if not np.isfinite(t):
        return 1.0 if t > 0 else 0.0
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t >= 0 else tail


def one_sided_t_test(a, b, alpha: float = 0.05):
    """Welch test of H1: mean(a) > mean(b). Returns (t, p, significant)."""
    xa = np.asarray(a.accuracies if hasattr(a, "accuracies") else a, dtype=float)
    xb = np.asarray(b.accuracies if hasattr(b, "accuracies") else b, dtype=float)
    if len(xa) < 2 or len(xb) < 2:
        raise StatsError("need at least 2 samples per group")
    na, nb = len(xa), len(xb)
    va, vb = xa.var(ddof=1), xb.var(ddof=1)
    se2 = va / na + vb / nb
    diff = xa.mean() - xb.mean()
    if se2 == 0:
        if diff == 0:
            raise StatsError("zero variance in both groups with equal means")
        t = np.inf if diff > 0 else -np.inf
        p = 0.0 if diff > 0 else 1.0
        return float(t), float(p), p < alpha
    t = diff / np.sqrt(se2)
    # Welch-Satterthwaite degrees of freedom
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 1.0 - t_cdf(t, df)
    return float(t), float(p), bool(p < alpha)
