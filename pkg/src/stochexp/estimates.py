"""Monte Carlo estimate container and tail statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

__all__ = ["MCEstimate", "shell_profile"]


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error.

    ``confidence`` is the two-sided coverage of ``mean +/- k * se`` for a
    normal sampling distribution; the default ``k = 3`` gives 99.73%.

    The heavy-tail fields describe the weights behind the mean: the
    largest single value, the share of the total carried by the top 0.1%
    of values, and whether that share exceeds 20%.
    """

    mean: float
    se: float
    n: int
    k: float = 3.0
    seed: int | None = None
    dt: float | None = None
    max_weight: float | None = None
    top_fraction: float | None = None
    dominance_warning: bool = False

    @property
    def confidence(self) -> float:
        return float(2.0 * stats.norm.cdf(self.k) - 1.0)

    @property
    def ci(self) -> tuple[float, float]:
        return (self.mean - self.k * self.se, self.mean + self.k * self.se)

    def contains(self, value: float, k: float | None = None) -> bool:
        k = self.k if k is None else k
        return abs(self.mean - value) <= k * self.se

    def overlaps(self, other: "MCEstimate", k: float | None = None) -> bool:
        k = self.k if k is None else k
        return abs(self.mean - other.mean) <= k * (self.se + other.se)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confidence"] = self.confidence
        d["ci"] = list(self.ci)
        return {key: _jsonable(v) for key, v in d.items()}

    @classmethod
    def from_values(cls, values, seed=None, dt=None, weights_tail: bool = False):
        """Estimate from plain sample values."""
        v = np.asarray(values, dtype=float).reshape(-1)
        n = v.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(np.mean(v))
        se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        extra = _tail_fields(v) if weights_tail else {}
        return cls(mean, se, n, seed=seed, dt=dt, **extra)

    @classmethod
    def from_log_values(cls, log_values, seed=None, dt=None):
        """Estimate ``E exp(L)`` from samples of ``L`` without overflow.

        Values are rescaled by the largest sample before exponentiation.
        Samples equal to ``-inf`` count as zeros.
        """
        lv = np.asarray(log_values, dtype=float).reshape(-1)
        n = lv.size
        if n == 0:
            raise ValueError("no samples")
        top = float(np.max(lv))
        if not np.isfinite(top):
            if top == -np.inf:
                return cls(0.0, 0.0, n, seed=seed, dt=dt, max_weight=0.0, top_fraction=0.0)
            return cls(math.inf, math.inf, n, seed=seed, dt=dt, max_weight=math.inf,
                       top_fraction=1.0, dominance_warning=True)
        w = np.exp(lv - top)
        scale = math.exp(min(top, 709.0))
        mean = float(np.mean(w)) * scale
        se = float(np.std(w, ddof=1) / math.sqrt(n)) * scale if n > 1 else 0.0
        extra = _tail_fields(w)
        extra["max_weight"] = scale
        return cls(mean, se, n, seed=seed, dt=dt, **extra)


def _tail_fields(w):
    w = np.asarray(w, dtype=float)
    total = float(np.sum(w))
    k = max(1, int(math.ceil(0.001 * w.size)))
    if total <= 0:
        return {"max_weight": float(np.max(w)), "top_fraction": 0.0, "dominance_warning": False}
    top = float(np.sum(np.partition(w, w.size - k)[w.size - k:]))
    frac = top / total
    return {"max_weight": float(np.max(w)), "top_fraction": frac, "dominance_warning": frac > 0.2}


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def shell_profile(log_values, min_count: int = 10):
    """Contributions of decade shells of the upper tail to ``E exp(L)``.

    Shell ``j`` holds the samples between the ``1 - 10^-j`` and
    ``1 - 10^-(j+1)`` quantiles, for ``j = 0, 1, ...`` while the shell
    keeps at least ``min_count`` samples.  The returned contributions are
    normalised by the sample size, so they sum (with the innermost part)
    to the sample mean.

    For a tail ``P(Y > y) ~ y^-alpha`` successive contributions shrink by
    about ``10^(1/alpha - 1)``; a ratio near or above one means the
    truncated means keep growing as the truncation is relaxed.

    Returns
    -------
    contributions : ndarray
    ratios : ndarray
        Successive contribution ratios.
    """
    lv = np.sort(np.asarray(log_values, dtype=float).reshape(-1))
    n = lv.size
    top = lv[-1]
    if not np.isfinite(top):
        return np.array([np.inf]), np.array([np.inf])
    w = np.exp(lv - top)
    contribs = []
    j = 0
    while True:
        lo = int(math.floor(n * (1 - 10.0**-j)))
        hi = int(math.floor(n * (1 - 10.0 ** -(j + 1))))
        if n - hi < min_count or hi <= lo:
            break
        contribs.append(float(np.sum(w[lo:hi])) / n)
        j += 1
    contribs = np.asarray(contribs) * math.exp(min(top, 709.0))
    ratios = contribs[1:] / np.where(contribs[:-1] > 0, contribs[:-1], np.nan)
    return contribs, ratios
