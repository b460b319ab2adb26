"""Probability estimates carried in log space, and their reductions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Iterable

import numpy as np
from scipy import stats as _st
from scipy.special import logsumexp

# Below this many successes a Gaussian stderr is not trusted.
SUCCESS_FLOOR = 30

METHODS = ("naive", "tilted", "smc", "chain", "exact")


@dataclass(frozen=True)
class TailEstimate:
    """A log-probability estimate.

    ``log_upper`` is a one-sided 95% upper confidence bound on ``log_p``.  It is
    always filled for binomial estimates, and is the quantity to use when
    ``low_count`` is set (fewer than ``SUCCESS_FLOOR`` hits).
    """

    log_p: float
    stderr_log: float
    n: int
    method: str
    log_upper: float | None = None
    low_count: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.log_p != -math.inf and not math.isfinite(self.stderr_log):
            raise ValueError("stderr_log must be finite when log_p is finite")

    @property
    def p(self) -> float:
        return math.exp(self.log_p)

    def band(self, k: float = 3.0) -> tuple[float, float]:
        """``log_p -/+ k*stderr`` (lower edge may be -inf)."""
        if self.log_p == -math.inf:
            hi = self.log_upper if self.log_upper is not None else -math.inf
            return -math.inf, hi
        return self.log_p - k * self.stderr_log, self.log_p + k * self.stderr_log

    def upper_edge(self, k: float = 3.0) -> float:
        hi = self.band(k)[1]
        if self.low_count and self.log_upper is not None:
            hi = max(hi, self.log_upper)
        return hi

    def as_row(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d


@dataclass(frozen=True)
class LogMoments:
    """Sufficient statistics ``(n, log sum w, log sum w^2)`` of non-negative weights.

    Merging is associative; merging replicas in index order gives the same
    floating-point result whether replicas ran serially or in parallel.
    """

    n: int = 0
    log_s1: float = -math.inf
    log_s2: float = -math.inf

    @classmethod
    def from_log_weights(cls, log_w: np.ndarray) -> "LogMoments":
        log_w = np.asarray(log_w, dtype=float)
        if log_w.size == 0:
            return cls()
        return cls(int(log_w.size), float(logsumexp(log_w)), float(logsumexp(2.0 * log_w)))

    @classmethod
    def from_counts(cls, k: int, n: int) -> "LogMoments":
        lk = math.log(k) if k > 0 else -math.inf
        return cls(int(n), lk, lk)

    def merge(self, other: "LogMoments") -> "LogMoments":
        return LogMoments(
            self.n + other.n,
            float(np.logaddexp(self.log_s1, other.log_s1)),
            float(np.logaddexp(self.log_s2, other.log_s2)),
        )

    @staticmethod
    def reduce(parts: Iterable["LogMoments"]) -> "LogMoments":
        out = LogMoments()
        for p in parts:
            out = out.merge(p)
        return out

    def log_mean(self) -> float:
        return self.log_s1 - math.log(self.n)

    def stderr_log(self) -> float:
        """Delta-method standard error of ``log(mean)``."""
        lm = self.log_mean()
        if lm == -math.inf:
            return math.inf
        rel2 = math.exp(self.log_s2 - math.log(self.n) - 2.0 * lm) - 1.0
        return math.sqrt(max(rel2, 0.0) / self.n)

    def to_estimate(self, method: str, **extra) -> TailEstimate:
        lm = self.log_mean()
        return TailEstimate(lm, self.stderr_log(), self.n, method, extra=extra)


def rule_of_three_upper(k: int, n: int, level: float = 0.95) -> float:
    """One-sided upper confidence bound for a binomial proportion.

    ``k == 0`` gives the classical ``3/n``; otherwise the exact
    Clopper-Pearson bound.
    """
    if k == 0:
        return min(1.0, -math.log(1.0 - level) / n)
    if k >= n:
        return 1.0
    return float(_st.beta.ppf(level, k + 1, n - k))


def binomial_estimate(k: int, n: int, method: str = "naive", **extra) -> TailEstimate:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    upper = math.log(rule_of_three_upper(k, n))
    if k == 0:
        return TailEstimate(-math.inf, math.inf, n, method, upper, True, extra)
    p = k / n
    se = math.sqrt((1.0 - p) / k)
    return TailEstimate(math.log(p), se, n, method, upper, k < SUCCESS_FLOOR, extra)


def ratio_estimate(num: TailEstimate, den: TailEstimate, method: str, **extra) -> TailEstimate:
    """``num/den`` for independent estimates, stderr by the delta method."""
    if den.log_p == -math.inf:
        raise ValueError("denominator estimate is zero")
    se = math.hypot(num.stderr_log, den.stderr_log) if num.log_p != -math.inf else math.inf
    return TailEstimate(num.log_p - den.log_p, se, min(num.n, den.n), method, extra=extra)


def ks_statistic(samples: np.ndarray, cdf) -> float:
    return float(_st.kstest(samples, cdf).statistic)


def dkw_bound(n: int, alpha: float = 0.05) -> float:
    """Dvoretzky-Kiefer-Wolfowitz half-width for an empirical CDF of size n."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))
