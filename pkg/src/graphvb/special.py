"""Hypergeometric building blocks: rising factorials, the two-variable
confluent series, and the normalizer used by the bounded-support posteriors.

All functions are pure and thread-safe. Values that can exceed the double
range are accumulated in log space with explicit sign tracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NonConvergent

_LOG_MAX = math.log(np.finfo(np.float64).max)
_CHUNK = 512


@dataclass(frozen=True)
class SeriesControl:
    """Truncation policy for the power series in this module.

    abs_tol: a term (together with its geometric tail estimate) below this
    threshold stops the summation.
    max_terms_per_axis: hard cap per summation index before NonConvergent.
    """

    abs_tol: float = 1e-12
    max_terms_per_axis: int = 10_000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_terms_per_axis < 1:
            raise DomainError("max_terms_per_axis must be >= 1")


DEFAULT_CONTROL = SeriesControl()


def log_pochhammer(a: float, k: int) -> tuple[float, float]:
    """Signed-log rising factorial: returns (log|(a)_k|, sign).

    (a)_k = a(a+1)...(a+k-1), with (a)_0 = 1. Sign is 0.0 when the product
    hits an exact zero (a a nonpositive integer within range).
    """
    if k < 0:
        raise DomainError(f"pochhammer order must be nonnegative, got {k}")
    if k == 0:
        return 0.0, 1.0
    if a > 0:
        return float(gammaln(a + k) - gammaln(a)), 1.0
    factors = a + np.arange(k, dtype=np.float64)
    if np.any(factors == 0.0):
        return -math.inf, 0.0
    sign = -1.0 if (np.count_nonzero(factors < 0) % 2) else 1.0
    return float(np.sum(np.log(np.abs(factors)))), sign


def pochhammer(a: float, k: int) -> float:
    """Rising factorial (a)_k as a float, saturating to +/-inf on overflow.

    Small orders multiply directly (exact for small integer arguments);
    large orders go through the signed-log representation.
    """
    if k < 0:
        raise DomainError(f"pochhammer order must be nonnegative, got {k}")
    if k <= 128:
        out = 1.0
        for i in range(k):
            out *= a + i
        return out
    logmag, sign = log_pochhammer(a, k)
    if sign == 0.0:
        return 0.0
    if logmag > _LOG_MAX:
        return math.inf * sign
    return sign * math.exp(logmag)


def _confluent_sum(alpha: float, gamma: float, x: float, ctrl: SeriesControl) -> float:
    """One-variable confluent series sum_m (alpha)_m/((gamma)_m m!) x^m.

    Plain float accumulation with term recurrence; adequate away from the
    overflow regime (use log_confluent for large positive x).
    """
    term = 1.0
    total = 1.0
    for m in range(ctrl.max_terms_per_axis):
        ratio = (alpha + m) * x / ((gamma + m) * (m + 1))
        term *= ratio
        total += term
        if not math.isfinite(total):
            raise NonConvergent(
                f"confluent series overflowed at m={m} (alpha={alpha}, gamma={gamma}, x={x})"
            )
        r = abs(ratio)
        if abs(term) < ctrl.abs_tol and (r < 1.0 and abs(term) * r / (1.0 - r) < ctrl.abs_tol):
            return total
    raise NonConvergent(
        f"confluent series needs more than {ctrl.max_terms_per_axis} terms "
        f"(alpha={alpha}, gamma={gamma}, x={x})"
    )


def log_confluent(alpha: float, gamma: float, x: float, ctrl: SeriesControl = DEFAULT_CONTROL) -> float:
    """log of the confluent series sum_m (alpha)_m/((gamma)_m m!) x^m.

    Requires alpha > 0 and gamma > 0 so every term is positive and the sum
    can be accumulated by chunked log-sum-exp. Negative x is routed through
    the exponential-shift identity, which again yields a positive series
    because gamma - alpha = p > 0 in every caller.
    """
    if alpha <= 0 or gamma <= 0:
        raise DomainError(f"log_confluent requires alpha, gamma > 0 (got {alpha}, {gamma})")
    if x < 0:
        if gamma - alpha <= 0:
            raise DomainError("negative-argument shift needs gamma > alpha")
        return x + log_confluent(gamma - alpha, gamma, -x, ctrl)
    if x == 0:
        return 0.0

    log_x = math.log(x)
    base = gammaln(alpha) - gammaln(gamma)
    running = -math.inf
    log_tol = math.log(ctrl.abs_tol)
    m0 = 0
    while m0 < ctrl.max_terms_per_axis:
        m = np.arange(m0, min(m0 + _CHUNK, ctrl.max_terms_per_axis), dtype=np.float64)
        logt = gammaln(alpha + m) - gammaln(gamma + m) - gammaln(m + 1.0) + m * log_x - base
        chunk_max = float(np.max(logt))
        peak = max(running, chunk_max)
        running = peak + math.log(
            math.exp(running - peak) + float(np.sum(np.exp(logt - peak)))
        )
        m0 += _CHUNK
        # past the term peak (m > x) and the last chunk is negligible
        if m[-1] > x and chunk_max < running + log_tol:
            return running
    raise NonConvergent(
        f"log confluent series needs more than {ctrl.max_terms_per_axis} terms "
        f"(alpha={alpha}, gamma={gamma}, x={x})"
    )


def phi1(
    alpha: float,
    beta: float,
    gamma: float,
    x: float,
    y: float,
    ctrl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Two-variable confluent hypergeometric double series.

    Sums sum_m sum_n (alpha)_{m+n} (beta)_n / ((gamma)_{m+n} m! n!) x^m y^n.
    The series converges for all x but only for |y| < 1 along the y axis.
    When beta == 0 every n > 0 term carries a (0)_n = 0 factor, so the sum
    collapses exactly to the one-variable confluent series in x; that branch
    is taken unconditionally, making y irrelevant.
    """
    if gamma <= 0 and float(gamma).is_integer():
        raise DomainError(f"gamma must not be zero or a negative integer, got {gamma}")
    if beta == 0.0:
        return _confluent_sum(alpha, gamma, x, ctrl)
    if abs(y) >= 1.0:
        raise DomainError(f"|y| < 1 required when beta != 0, got y={y}")

    # Group by n: phi1 = sum_n [(alpha)_n (beta)_n / ((gamma)_n n!)] y^n
    #                    * confluent(alpha + n, gamma + n, x).
    total = 0.0
    coeff = 1.0  # (alpha)_n (beta)_n / ((gamma)_n n!) y^n at current n
    ay = abs(y)
    for n in range(ctrl.max_terms_per_axis):
        inner = _confluent_sum(alpha + n, gamma + n, x, ctrl)
        contrib = coeff * inner
        total += contrib
        if not math.isfinite(total):
            raise NonConvergent(f"phi1 overflowed at n={n}")
        if abs(contrib) < ctrl.abs_tol and abs(contrib) * ay / (1.0 - ay) < ctrl.abs_tol:
            return total
        coeff *= (alpha + n) * (beta + n) * y / ((gamma + n) * (n + 1))
    raise NonConvergent(f"phi1 y-axis needs more than {ctrl.max_terms_per_axis} terms")


def log_h_normalizer(
    p: float,
    q: float,
    r: float,
    s: float,
    v: float,
    theta: float,
    ctrl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """log of the bounded-support normalizer
    H(p,q,r,s,v,theta) = v^{-p} exp(-s/v) phi1(q, r, p+q, s/v, 1-theta).

    The exp(-s/v) prefactor cancels the growth of the series, so the log
    form stays finite where the direct product would overflow.
    """
    if v <= 0:
        raise DomainError(f"scale bound v must be positive, got {v}")
    x = s / v
    if r == 0.0:
        log_series = log_confluent(q, p + q, x, ctrl)
    else:
        series = phi1(q, r, p + q, x, 1.0 - theta, ctrl)
        if series <= 0 or not math.isfinite(series):
            raise NonConvergent(f"phi1 returned non-positive normalizer {series}")
        log_series = math.log(series)
    return -p * math.log(v) - x + log_series


def h_normalizer(
    p: float,
    q: float,
    r: float,
    s: float,
    v: float,
    theta: float,
    ctrl: SeriesControl = DEFAULT_CONTROL,
) -> float:
    """Bounded-support normalizer H, exponentiated from its log form."""
    return math.exp(log_h_normalizer(p, q, r, s, v, theta, ctrl))
