"""Cross-run statistics: mean/std summaries and the unpaired two-tailed
Student's t-test (pooled variance; Welch behind a flag).

The two-tailed p-value comes from the t CDF via the regularized incomplete
beta function, evaluated with the standard continued-fraction scheme to well
below 1e-9 absolute error, so reports are deterministic and dependency-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-14
_BETACF_TINY = 1e-300


def summarize_runs(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1 denominator)."""
    if len(values) < 2:
        raise ValidationError(f"need at least 2 values to summarize, got {len(values)}")
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ValidationError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValidationError("incomplete beta requires a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    # Use the symmetry transform so the continued fraction converges fast.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with `df` degrees of freedom."""
    if df < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass(frozen=True)
class TTestResult:
    """`t` is None when the pooled variance is zero but means differ (the
    degenerate case: p = 0 and the flag is set)."""

    t: float | None
    df: int
    p_value: float
    degenerate: bool = False

    def to_payload(self) -> dict:
        return {"t": self.t, "df": self.df, "p_value": self.p_value,
                "degenerate": self.degenerate}


def students_t_test(a: Sequence[float], b: Sequence[float], *, welch: bool = False) -> TTestResult:
    """Unpaired two-tailed t-test.

    Default is the pooled-variance (classic Student's) form with
    df = n_a + n_b - 2; `welch=True` switches to the unequal-variance form
    with Welch-Satterthwaite degrees of freedom (rounded down).
    """
    if len(a) < 2 or len(b) < 2:
        raise ValidationError("t-test requires at least 2 values per sample")
    na, nb = len(a), len(b)
    mean_a, mean_b = sum(a) / na, sum(b) / nb
    var_a = sum((v - mean_a) ** 2 for v in a) / (na - 1)
    var_b = sum((v - mean_b) ** 2 for v in b) / (nb - 1)

    if welch:
        se2 = var_a / na + var_b / nb
        if se2 == 0.0:
            return _degenerate_result(mean_a, mean_b, df=na + nb - 2)
        df = int((se2 ** 2) / (
            (var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1)
        ))
        t = (mean_a - mean_b) / math.sqrt(se2)
        return TTestResult(t=t, df=df, p_value=t_two_tailed_p(t, df))

    df = na + nb - 2
    pooled = ((na - 1) * var_a + (nb - 1) * var_b) / df
    if pooled == 0.0:
        return _degenerate_result(mean_a, mean_b, df=df)
    t = (mean_a - mean_b) / math.sqrt(pooled * (1.0 / na + 1.0 / nb))
    return TTestResult(t=t, df=df, p_value=t_two_tailed_p(t, df))


def _degenerate_result(mean_a: float, mean_b: float, df: int) -> TTestResult:
    if mean_a == mean_b:
        return TTestResult(t=0.0, df=df, p_value=1.0)
    return TTestResult(t=None, df=df, p_value=0.0, degenerate=True)
