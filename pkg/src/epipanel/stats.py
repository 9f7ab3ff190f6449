"""Student-t distribution through the regularized incomplete beta function.

For T with ``df`` degrees of freedom and t >= 0::

    P(T > t) = 0.5 * I_x(df/2, 1/2),   x = df / (df + t**2)

so the upper quantile follows from inverting ``I_x`` in ``x``. The
continued fraction is evaluated with the modified Lentz method; the
inversion uses Halley steps safeguarded by bisection.
"""

from __future__ import annotations

import math

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), valid for x < (a + 1) / (a + b + 2)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def betaincinv(a: float, b: float, p: float) -> float:
    """Inverse of :func:`betainc` in ``x``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p == 0.0 or p == 1.0:
        return p
    # Starting point after Numerical Recipes (3rd ed.), section 6.4.
    if a >= 1.0 and b >= 1.0:
        pp = p if p < 0.5 else 1.0 - p
        t = math.sqrt(-2.0 * math.log(pp))
        x = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t
        if p < 0.5:
            x = -x
        al = (x * x - 3.0) / 6.0
        h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0))
        w = x * math.sqrt(al + h) / h - (1.0 / (2.0 * b - 1) - 1.0 / (2.0 * a - 1.0)) * (
            al + 5.0 / 6.0 - 2.0 / (3.0 * h)
        )
        x = a / (a + b * math.exp(2.0 * w))
    else:
        lna = math.log(a / (a + b))
        lnb = math.log(b / (a + b))
        t = math.exp(a * lna) / a
        u = math.exp(b * lnb) / b
        w = t + u
        if p < t / w:
            x = (a * w * p) ** (1.0 / a)
        else:
            x = 1.0 - (b * w * (1.0 - p)) ** (1.0 / b)
    x = min(max(x, _TINY), 1.0 - 1e-16)

    lo, hi = 0.0, 1.0
    log_norm = -_log_beta(a, b)
    for _ in range(_MAX_ITER):
        f = betainc(a, b, x) - p
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        log_pdf = (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) + log_norm
        pdf = math.exp(log_pdf)
        step = None
        if pdf > 0 and math.isfinite(pdf):
            newton = f / pdf
            # Halley correction from the log-derivative of the density.
            curv = (a - 1.0) / x - (b - 1.0) / (1.0 - x)
            denom = 1.0 - 0.5 * min(1.0, newton * curv)
            step = newton / denom if denom != 0 else newton
        x_new = x - step if step is not None else 0.5 * (lo + hi)
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 2.0 * math.ulp(x) or hi - lo <= 2.0 * math.ulp(x):
            return x_new
        x = x_new
    return x


def t_cdf(t: float, df: float) -> float:
    """Cumulative distribution function of Student's t."""
    if df <= 0:
        raise ValueError("df must be positive")
    if t == 0:
        return 0.5
    t2 = t * t
    if t2 < df:
        # Near the centre x = df / (df + t^2) is close to 1; use y = 1 - x.
        half = 0.5 * betainc(0.5, df / 2.0, t2 / (df + t2))
        return 0.5 + half if t > 0 else 0.5 - half
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t2))
    return 1.0 - tail if t > 0 else tail


def t_ppf(p: float, df: float) -> float:
    """Quantile function of Student's t (inverse of :func:`t_cdf`)."""
    if df <= 0:
        raise ValueError("df must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    upper = p > 0.5
    tail = 2.0 * (1.0 - p) if upper else 2.0 * p  # two-sided tail mass
    if tail < 0.5:
        # x = df / (df + t^2) is small: invert I_x(df/2, 1/2) directly.
        x = betaincinv(df / 2.0, 0.5, tail)
        t = math.sqrt(df * (1.0 - x) / x)
    else:
        # x is close to 1: work with y = 1 - x to keep precision.
        y = betaincinv(0.5, df / 2.0, 1.0 - tail)
        t = math.sqrt(df * y / (1.0 - y))
    return t if upper else -t


def t_critical(level: float, df: float) -> float:
    """Two-sided critical value, e.g. ``t_critical(0.95, 10) == 2.228...``."""
    return t_ppf(0.5 + level / 2.0, df)
