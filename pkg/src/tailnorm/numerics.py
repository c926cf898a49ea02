"""Shared numerical kernels.

Improper integrals on a half line, concave maximization on (half-)infinite
intervals, monotone bisection and log-log slope fitting.  Everything here is
a pure function of its arguments.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate as _integrate

from .errors import InputError, QuadratureError

# the gamma function is only needed for oracles and family constants
gamma = math.gamma
lgamma = math.lgamma

INF = math.inf
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for :func:`integrate_halfline`.

    ``truncation`` is the relative size below which a geometric panel is
    considered to be the start of a negligible tail.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    truncation: float = 1e-15
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.truncation > 0):
            raise InputError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise InputError("max_subdivisions must be at least 1")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    panels: int


@dataclass(frozen=True)
class MaxResult:
    argmax: float
    value: float
    boundary: bool = False
    unbounded: bool = False


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    rms: float
    n: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "rms": self.rms, "n": self.n}


# ---------------------------------------------------------------------------
# log-space helpers


def log_add(a: float, b: float) -> float:
    if a == -INF:
        return b
    if b == -INF:
        return a
    m = max(a, b)
    return m + math.log1p(math.exp(-abs(a - b)))


def log_sinh(z: float) -> float:
    """log(sinh z) for z >= 0, stable for large z; -inf at 0."""
    if z <= 0.0:
        return -INF
    if z < 1e-3:
        return math.log(z) + math.log1p(z * z / 6.0)
    return z + math.log(-math.expm1(-2.0 * z)) - _LOG2


def log_cosh(z: float) -> float:
    z = abs(z)
    return z + math.log1p(math.exp(-2.0 * z)) - _LOG2


# ---------------------------------------------------------------------------
# quadrature


def _panel(f, a, b, spec):
    out = _integrate.quad(
        f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
        limit=spec.max_subdivisions, full_output=1,
    )
    value, err = out[0], out[1]
    if not math.isfinite(value) or not math.isfinite(err):
        raise InputError(f"integrand produced a non-finite value on [{a}, {b}]")
    if len(out) == 4 and err > max(spec.abs_tol, math.sqrt(spec.rel_tol) * abs(value)):
        raise QuadratureError(f"panel [{a:g}, {b:g}] did not converge: {out[3]!s:.80}",
                              partial=value, error=err)
    return value, err


def _finite(f, x):
    v = f(x)
    if math.isnan(v) or math.isinf(v):
        raise InputError(f"integrand is not finite at x={x!r}")
    return v


def integrate_halfline(
    f: Callable[[float], float],
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    start: float = 0.0,
    scale: float | None = None,
    end: float = INF,
    max_panels: int = 400,
) -> QuadResult:
    """Integrate ``f`` over ``[start, end)`` with geometrically growing panels.

    Panel widths double from ``scale`` (default 1).  Summation stops at
    ``end`` or once a panel adds less than ``spec.truncation`` times the
    running total while the integrand is decaying across it.
    """
    if scale is None:
        scale = 1.0
    if not scale > 0:
        raise InputError("scale must be positive")
    if end <= start:
        return QuadResult(0.0, 0.0, 0)

    total = 0.0
    error = 0.0
    a = start
    width = scale
    fa = abs(_finite(f, a)) if math.isfinite(a) else 0.0
    zero_run = 0
    for k in range(max_panels):
        b = min(a + width, end)
        try:
            v, e = _panel(f, a, b, spec)
        except QuadratureError as exc:
            raise QuadratureError(str(exc), partial=total + exc.partial, error=error + exc.error)
        total += v
        error += e
        if b >= end:
            return QuadResult(total, error, k + 1)
        fb = abs(_finite(f, b))
        if v == 0.0 and total == 0.0:
            zero_run += 1
            # integrand vanishes over an astronomically long range
            if zero_run > 64:
                return QuadResult(0.0, error, k + 1)
        elif abs(v) <= spec.truncation * abs(total) and fb <= fa:
            return QuadResult(total, error + abs(v), k + 1)
        a, fa = b, fb
        width *= 2.0
    raise QuadratureError(
        f"no truncation point found after {max_panels} panels (integral may diverge)",
        partial=total, error=error,
    )


def _width_scale(g, x, gx, direction, limit):
    d = 1e-9 * max(1.0, abs(x))
    for _ in range(200):
        y = x + direction * d
        if (direction > 0 and y >= limit) or (direction < 0 and y <= limit):
            return d
        if g(y) <= gx - 1.0:
            return d
        d *= 2.0
    return d


def log_integrate(
    log_f: Callable[[float], float],
    start: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    end: float = INF,
) -> tuple[float, float]:
    """Return ``(log I, relative error)`` for ``I = int_start^end exp(log_f)``.

    The integrand is rescaled by its maximum, so integrals of size
    ``exp(1e5)`` are fine.  ``log_f`` should be unimodal.
    """
    peak = maximize_concave(log_f, start, end)
    if peak.unbounded:
        raise QuadratureError("log-integrand is unbounded above")
    gmax = peak.value
    if gmax == -INF:
        return -INF, 0.0
    m = peak.argmax
    # log_f carries rounding noise of order eps*|gmax|; don't ask quad for more
    noise = 64.0 * sys.float_info.epsilon * max(1.0, abs(gmax))
    if noise > spec.rel_tol:
        spec = replace(spec, rel_tol=noise)

    def shifted(y):
        v = log_f(y)
        return 0.0 if v == -INF else math.exp(v - gmax)

    right = QuadResult(0.0, 0.0, 0)
    left = QuadResult(0.0, 0.0, 0)
    if end > m:
        d = _width_scale(log_f, m, gmax, +1, end)
        right = integrate_halfline(lambda t: shifted(m + t), spec, start=0.0, scale=d, end=end - m)
    if m > start:
        d = _width_scale(log_f, m, gmax, -1, start)
        left = integrate_halfline(lambda t: shifted(m - t), spec, start=0.0, scale=d, end=m - start)
    total = left.value + right.value
    if total <= 0.0:
        return -INF, 0.0
    return gmax + math.log(total), (left.error + right.error) / total


# ---------------------------------------------------------------------------
# maximization


def _checked(g):
    def h(x):
        v = g(x)
        if isinstance(v, float) and math.isnan(v):
            raise InputError(f"objective is NaN at {x!r}")
        return float(v)

    return h


def _golden(g, a, b, fa, fb, tol):
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = g(c), g(d)
    while (b - a) > tol:
        if fc > fd or (fc == fd and (fc != -INF or fa >= fb)):
            b, fb = d, fd
            d, fd = c, fc
            c = b - _INVPHI * (b - a)
            fc = g(c)
        else:
            a, fa = c, fc
            c, fc = d, fd
            d = a + _INVPHI * (b - a)
            fd = g(d)
    return (c, fc) if fc >= fd else (d, fd)


def _parabolic_polish(g, x, fx, a, b):
    # golden section stalls at ~sqrt(eps) because values are flat at the top
    for rel in (1e-4, 1e-6):
        h = rel * (b - a)
        if h <= 0 or x - h < a or x + h > b or not math.isfinite(fx):
            continue
        fm, fp = g(x - h), g(x + h)
        curv = fp - 2.0 * fx + fm
        if not (math.isfinite(fm) and math.isfinite(fp)) or curv >= 0:
            continue
        xv = x - 0.5 * h * (fp - fm) / curv
        if abs(xv - x) > h:
            continue
        fv = g(xv)
        if fv >= fx - 4e-16 * abs(fx):
            x, fx = xv, max(fv, fx)
    return x, fx


def _expand_right(g, a, fa, step, max_expand=2100):
    """Walk right from ``a`` with doubling steps until ``g`` turns down."""
    xs = [a]
    fs = [fa]
    x = a
    s = step
    for _ in range(max_expand):
        x = a + s
        # still rising this far out: treat as unbounded before the caller's formula overflows
        if not math.isfinite(x) or abs(x) > 1e150:
            return None
        fx = g(x)
        if fx == INF:
            return None
        xs.append(x)
        fs.append(fx)
        if fx < fs[-2] or (fx == fs[-2] and fx != -INF):
            lo = xs[-3] if len(xs) >= 3 else xs[0]
            return lo, x
        s *= 2.0
    return None


def maximize_concave(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    x0: float | None = None,
    rel_tol: float = 1e-10,
) -> MaxResult:
    """Maximize a unimodal function on ``[lo, hi]``; either end may be infinite.

    Open infinite ends are bracketed by doubling steps, then the bracket is
    refined by golden-section search to ``rel_tol`` times its width.  If the
    maximum sits on a finite end of the domain ``boundary`` is set; if the
    function keeps increasing toward an infinite end ``unbounded`` is set and
    ``value`` is ``inf``.
    """
    if not lo < hi:
        if lo == hi:
            gv = _checked(g)(lo)
            return MaxResult(lo, gv, boundary=True)
        raise InputError("empty domain for maximization")
    g = _checked(g)

    if math.isfinite(lo) and math.isfinite(hi):
        a, b = lo, hi
        fa, fb = g(a), g(b)
    elif math.isfinite(lo):
        fa = g(lo)
        step = abs(x0 - lo) if x0 is not None and x0 > lo else 1e-3 * max(1.0, abs(lo))
        br = _expand_right(g, lo, fa, step)
        if br is None:
            return MaxResult(INF, INF, unbounded=True)
        a, b = br
        fa, fb = g(a), g(b)
    elif math.isfinite(hi):
        res = maximize_concave(lambda t: g(-t), -hi, INF, x0=None if x0 is None else -x0,
                               rel_tol=rel_tol)
        return MaxResult(-res.argmax, res.value, res.boundary, res.unbounded)
    else:
        c = 0.0 if x0 is None else x0
        fc = g(c)
        s = 1e-3 * max(1.0, abs(c))
        if g(c + s) > fc:
            res = maximize_concave(g, c, INF, rel_tol=rel_tol)
            return MaxResult(res.argmax, res.value, False, res.unbounded)
        if g(c - s) > fc:
            res = maximize_concave(g, -INF, c, rel_tol=rel_tol)
            return MaxResult(res.argmax, res.value, False, res.unbounded)
        a, b = c - s, c + s
        fa, fb = g(a), g(b)

    tol = rel_tol * (b - a)
    x, fx = _golden(g, a, b, fa, fb, tol)
    x, fx = _parabolic_polish(g, x, fx, a, b)
    boundary = False
    if math.isfinite(lo) and x - lo <= 2 * tol:
        flo = g(lo)
        if flo >= fx:
            x, fx = lo, flo
        boundary = True
    if math.isfinite(hi) and hi - x <= 2 * tol:
        fhi = g(hi)
        if fhi >= fx:
            x, fx = hi, fhi
        boundary = True
    return MaxResult(x, fx, boundary)


# ---------------------------------------------------------------------------
# monotone root finding


def bisect_monotone(pred: Callable[[float], bool], lo: float, hi: float, *,
                    rel_tol: float = 1e-4, max_iter: int = 200) -> float:
    """Smallest ``x`` in ``[lo, hi]`` with ``pred(x)`` true, for ``pred`` false-then-true.

    Returns the feasible end of the final bracket, whose relative width is
    at most ``rel_tol``.  ``pred(hi)`` must hold.
    """
    if pred(lo):
        return lo
    for _ in range(max_iter):
        if hi - lo <= rel_tol * abs(hi):
            break
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def invert_increasing(f: Callable[[float], float], target: float, lo: float, hi: float = INF,
                      *, rel_tol: float = 1e-13) -> float:
    """Solve ``f(x) = target`` for nondecreasing ``f`` by bracketing and bisection."""
    if f(lo) >= target:
        return lo
    if not math.isfinite(hi):
        step = max(1.0, abs(lo))
        hi = lo + step
        while f(hi) < target:
            lo = hi
            step *= 2.0
            hi = lo + step
            if hi > 1e300:
                return INF
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= rel_tol * max(1.0, abs(hi)):
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# slope fitting


def fit_loglog_slope(points: Iterable[Sequence[float]]) -> SlopeFit:
    """Least-squares line through ``(ln u, ln v)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise InputError("need at least 4 (u, v) points")
    u, v = pts[:, 0], pts[:, 1]
    if np.any(u <= 0) or np.any(v <= 0) or not np.all(np.isfinite(pts)):
        raise InputError("log-log fit requires positive finite coordinates")
    du = np.diff(u)
    if not (np.all(du > 0) or np.all(du < 0)):
        raise InputError("abscissae must be strictly monotone")
    return fit_line(np.log(u), np.log(v))


def fit_line(x, y) -> SlopeFit:
    """Ordinary least squares ``y = slope*x + intercept`` with residual RMS."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return SlopeFit(float(slope), float(intercept), rms, int(len(x)))
