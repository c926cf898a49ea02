"""Numerical Young-Fenchel (Legendre) transform on one-dimensional grids."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NonConvexError
from .numerics import maximize_concave

INF = math.inf


@dataclass(frozen=True)
class SampledConvexFunction:
    """A convex function known on a grid, with an optional exact evaluator.

    ``argmax`` holds the maximizing dual argument for each grid point when
    the function was produced by :func:`conjugate` (``nan`` otherwise).  A
    value of ``inf`` marks points where the supremum is unbounded.
    """

    x: np.ndarray
    values: np.ndarray
    domain: tuple = (-INF, INF)
    rule: str = "grid"
    argmax: np.ndarray | None = None
    evaluator: Callable[[float], float] | None = field(default=None, repr=False, compare=False)

    def __call__(self, t: float) -> float:
        if self.evaluator is not None:
            return self.evaluator(t)
        return self.interpolate(t)

    def interpolate(self, t: float) -> float:
        """Piecewise-linear interpolation (preserves convexity); inf outside the grid."""
        x, v = self.x, self.values
        if t < x[0] or t > x[-1]:
            return INF
        i = int(np.searchsorted(x, t))
        if i < len(x) and x[i] == t:
            return float(v[i])
        a, b = v[i - 1], v[i]
        if not (math.isfinite(a) and math.isfinite(b)):
            return INF
        w = (t - x[i - 1]) / (x[i] - x[i - 1])
        return float((1 - w) * a + w * b)

    def to_csv(self, fh=None, header=("x", "f_star")) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for xi, vi in zip(self.x, self.values):
            w.writerow([_fmt(xi), _fmt(vi)])
        return buf.getvalue() if fh is None else ""


def _fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def _guarded(f, lo, hi):
    def g(lam):
        if lam < lo or lam > hi:
            return INF
        try:
            v = float(f(lam))
        except (ZeroDivisionError, ValueError, OverflowError):
            return INF
        return INF if math.isnan(v) else v

    return g


def sample_function(f: Callable[[float], float], domain: tuple, grid: Sequence[float],
                    rule: str = "callable") -> SampledConvexFunction:
    """Sample ``f`` on ``grid`` and keep ``f`` itself as the evaluator."""
    xs = np.asarray(grid, dtype=float)
    if np.any(np.diff(xs) <= 0):
        raise InputError("grid must be strictly ascending")
    fg = _guarded(f, *domain)
    vals = np.array([fg(float(t)) for t in xs])
    return SampledConvexFunction(xs, vals, tuple(domain), rule, None, fg)


def conjugate_value(f: Callable[[float], float], domain: tuple, x: float,
                    lower: float | None = None):
    """``sup_{lam in domain} (lam*x - f(lam))`` and its maximizer."""
    lo, hi = domain
    fg = _guarded(f, lo, hi)
    start = lo if lower is None else max(lo, lower)

    def obj(lam):
        v = fg(lam)
        return -INF if v == INF else lam * x - v

    res = maximize_concave(obj, start, hi)
    if res.unbounded:
        return INF, math.nan
    if lower is not None and start > lo and res.boundary and res.argmax == start:
        # the warm start must not cut off the true maximizer
        h = 1e-7 * max(1.0, abs(start))
        left = obj(start - h)
        if left > res.value + 1e-12 * max(1.0, abs(res.value)):
            raise NonConvexError(f"maximizer moved backwards at x={x!r}; input is not convex")
    return res.value, res.argmax


def conjugate(f: Callable[[float], float], dom: tuple, x_grid: Sequence[float]) -> SampledConvexFunction:
    """Young-Fenchel conjugate of ``f`` on ``x_grid``.

    Brackets are warm-started from the previous maximizer, which is valid
    because the maximizer of a convex function's conjugate is nondecreasing
    in ``x``.
    """
    xs = np.asarray(x_grid, dtype=float)
    if xs.ndim != 1 or len(xs) == 0:
        raise InputError("x_grid must be a nonempty 1-d grid")
    if np.any(np.diff(xs) <= 0):
        raise InputError("x_grid must be strictly ascending")
    vals = np.empty_like(xs)
    arg = np.full_like(xs, math.nan)
    prev = None
    unbounded = False
    for i, x in enumerate(xs):
        if unbounded:
            vals[i] = INF
            continue
        v, a = conjugate_value(f, dom, float(x), prev)
        vals[i] = v
        if v == INF:
            unbounded = True
            continue
        arg[i] = a
        prev = a
    _check_supporting(f, dom, xs, vals, arg)
    _check_convex(xs, vals)
    lo, hi = dom

    def evaluator(t):
        return conjugate_value(f, (lo, hi), t)[0]

    return SampledConvexFunction(xs, vals, (-INF, INF), "numeric", arg, evaluator)


def _check_supporting(f, dom, xs, vals, arg, tol=1e-9):
    # every value must dominate lam*x - f(lam) over the explored range of lam; a
    # violation means the search stopped at a local maximum (nonconvex input)
    ok = np.isfinite(vals) & np.isfinite(arg)
    if ok.sum() < 2:
        return
    a = arg[ok]
    w = 4.0 * max(1.0, a.max() - a.min())
    lo, hi = max(dom[0], a.min() - w), min(dom[1], a.max() + w)
    lams = np.unique(np.concatenate([a, np.linspace(lo, hi, 513)]))
    fg = _guarded(f, *dom)
    fl = np.array([fg(float(t)) for t in lams])
    keep = np.isfinite(fl)
    lams, fl = lams[keep], fl[keep]
    cand = np.max(xs[ok][:, None] * lams[None, :] - fl[None, :], axis=1)
    v = vals[ok]
    bad = np.nonzero(cand > v + tol * np.maximum(1.0, np.abs(v)))[0]
    if len(bad):
        raise NonConvexError(f"local maximum at x={xs[ok][bad[0]]:.6g}; input is not convex")


def _check_convex(xs, vals, tol=1e-9):
    ok = np.isfinite(vals)
    x, v = xs[ok], vals[ok]
    if len(x) < 3:
        return
    slopes = np.diff(v) / np.diff(x)
    scale = np.maximum(1.0, np.abs(slopes[:-1]))
    if np.any(np.diff(slopes) < -tol * scale * 1e3):
        i = int(np.argmin(np.diff(slopes)))
        raise NonConvexError(f"conjugate values fail convexity near x={x[i + 1]:.6g}")


def second_differences_ok(f: SampledConvexFunction, tol: float = 1e-9) -> bool:
    """Discrete convexity of the sampled values (finite points only)."""
    ok = np.isfinite(f.values)
    x, v = f.x[ok], f.values[ok]
    if len(x) < 3:
        return True
    slopes = np.diff(v) / np.diff(x)
    return bool(np.all(np.diff(slopes) >= -tol * np.maximum(1.0, np.abs(slopes[:-1]))))


def fenchel_moreau_check(f: SampledConvexFunction) -> float:
    """``max |f** - f|`` over grid points interior to ``f.domain``.

    Both transforms are evaluated by nested maximization through ``f``'s
    evaluator, so the check does not depend on any interpolation.
    """
    if f.evaluator is None:
        raise InputError("fenchel_moreau_check needs a function with an evaluator")
    lo, hi = f.domain
    fstar = lambda x: conjugate_value(f.evaluator, (lo, hi), x)[0]  # noqa: E731
    worst = 0.0
    for lam, val in zip(f.x, f.values):
        lam = float(lam)
        if not (lo < lam < hi) or not math.isfinite(val):
            continue

        def obj(x, lam=lam):
            s = fstar(x)
            return -INF if s == INF else lam * x - s

        res = maximize_concave(obj, -INF, INF)
        worst = max(worst, abs(res.value - float(val)))
    return worst


@dataclass(frozen=True)
class Derivative:
    value: float
    one_sided: bool = False


def conjugate_derivative(f_star: SampledConvexFunction, x: float) -> Derivative:
    """Finite-difference slope of a sampled conjugate at ``x``.

    Uses the second-order three-point formula on the (possibly nonuniform)
    grid; between nodes the two neighbouring node slopes are interpolated.
    At the grid edges a one-sided difference is returned with a flag.
    """
    xs, v = f_star.x, f_star.values
    n = len(xs)
    if n < 2:
        raise InputError("need at least two grid points")
    if x < xs[0] or x > xs[-1]:
        raise InputError(f"x={x!r} outside the sampled grid")

    def node(i):
        if i == 0:
            return (v[1] - v[0]) / (xs[1] - xs[0]), True
        if i == n - 1:
            return (v[-1] - v[-2]) / (xs[-1] - xs[-2]), True
        hm, hp = xs[i] - xs[i - 1], xs[i + 1] - xs[i]
        d = (hm * hm * v[i + 1] - hp * hp * v[i - 1] + (hp * hp - hm * hm) * v[i]) / (hm * hp * (hm + hp))
        return d, False

    i = int(np.searchsorted(xs, x))
    if i < n and xs[i] == x:
        d, flag = node(i)
        return Derivative(float(d), flag)
    d0, f0 = node(i - 1)
    d1, f1 = node(i)
    w = (x - xs[i - 1]) / (xs[i] - xs[i - 1])
    return Derivative(float((1 - w) * d0 + w * d1), f0 or f1)


# ---------------------------------------------------------------------------
# closed-form pairs used as oracles and for fast evaluation


def quadratic_conjugate(x: float) -> float:
    return 0.5 * x * x


def holder_conjugate(x: float, m: float) -> float:
    """Conjugate of ``|lam|^m / m``: ``|x|^q / q`` with ``1/m + 1/q = 1``."""
    q = m / (m - 1.0)
    return abs(x) ** q / q


def log_pole_conjugate(x: float, b: float, gamma: float) -> float:
    """Conjugate of ``gamma*ln(b/(b-|lam|))`` on ``(-b, b)`` (no extension near 0)."""
    x = abs(x)
    if x <= gamma / b:
        return 0.0
    return b * x - gamma - gamma * math.log(b * x / gamma)


def log_pole_argmax(x: float, b: float, gamma: float) -> float:
    x = abs(x)
    return max(0.0, b - gamma / x) if x > 0 else 0.0
