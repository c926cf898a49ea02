"""Moments, moment generating functions and the Cramer check, all from a tail.

With ``x_u`` the flat end of the tail (everything below it is an atom),

    E|xi|^p         = x_u^p + p * int_{x_u}^inf x^(p-1) T(x) dx
    E cosh(lam|xi|) = cosh(lam x_u) + lam * int_{x_u}^inf sinh(lam x) T(x) dx

Both integrals are evaluated in log-space so that heavy integrands near a
critical exponent do not overflow.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate as _integrate

from .errors import DivergenceError, InputError, QuadratureError
from .numerics import DEFAULT_QUADRATURE, QuadratureSpec, log_add, log_cosh, log_integrate, log_sinh
from .tails import TailFunction

INF = math.inf
NEAR_CRITICAL = 1e-3


class Divergent(float):
    """An infinite value that remembers the critical parameter, if known."""

    critical: float | None

    def __new__(cls, critical=None):
        obj = super().__new__(cls, INF)
        obj.critical = critical
        return obj

    def __repr__(self):
        return f"Divergent(critical={self.critical!r})"


# ---------------------------------------------------------------------------
# moments


def log_moment(tail: TailFunction, p: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> tuple[float, float]:
    """``(ln |xi|_p, relative error of E|xi|^p)``."""
    if not p > 0 or not math.isfinite(p):
        raise InputError(f"moment order must be positive and finite, got {p!r}")
    closed = tail.impl.moment_log(p)
    if closed is not None:
        return float(closed), 0.0
    crit = tail.critical_p
    if p >= crit:
        raise DivergenceError(
            f"E|xi|^{p:g} diverges for family '{tail.family}' (critical exponent {crit:g})", critical=crit)
    if crit - p < NEAR_CRITICAL:
        raise InputError(f"p={p!r} is within {NEAR_CRITICAL:g} of the critical exponent {crit:g}; refused")

    xu = tail.flat_end
    end = tail.support_end
    log_total = p * math.log(xu) if xu > 0 else -INF
    abs_err = 0.0
    log_tail_part, tail_rel = -INF, 0.0

    # [x_u, 1] in x-space: the integrand is bounded there
    if xu < 1.0 and end > xu:
        b = min(1.0, end)
        val, e = _integrate.quad(lambda x: p * x ** (p - 1.0) * math.exp(tail.log_tail(x)), xu, b,
                                 epsabs=0.0, epsrel=spec.rel_tol, limit=spec.max_subdivisions)
        if val > 0:
            log_total = log_add(log_total, math.log(val))
            abs_err += e
    start = max(xu, 1.0)
    if end > start:
        lp = math.log(p)

        def g(y):
            return lp + p * y + tail.log_tail_log(y)

        y_end = math.log(end) if math.isfinite(end) else INF
        try:
            log_tail_part, tail_rel = log_integrate(g, math.log(start), spec, end=y_end)
        except QuadratureError as exc:
            raise DivergenceError(f"moment integral for p={p:g} did not converge ({exc})") from exc
        log_total = log_add(log_total, log_tail_part)
    if log_total == -INF:
        return -INF, 0.0
    rel = abs_err * math.exp(-log_total) + tail_rel * math.exp(log_tail_part - log_total)
    return log_total / p, rel


def moment(tail: TailFunction, p: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``|xi|_p = (E|xi|^p)^(1/p)``."""
    lm, _ = log_moment(tail, p, spec)
    return math.exp(lm)


@dataclass(frozen=True)
class MomentCurve:
    """``p -> |xi|_p`` on an ascending grid, with absolute error estimates."""

    p: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    tail: dict | None = None

    def __post_init__(self):
        if len(self.p) != len(self.values) or len(self.p) != len(self.errors):
            raise InputError("moment curve arrays must have equal length")
        if len(self.p) and np.any(np.diff(self.p) <= 0):
            raise InputError("moment curve p-grid must be strictly ascending")
        if np.any(np.asarray(self.values) < 0):
            raise InputError("moment values must be nonnegative")

    def scaled(self, c: float) -> "MomentCurve":
        """Curve of ``c * xi``."""
        return MomentCurve(self.p, self.values * c, self.errors * c, None)

    def restricted(self, mask) -> "MomentCurve":
        return MomentCurve(self.p[mask], self.values[mask], self.errors[mask], self.tail)

    def lyapunov_ok(self, slack: float = 0.0) -> bool:
        v, e = self.values, self.errors
        return bool(np.all(v[1:] + e[1:] + e[:-1] + slack * v[:-1] >= v[:-1]))

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "moment", "err"])
        for p, v, e in zip(self.p, self.values, self.errors):
            w.writerow([f"{p:.12g}", f"{v:.12g}", f"{e:.12g}"])
        return buf.getvalue() if fh is None else ""


def natural_psi(tail: TailFunction, p_grid: Sequence[float],
                spec: QuadratureSpec = DEFAULT_QUADRATURE) -> MomentCurve:
    """The moment curve of ``tail`` on ``p_grid`` (its natural generating function)."""
    ps = np.asarray(p_grid, dtype=float)
    if ps.ndim != 1 or len(ps) == 0:
        raise InputError("p_grid must be a nonempty 1-d grid")
    vals = np.empty_like(ps)
    errs = np.empty_like(ps)
    for i, p in enumerate(ps):
        lm, rel = log_moment(tail, float(p), spec)
        if lm > 709.0:
            raise InputError(f"|xi|_p at p={p:g} exceeds the float range (log value {lm:.6g}); "
                             "use log_moment for such orders")
        vals[i] = math.exp(lm)
        # d|xi|_p = |xi|_p * rel / p
        errs[i] = vals[i] * rel / p + 4 * np.finfo(float).eps * vals[i]
    return MomentCurve(ps, vals, errs, tail.to_dict())


# ---------------------------------------------------------------------------
# moment generating function of the symmetrized variable


def log_mgf(tail: TailFunction, lam: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``ln E cosh(lam |zeta|)``; a :class:`Divergent` infinity past the critical point."""
    lam = abs(float(lam))
    if math.isnan(lam):
        raise InputError("lambda is NaN")
    if lam == 0.0:
        return 0.0
    crit = tail.critical_lambda
    if lam >= crit:
        return Divergent(crit)
    closed = tail.impl.log_mgf(lam)
    if closed is not None:
        return float(closed)
    xu = tail.flat_end
    end = tail.support_end
    base = log_cosh(lam * xu)
    if not end > xu:
        return base
    ll = math.log(lam)

    def g(x):
        lt = tail.log_tail(x)
        return -INF if lt == -INF else ll + log_sinh(lam * x) + lt

    try:
        lI, _ = log_integrate(g, xu, spec, end=end)
    except QuadratureError:
        return Divergent(None)
    if lI == INF:
        return Divergent(None)
    return log_add(base, lI)


def mgf(tail: TailFunction, lam: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    v = log_mgf(tail, lam, spec)
    if isinstance(v, Divergent):
        return v
    return math.exp(v) if v < 700 else INF


def variance(tail: TailFunction) -> float:
    """Second moment of the symmetrized variable (its variance)."""
    return math.exp(2.0 * log_moment(tail, 2.0)[0])


# ---------------------------------------------------------------------------
# Cramer condition


@dataclass(frozen=True)
class CramerResult:
    mu: float | None
    witness: float | None = None

    @property
    def passed(self) -> bool:
        return self.mu is not None

    def to_dict(self):
        return {"passed": self.passed, "mu": self.mu, "witness": self.witness}


def _cramer_grid(tail: TailFunction, points: int) -> np.ndarray:
    y_max = tail.upper_cut(-700.0)
    scale = max(1.0, tail.flat_end)
    parts = [np.linspace(0.0, min(y_max, 50.0 * scale), points),
             np.geomspace(1e-6 * scale, y_max, points)]
    if math.isinf(tail.support_end):
        # subexponential tails break the bound only far out, where T itself underflows
        parts.append(np.geomspace(max(y_max, 1.0), 1e300, points // 4))
        y_max = 1e300
    for b in (tail.x0, tail.flat_end, tail.support_end):
        if 0 < b <= y_max:
            parts.append(np.array([np.nextafter(b, 0.0), b, np.nextafter(b, INF)]))
    ys = np.unique(np.concatenate(parts))
    return ys[(ys >= 0) & (ys <= y_max)]


def _log_tail_at(tail: TailFunction, y: float, bilateral: bool) -> float:
    try:
        lt = tail.log_tail_log(math.log(y)) if y > 1.0 else tail.log_tail(y)
    except OverflowError:
        return -INF
    return lt - math.log(2.0) if bilateral else lt


def cramer_check(tail: TailFunction, mu_grid: Sequence[float], *, points: int = 4000,
                 bilateral: bool = True) -> CramerResult:
    """Largest ``mu`` in ``mu_grid`` with ``T(y) <= exp(-mu y)`` on a dense grid.

    By default the tail of the symmetrized variable (each side ``T/2``) is
    tested, matching the two-sided definition of the tail function.  The grid
    runs far past the point where ``T`` underflows, since the comparison is
    made in log-space.
    """
    mus = sorted(float(m) for m in mu_grid)
    if not mus:
        raise InputError("mu_grid must be nonempty")
    if any(not m > 0 for m in mus):
        raise InputError("mu values must be positive")
    ys = _cramer_grid(tail, points)
    lt = np.array([_log_tail_at(tail, float(y), bilateral) for y in ys])
    best = None
    witness = None
    for mu in mus:
        with np.errstate(invalid="ignore"):
            excess = lt + mu * ys
        bad = np.nonzero(excess > 1e-12 * np.maximum(1.0, mu * ys))[0]
        if len(bad):
            if witness is None:
                witness = float(ys[bad[0]])
            break
        best = mu
    return CramerResult(best, None if best is not None else witness)
