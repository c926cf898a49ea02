"""Tail functions and the generalized Lorentz quasi-norm.

A :class:`TailFunction` describes a nonnegative random variable ``|zeta|``
through ``T(x) = P(|zeta| > x)``.  Parametric families are clamped to 1
below their lower cut ``x0``, which places an atom at ``x0`` when the raw
formula is below 1 there.  Signed, centered variables are obtained by
attaching an independent fair sign, so each one-sided tail is ``T/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.special import log_ndtr

from .errors import ConstructionError, InputError

E = math.e
INF = math.inf
LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# family implementations


class _Family:
    """Raw formula plus the analytic facts the numerics can use."""

    x0_at_least_e = False
    critical_p = INF
    critical_lambda = INF
    support_end = INF

    def __init__(self, params):
        self.params = dict(params)

    def log_raw(self, x: float) -> float:
        raise NotImplementedError

    def monotone_from(self) -> float:
        return 0.0

    def log_raw_log(self, y: float) -> float:
        """``log_raw(exp(y))``, also valid where ``exp(y)`` overflows."""
        if y < 700.0:
            return self.log_raw(math.exp(y))
        return -INF

    def log_mgf(self, lam: float):
        """Closed-form log E cosh(lam |zeta|) if known, else None."""
        return None

    def moment_log(self, p: float):
        return None


def _req(params, name, cond, what):
    if name not in params:
        raise InputError(f"missing parameter '{name}'")
    try:
        v = float(params[name])
    except (TypeError, ValueError):
        raise InputError(f"parameter '{name}' must be a number") from None
    if not cond(v):
        raise InputError(f"parameter '{name}'={v!r} outside admissible range ({what})")
    return v


class PowerLog(_Family):
    x0_at_least_e = True
    critical_lambda = 0.0

    def __init__(self, params):
        super().__init__(params)
        self.b = _req(params, "b", lambda v: v > 1, "b > 1")
        self.gamma = _req(params, "gamma", lambda v: v > 0, "gamma > 0")
        self.critical_p = self.b

    def log_raw(self, x):
        if x <= 1.0:
            return 0.0
        return self.log_raw_log(math.log(x))

    def log_raw_log(self, y):
        if y <= 0.0:
            return 0.0
        return -self.b * y + self.gamma * math.log(y)

    def monotone_from(self):
        return math.exp(self.gamma / self.b)


class ExpPoly(_Family):
    x0_at_least_e = True

    def __init__(self, params):
        super().__init__(params)
        self.b = _req(params, "b", lambda v: v > 0, "b > 0")
        self.gamma = _req(params, "gamma", lambda v: v > 0, "gamma > 0")
        self.logC = math.log(_req(params, "C", lambda v: v > 0, "C > 0")) if "C" in params else None
        self.critical_lambda = self.b

    def log_raw(self, x):
        if x <= 0:
            return INF
        return self.logC + self.gamma * math.log(x) - self.b * x

    def monotone_from(self):
        return self.gamma / self.b


class Weibull(_Family):
    def __init__(self, params):
        super().__init__(params)
        self.C = _req(params, "C", lambda v: v > 0, "C > 0")
        self.m = _req(params, "m", lambda v: v > 0, "m > 0")
        if self.m > 1:
            self.critical_lambda = INF
        elif self.m == 1:
            self.critical_lambda = self.C
        else:
            self.critical_lambda = 0.0

    def log_raw(self, x):
        return -self.C * x ** self.m if x > 0 else 0.0

    def moment_log(self, p):
        return (math.lgamma(1.0 + p / self.m) - (p / self.m) * math.log(self.C)) / p


class LogPower(_Family):
    critical_lambda = 0.0

    def __init__(self, params):
        super().__init__(params)
        self.K = _req(params, "K", lambda v: v > 0, "K > 0")
        self.beta = _req(params, "beta", lambda v: v > 0, "beta > 0")
        self.alpha = 1.0 + 1.0 / self.beta

    def log_raw(self, x):
        return -self.K * math.log1p(x) ** self.alpha if x > 0 else 0.0

    def log_raw_log(self, y):
        if y < 30.0:
            return self.log_raw(math.exp(y))
        return -self.K * (y + math.exp(-y)) ** self.alpha


class SubGaussian(_Family):
    def log_raw(self, x):
        return -0.5 * x * x


class PurePower(_Family):
    critical_lambda = 0.0

    def __init__(self, params):
        super().__init__(params)
        self.r = _req(params, "r", lambda v: v > 0, "r > 0")
        self.critical_p = self.r

    def log_raw(self, x):
        return -self.r * math.log(x) if x > 1 else 0.0

    def log_raw_log(self, y):
        return -self.r * y if y > 0 else 0.0


class GenWeibullLog(_Family):
    def __init__(self, params):
        super().__init__(params)
        self.m = _req(params, "m", lambda v: v > 1, "m > 1")
        self.a = _req(params, "a", lambda v: v >= 0, "a >= 0")
        self.C = float(params.get("C", 1.0))
        if not self.C > 0:
            raise InputError("parameter 'C' must be positive")
        self.q = self.m / (self.m - 1.0)

    def log_raw(self, x):
        if x <= 0:
            return 0.0
        q = self.q
        ell = math.log(E + x ** (q - 1.0))
        return -(self.C / q) * x ** q * ell ** (-self.a * (q - 1.0))

    def monotone_from(self):
        # with u = x^(q-1) the raw tail decreases iff a (q-1)^2 u / ((e+u) ln(e+u)) < q;
        # the left side vanishes at both ends of u, so only a bounded window can fail
        q, a = self.q, self.a
        if a == 0.0:
            return 0.0
        us = np.geomspace(1e-8, 1e12, 4000)
        bad = a * (q - 1.0) ** 2 * us / ((E + us) * np.log(E + us)) >= q
        if not bad.any():
            return 0.0
        return float(us[np.nonzero(bad)[0][-1] + 1] ** (1.0 / (q - 1.0)))


class Constant(_Family):
    """Survival of the constant ``c``: the symmetrized variable is ``+-c``."""

    def __init__(self, params):
        super().__init__(params)
        self.c = _req(params, "c", lambda v: v > 0, "c > 0")
        self.support_end = self.c

    def log_raw(self, x):
        return 0.0 if x < self.c else -INF

    def log_mgf(self, lam):
        z = abs(lam) * self.c
        return z + math.log1p(math.exp(-2.0 * z)) - LOG2

    def moment_log(self, p):
        return math.log(self.c)


class Gaussian(_Family):
    """``|G|`` for ``G ~ N(0, sigma^2)``; symmetrization returns ``G`` itself."""

    def __init__(self, params):
        super().__init__(params)
        self.sigma = _req(params, "sigma", lambda v: v > 0, "sigma > 0") if "sigma" in params else 1.0

    def log_raw(self, x):
        return LOG2 + float(log_ndtr(-x / self.sigma)) if x > 0 else 0.0

    def log_mgf(self, lam):
        return 0.5 * (lam * self.sigma) ** 2

    def moment_log(self, p):
        s = self.sigma
        return (p * math.log(s) + 0.5 * p * LOG2 + math.lgamma(0.5 * (p + 1)) - 0.5 * math.log(math.pi)) / p


class Table(_Family):
    """Piecewise-linear tail through sampled ``(x, T)``; zero beyond the last abscissa."""

    def __init__(self, params):
        super().__init__(params)
        try:
            xs = np.asarray(params["x"], dtype=float)
            ts = np.asarray(params["T"], dtype=float)
        except (KeyError, TypeError, ValueError):
            raise InputError("table tail needs numeric lists 'x' and 'T'") from None
        if xs.ndim != 1 or xs.shape != ts.shape or len(xs) < 2:
            raise InputError("table 'x' and 'T' must be equal-length lists of >= 2 values")
        if np.any(np.diff(xs) <= 0) or xs[0] < 0:
            raise InputError("table 'x' must be nonnegative and strictly ascending")
        if np.any(np.diff(ts) > 0) or np.any(ts < 0) or np.any(ts > 1):
            raise InputError("table 'T' must be nonincreasing with values in [0, 1]")
        self.xs, self.ts = xs, ts
        nz = np.nonzero(ts == 0)[0]
        self.support_end = float(xs[nz[0]]) if len(nz) else float(xs[-1])

    def log_raw(self, x):
        if x <= self.xs[0]:
            return 0.0
        if x >= self.support_end:
            return -INF
        t = float(np.interp(x, self.xs, self.ts))
        return math.log(t) if t > 0 else -INF


class Derived(_Family):
    """A tail computed by another module (tail bounds, rescalings)."""

    def __init__(self, params, log_raw, *, critical_p=INF, critical_lambda=INF,
                 support_end=INF, log_mgf=None, moment_log=None, log_raw_log=None):
        super().__init__(params)
        self._log_raw = log_raw
        self._log_raw_log = log_raw_log
        self.critical_p = critical_p
        self.critical_lambda = critical_lambda
        self.support_end = support_end
        self._log_mgf = log_mgf
        self._moment_log = moment_log

    def log_raw(self, x):
        return self._log_raw(x)

    def log_raw_log(self, y):
        if self._log_raw_log is not None:
            return self._log_raw_log(y)
        return super().log_raw_log(y)

    def log_mgf(self, lam):
        return None if self._log_mgf is None else self._log_mgf(lam)

    def moment_log(self, p):
        return None if self._moment_log is None else self._moment_log(p)


_FAMILIES: dict[str, Callable[[Mapping], _Family]] = {
    "power-log": PowerLog,
    "exp-poly": ExpPoly,
    "weibull": Weibull,
    "log-power": LogPower,
    "subgaussian": SubGaussian,
    "pure-power": PurePower,
    "gen-weibull-log": GenWeibullLog,
    "constant": Constant,
    "gaussian": Gaussian,
    "table": Table,
}

# factories for derived families; filled in by the modules that own them
_DERIVED: dict[str, Callable[[Mapping], "TailFunction"]] = {}


def register_derived(tag: str, factory: Callable[[Mapping], "TailFunction"]) -> None:
    _DERIVED[tag] = factory


FAMILY_TAGS = tuple(_FAMILIES)


# ---------------------------------------------------------------------------
# the tail function


@dataclass(frozen=True)
class TailFunction:
    """Nonincreasing survival function, clamped to 1 below ``x0``."""

    family: str
    params: Mapping[str, Any]
    x0: float = 0.0
    impl: _Family = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.impl is None:
            if self.family not in _FAMILIES:
                raise InputError(f"unknown tail family '{self.family}'")
            object.__setattr__(self, "impl", _FAMILIES[self.family](self.params))
        object.__setattr__(self, "_flat_end", self._find_flat_end())

    # -- evaluation

    def log_tail(self, x: float) -> float:
        if x < self.x0:
            return 0.0
        v = self.impl.log_raw(x)
        return 0.0 if v > 0.0 else v

    def __call__(self, x):
        if np.ndim(x) == 0:
            return math.exp(self.log_tail(float(x)))
        return np.exp(np.array([self.log_tail(float(t)) for t in np.ravel(x)])).reshape(np.shape(x))

    def log_tail_log(self, y: float) -> float:
        """``log_tail(exp(y))`` without overflowing for huge abscissae."""
        if y < 700.0:
            return self.log_tail(math.exp(y))
        v = self.impl.log_raw_log(y)
        return 0.0 if v > 0.0 else v

    def log_bilateral(self, x: float) -> float:
        """Log of each one-sided tail of the symmetrized variable."""
        return self.log_tail(x) - LOG2 if x > 0 else 0.0

    # -- facts used by the integrators

    @property
    def flat_end(self) -> float:
        """``inf{x : T(x) < 1}``; the mass below it sits at this point."""
        return self._flat_end

    @property
    def critical_p(self) -> float:
        return self.impl.critical_p

    @property
    def critical_lambda(self) -> float:
        return self.impl.critical_lambda

    @property
    def support_end(self) -> float:
        return self.impl.support_end

    def _find_flat_end(self):
        x0 = self.x0
        if self.impl.log_raw(x0) < 0.0:
            return x0
        probe = x0 + 1e-12 * max(1.0, x0)
        if self.impl.log_raw(probe) < 0.0:
            return x0
        hi = max(1.0, 2.0 * x0)
        while self.impl.log_raw(hi) >= 0.0:
            hi *= 2.0
            if hi > 1e300:
                raise ConstructionError("tail never drops below 1")
        lo = x0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if self.impl.log_raw(mid) < 0.0:
                hi = mid
            else:
                lo = mid
        return hi

    def upper_cut(self, log_threshold: float) -> float:
        """An abscissa beyond which ``log T <= log_threshold``."""
        if math.isfinite(self.support_end):
            return self.support_end
        x = max(1.0, 2.0 * self.flat_end)
        lo = None
        while self.log_tail(x) > log_threshold:
            lo = x
            x *= 2.0
            if x > 1e300:
                return x
        if lo is None:
            return x
        # narrow the doubling bracket so nearby thresholds give distinct cuts
        hi = x
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            if self.log_tail(mid) > log_threshold:
                lo = mid
            else:
                hi = mid
        return hi

    # -- derived tails

    def scaled(self, c: float) -> "TailFunction":
        """``min(1, c T(x))``."""
        if not c > 0:
            raise InputError("scale factor must be positive")
        base = self
        lc = math.log(c)
        impl = Derived({"base": self.to_dict(), "c": c},
                       lambda x: lc + base.log_tail(x),
                       critical_p=self.critical_p, critical_lambda=self.critical_lambda,
                       support_end=self.support_end,
                       log_raw_log=lambda y: lc + base.log_tail_log(y))
        return TailFunction("scaled", impl.params, 0.0, impl)

    def dilated(self, c: float) -> "TailFunction":
        """Tail of ``c |zeta|``, i.e. ``T(x / c)``."""
        if not c > 0:
            raise InputError("dilation factor must be positive")
        base = self
        mgf = None
        if self.impl.log_mgf(1.0) is not None:
            def mgf(lam):
                return base.impl.log_mgf(c * lam)
        ml = None
        if self.impl.moment_log(2.0) is not None:
            def ml(p):
                return math.log(c) + base.impl.moment_log(p)
        impl = Derived({"base": self.to_dict(), "c": c},
                       lambda x: base.log_tail(x / c),
                       critical_p=self.critical_p, critical_lambda=self.critical_lambda / c,
                       support_end=self.support_end * c, log_mgf=mgf, moment_log=ml,
                       log_raw_log=lambda y: base.log_tail_log(y - math.log(c)))
        return TailFunction("dilated", impl.params, 0.0, impl)

    # -- serialization

    def to_dict(self) -> dict:
        return {"family": self.family, "params": _plain(self.params), "x0": self.x0}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TailFunction":
        if not isinstance(d, Mapping) or "family" not in d:
            raise InputError("invalid family descriptor: expected an object with 'family'")
        family = d["family"]
        params = d.get("params", {}) or {}
        if not isinstance(params, Mapping):
            raise InputError("invalid family descriptor: 'params' must be an object")
        if family == "scaled":
            return from_descriptor(params["base"]).scaled(float(params["c"]))
        if family == "dilated":
            return from_descriptor(params["base"]).dilated(float(params["c"]))
        if family in _DERIVED:
            return _DERIVED[family](params)
        x0 = d.get("x0")
        return make_tail(family, params, x0=None if x0 is None else float(x0))


def from_descriptor(d: Mapping) -> TailFunction:
    return TailFunction.from_dict(d)


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _check_monotone(tail: TailFunction):
    start = max(tail.x0, 1e-9)
    end = tail.support_end if math.isfinite(tail.support_end) else max(1e6, 1e3 * start)
    xs = np.concatenate([np.linspace(0.0, min(end, 50.0), 2000), np.geomspace(start, end, 8000)])
    xs = np.unique(xs)
    vals = np.array([tail.log_tail(float(x)) for x in xs])
    finite = np.isfinite(vals)
    v = vals[finite]
    bad = np.nonzero(np.diff(v) > 1e-12 * np.maximum(1.0, np.abs(v[:-1])))[0]
    if len(bad):
        x_bad = xs[finite][bad[0]]
        raise ConstructionError(f"tail '{tail.family}' is not nonincreasing near x={x_bad:.6g}")


def make_tail(family: str, params: Mapping | None = None, *, x0: float | None = None) -> TailFunction:
    """Build a validated tail from a family tag and parameters.

    Families defined only for large arguments (``power-log``, ``exp-poly``)
    get ``x0`` at the first point ``>= e`` where the raw formula is
    nonincreasing and at most 1.  For ``exp-poly`` an omitted ``C`` is set so
    that ``T(x0) = 1``.
    """
    if family not in _FAMILIES:
        raise InputError(f"unknown tail family '{family}'")
    params = dict(params or {})
    if x0 is not None and not x0 >= 0:
        raise InputError("x0 must be nonnegative")
    impl = _FAMILIES[family](params)
    if family == "exp-poly" and impl.logC is None:
        if x0 is None:
            x0 = max(E, impl.monotone_from())
        C = math.exp(impl.b * x0 - impl.gamma * math.log(x0))
        params["C"] = C
        impl = ExpPoly(params)
    if x0 is None:
        x0 = _auto_x0(impl) if impl.x0_at_least_e else impl.monotone_from()
    tail = TailFunction(family, params, float(x0), impl)
    _check_monotone(tail)
    return tail


def _auto_x0(impl: _Family) -> float:
    x = max(E, impl.monotone_from())
    if impl.log_raw(x) <= 0.0:
        return x
    hi = 2.0 * x
    while impl.log_raw(hi) > 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise ConstructionError("raw tail never drops below 1")
    lo = x
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if impl.log_raw(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def derived_tail(tag: str, params: Mapping, log_tail: Callable[[float], float], **facts) -> TailFunction:
    """Wrap a computed log-tail (e.g. a bound) as a serializable :class:`TailFunction`."""
    impl = Derived(dict(params), log_tail, **facts)
    return TailFunction(tag, impl.params, 0.0, impl)


# ---------------------------------------------------------------------------
# norm estimates


@dataclass
class NormEstimate:
    """A norm value with the supremum trace over refinement levels.

    ``value`` is always the last trace entry.  A diverged estimate keeps the
    last finite supremum there and sets ``diverged``; ``inf`` appears only
    when the quantity is infinite outright.
    """

    value: float
    trace: list
    diverged: bool
    method: str
    details: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return not self.diverged and math.isfinite(self.value)

    def to_dict(self) -> dict:
        out = {"method": self.method, "value": self.value, "trace": list(self.trace),
               "diverged": self.diverged}
        if self.details:
            out["details"] = self.details
        return out


def growth_diverges(trace, factor: float) -> bool:
    """True when every refinement multiplies the trace by more than ``factor``."""
    if len(trace) < 2:
        return False
    for a, b in zip(trace, trace[1:]):
        if not math.isfinite(b):
            continue
        if not (a > 0 and b > factor * a):
            return False
    return True


# ---------------------------------------------------------------------------
# Lorentz quasi-norm


def _lorentz_grid(zeta: TailFunction, S: TailFunction, x_max: float, n: int) -> np.ndarray:
    scale = max(1.0, zeta.flat_end, S.flat_end)
    lin = np.linspace(0.0, min(x_max, 10.0 * scale), n // 2)
    geo = np.geomspace(1e-3 * scale, x_max, n - n // 2)
    pts = [lin, geo]
    for t in (zeta, S):
        for b in (t.x0, t.flat_end, t.support_end):
            if 0 < b < x_max:
                pts.append(np.array([np.nextafter(b, 0.0), b, np.nextafter(b, INF)]))
    xs = np.unique(np.concatenate(pts))
    return xs[(xs >= 0) & (xs <= x_max)]


def _lorentz_level(zeta, S, xs, bilateral):
    best = -INF
    best_i = -1
    vanished = None
    for i, x in enumerate(xs):
        x = float(x)
        lt = zeta.log_bilateral(x) if bilateral else zeta.log_tail(x)
        if lt == -INF:
            continue
        ls = S.log_tail(x)
        if ls == -INF:
            vanished = x
            break
        r = lt - ls
        if r > best:
            best, best_i = r, i
    return best, best_i, vanished


def _exp(v):
    return math.exp(v) if v < 709.0 else INF


def _edge_ratio(zeta, S, x, bilateral):
    lt = zeta.log_bilateral(x) if bilateral else zeta.log_tail(x)
    ls = S.log_tail(x)
    if lt == -INF:
        return 0.0
    return INF if ls == -INF else _exp(lt - ls)


def lorentz_quasinorm(
    zeta_tail: TailFunction,
    S: TailFunction,
    x_grid=None,
    *,
    levels: int = 3,
    points: int = 400,
    bilateral: bool = False,
) -> NormEstimate:
    """``sup_x T_zeta(x) / S(x)`` with a refinement trace.

    Without an explicit grid, level ``k`` extends the range until both tails
    fall below ``1e-12**(k+1)`` and doubles the point count.  The estimate is
    flagged as diverged when ``S`` vanishes where ``T_zeta`` does not, or when
    the ratio at the far edge of the grid grows with every level and the
    finest supremum sits on that edge.  With
    ``bilateral`` the one-sided tail ``T/2`` of the symmetrized variable is
    compared instead.
    """
    if x_grid is not None:
        grids = [np.unique(np.asarray(x_grid, dtype=float))]
    else:
        grids = []
        for k in range(levels):
            thr = math.log(1e-12) * (k + 1)
            x_max = max(zeta_tail.upper_cut(thr), S.upper_cut(thr))
            grids.append(_lorentz_grid(zeta_tail, S, x_max, points * 2 ** k))
    trace = []
    edges = []
    last_at_edge = False
    for xs in grids:
        best, i, vanished = _lorentz_level(zeta_tail, S, xs, bilateral)
        if vanished is not None:
            return NormEstimate(INF, trace + [INF], True, "lorentz",
                                {"reason": "reference tail vanishes", "x": vanished})
        # supremum over every grid seen so far
        trace.append(max([_exp(best) if best > -INF else 0.0] + trace[-1:]))
        edges.append(_edge_ratio(zeta_tail, S, float(xs[-1]), bilateral))
        last_at_edge = i == len(xs) - 1
    diverged = trace[-1] == INF or (len(trace) > 1 and last_at_edge
                                    and all(b > 1.01 * a for a, b in zip(edges, edges[1:])))
    return NormEstimate(trace[-1], trace, diverged, "lorentz")
