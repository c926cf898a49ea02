"""Young-Orlicz functions phi, the B(phi) norm and the Chernoff-type machinery around it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .conjugate import SampledConvexFunction, conjugate_value, second_differences_ok
from .errors import InputError, NonConvexError, NotApplicableError, QuadratureError
from .moments import Divergent, cramer_check, log_mgf, variance
from .numerics import bisect_monotone, integrate_halfline, invert_increasing
from .tails import NormEstimate, TailFunction, derived_tail, growth_diverges, register_derived

INF = math.inf
PHI_FAMILIES = ("quadratic", "power", "power-log", "log-pole", "sampled")
DEFAULT_CAP = 1e6
DEFAULT_FACTOR = 1.5
C1_SENSITIVITY = (0.5, 1.0, 2.0)


def _num(params, name, cond, what, default=None):
    if name not in params:
        if default is not None:
            return default
        raise InputError(f"missing parameter '{name}'")
    try:
        v = float(params[name])
    except (TypeError, ValueError):
        raise InputError(f"parameter '{name}' must be a number") from None
    if not cond(v):
        raise InputError(f"parameter '{name}'={v!r} outside admissible range ({what})")
    return v


def _inner_split(A: float, B: float) -> tuple[float, float]:
    """Knot ``s`` and slope ``B1`` of the C1 piecewise quadratic on ``[0, 1]``.

    The extension has ``g(0) = g'(0) = 0``, ``g(1) = A``, ``g'(1) = B`` and
    slope rising linearly to ``B1`` on ``[0, s]``, then to ``B`` on ``[s, 1]``.
    Any ``0 < A < B`` admits a strictly convex choice; ``s`` is centred in the
    admissible range.
    """
    if not 0 < A < B:
        raise InputError("outer branch must satisfy 0 < phi(1) < phi'(1)")
    lo = max(0.0, 1.0 - 2.0 * A / B)
    hi = min(1.0, 2.0 - 2.0 * A / B)
    s = 0.5 * (lo + hi)
    return s, 2.0 * A - B * (1.0 - s)


@dataclass(frozen=True)
class PhiFunction:
    """An even Young-Orlicz function on ``(-lambda0, lambda0)``.

    Families given by a formula only for ``|lam| >= 1`` are continued to
    ``|lam| < 1`` by a C1 strictly convex piecewise quadratic that starts
    flat at 0.
    """

    family: str
    params: Mapping[str, Any]
    lambda0: float = field(default=INF, init=False)

    def __post_init__(self):
        f, p = self.family, dict(self.params)
        ext = None
        if f == "quadratic":
            lam0 = INF
        elif f == "power":
            m = _num(p, "m", lambda v: v > 1, "m > 1")
            lam0 = INF
            ext = (1.0 / m, 1.0)
        elif f == "power-log":
            m = _num(p, "m", lambda v: v > 1, "m > 1")
            _num(p, "a", lambda v: v >= 0, "a >= 0")
            lam0 = INF
        elif f == "log-pole":
            b = _num(p, "b", lambda v: v > 1, "b > 1")
            g = _num(p, "gamma", lambda v: v > 0, "gamma > 0")
            lam0 = b
            ext = (g * math.log(b / (b - 1.0)), g / (b - 1.0))
        elif f == "sampled":
            try:
                lam = np.asarray(p["lambda"], dtype=float)
                val = np.asarray(p["phi"], dtype=float)
            except (KeyError, TypeError, ValueError):
                raise InputError("sampled phi needs numeric lists 'lambda' and 'phi'") from None
            if lam.ndim != 1 or lam.shape != val.shape or len(lam) < 3:
                raise InputError("sampled phi needs >= 3 grid points")
            if lam[0] != 0 or np.any(np.diff(lam) <= 0):
                raise InputError("sampled phi grid must start at 0 and ascend")
            fin = np.isfinite(val)
            lam0 = INF if fin.all() else float(lam[np.argmin(fin)])
            p = {"lambda": lam.tolist(), "phi": [float(v) if math.isfinite(v) else INF for v in val]}
            object.__setattr__(self, "_lam", lam[fin])
            object.__setattr__(self, "_val", val[fin])
        else:
            raise InputError(f"invalid family descriptor: unknown phi family '{f}'")
        if f != "sampled":
            p = {k: float(v) for k, v in p.items()}
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "lambda0", lam0)
        if f == "power-log":
            ext = (self._outer(1.0), self._outer_prime(1.0))
        object.__setattr__(self, "_ext", None if ext is None else (ext[0], ext[1]) + _inner_split(*ext))

    # -- evaluation

    def _outer(self, t: float) -> float:
        q = self.params
        f = self.family
        if f == "power":
            return t ** q["m"] / q["m"]
        if f == "power-log":
            m, a = q["m"], q["a"]
            qq = m / (m - 1.0)
            tm = t ** m
            return tm / m * math.log(math.e + tm) ** (a / qq)
        b, g = q["b"], q["gamma"]
        return g * math.log(b / (b - t)) if t < b else INF

    def _outer_prime(self, t: float) -> float:
        q = self.params
        f = self.family
        if f == "power":
            return t ** (q["m"] - 1.0)
        if f == "power-log":
            m, a = q["m"], q["a"]
            qq = m / (m - 1.0)
            tm = t ** m
            ell = math.log(math.e + tm)
            return t ** (m - 1.0) * ell ** (a / qq) * (1.0 + (a / qq) * tm / ((math.e + tm) * ell))
        b, g = q["b"], q["gamma"]
        return g / (b - t)

    def __call__(self, lam: float) -> float:
        t = abs(float(lam))
        if t >= self.lambda0:
            return INF
        f = self.family
        if f == "quadratic":
            return 0.5 * t * t
        if f == "sampled":
            lam_, val = self._lam, self._val
            if t > lam_[-1]:
                return INF
            return float(np.interp(t, lam_, val))
        if t >= 1.0:
            return self._outer(t)
        A, B, s, B1 = self._ext
        if t <= s:
            return 0.5 * (B1 / s) * t * t
        k = (B - B1) / (1.0 - s)
        return 0.5 * B1 * s + B1 * (t - s) + 0.5 * k * (t - s) ** 2

    @property
    def phi2_0(self) -> float:
        """``phi''(0)``."""
        if self.family == "quadratic":
            return 1.0
        if self.family == "sampled":
            lam, val = self._lam, self._val
            return 2.0 * val[1] / lam[1] ** 2
        _, _, s, B1 = self._ext
        return B1 / s

    @property
    def closed_form_from(self) -> float | None:
        """Smallest ``x >= 0`` from which the conjugate has a closed form (``None``: never)."""
        f = self.family
        if f == "quadratic":
            return 0.0
        if f == "power":
            return 1.0
        if f == "log-pole":
            return self.params["gamma"] / (self.params["b"] - 1.0)
        return None

    def conjugate_arg(self, x: float) -> tuple[float, float]:
        """``(phi*(x), maximizing lambda)``."""
        sign = -1.0 if x < 0 else 1.0
        x = abs(float(x))
        q = self.params
        start = self.closed_form_from
        if start is not None and x >= start:
            f = self.family
            if f == "quadratic":
                return 0.5 * x * x, sign * x
            if f == "power":
                m = q["m"]
                qq = m / (m - 1.0)
                return x ** qq / qq, sign * x ** (1.0 / (m - 1.0))
            b, g = q["b"], q["gamma"]
            if x == 0:
                return 0.0, 0.0
            return b * x - g - g * math.log(b * x / g), sign * (b - g / x)
        if x == 0:
            return 0.0, 0.0
        v, a = conjugate_value(self, (0.0, self.lambda0), x)
        return v, sign * a

    def conjugate(self, x: float) -> float:
        return self.conjugate_arg(x)[0]

    def conjugate_derivative(self, x: float) -> float:
        """``phi*'(x)``, which is the maximizing ``lambda``."""
        return self.conjugate_arg(x)[1]

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params),
                "lambda0": "inf" if math.isinf(self.lambda0) else self.lambda0}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PhiFunction":
        if not isinstance(d, Mapping) or "family" not in d:
            raise InputError("invalid family descriptor: expected an object with 'family'")
        params = d.get("params", {}) or {}
        if not isinstance(params, Mapping):
            raise InputError("invalid family descriptor: 'params' must be an object")
        return cls(str(d["family"]), dict(params))


def make_phi(family: str, params: Mapping | None = None) -> PhiFunction:
    return PhiFunction(family, dict(params or {}))


# ---------------------------------------------------------------------------
# lambda grids


def lambda_grid(phi_or_lambda0, *, levels: int = 3, points: int = 40, cap: float = 1e3,
                start: float = 1e-2, min_gap: float = 1e-3) -> np.ndarray:
    """Positive grid, ``points`` per refinement level.

    With ``lambda0 = inf`` it is geometric from ``start`` to ``cap``; with a
    finite ``lambda0`` the gaps ``lambda0 - lam`` shrink geometrically to
    ``min_gap * lambda0``.
    """
    lam0 = phi_or_lambda0.lambda0 if isinstance(phi_or_lambda0, PhiFunction) else float(phi_or_lambda0)
    n = levels * points
    if math.isinf(lam0):
        return np.geomspace(start, cap, n)
    head = np.geomspace(start * lam0, 0.5 * lam0, points)
    gaps = np.geomspace(0.5 * lam0, min_gap * lam0, n)[1:]
    return np.concatenate([head, lam0 - gaps])


def _level_masks(lam: np.ndarray, lam0: float, levels: int):
    if math.isinf(lam0):
        key = np.log10(lam[-1]) - np.log10(lam)
    else:
        key = np.log10(lam0 - lam) - np.log10(lam0 - lam[-1])
    span = float(key[0])
    edges = [span * (levels - k) / levels for k in range(1, levels + 1)]
    return [key >= e - 1e-12 for e in edges]


# ---------------------------------------------------------------------------
# the norm


def _feasible_factory(phi: PhiFunction, lam: np.ndarray, lm: np.ndarray):
    lam0 = phi.lambda0

    def feasible(tau: float) -> bool:
        if lam0 < INF and tau * lam[-1] >= lam0:
            return False
        for l, v in zip(lam, lm):
            if v > phi(l * tau) + 1e-12 * max(1.0, abs(v)):
                return False
        return True

    return feasible


def _solve_tau(phi, lam, lm, tau_lo, cap, rel_tol):
    feasible = _feasible_factory(phi, lam, lm)
    if feasible(tau_lo):
        return tau_lo
    hi = cap
    if phi.lambda0 < INF:
        hi = min(cap, phi.lambda0 / lam[-1] * (1.0 - 1e-12))
    if hi <= tau_lo or not feasible(hi):
        return INF
    return bisect_monotone(feasible, tau_lo, hi, rel_tol=rel_tol)


def bphi_norm(tail: TailFunction, phi: PhiFunction, lambda_grid_: Sequence[float] | None = None, *,
              levels: int = 3, cap: float = DEFAULT_CAP, rel_tol: float = 1e-4,
              factor: float = DEFAULT_FACTOR) -> NormEstimate:
    """Least ``tau`` with ``ln E cosh(lam |zeta|) <= phi(lam tau)`` on the grid.

    When ``lambda0`` is finite the argument ``lam * tau`` must stay inside
    ``(-lambda0, lambda0)`` for every grid ``lam``.  Bisection starts from
    ``sqrt(var / phi''(0))``, the bound forced as ``lam -> 0``.  Nested grids
    reaching toward ``lambda0`` (or the top of the grid) give the trace; the
    estimate is flagged as diverged when no ``tau`` is feasible on the finest
    grid or when every refinement multiplies ``tau`` by more than ``factor``.
    """
    lam = np.asarray(lambda_grid(phi) if lambda_grid_ is None else lambda_grid_, dtype=float)
    lam = np.unique(np.abs(lam[lam != 0]))
    if len(lam) == 0:
        raise InputError("lambda grid must contain nonzero values")
    if np.any(lam >= phi.lambda0):
        raise InputError("lambda grid must lie inside (0, lambda0)")
    lm = np.empty_like(lam)
    for i, l in enumerate(lam):
        v = log_mgf(tail, float(l))
        if isinstance(v, Divergent) or not math.isfinite(v):
            return NormEstimate(INF, [INF], True, "bphi",
                                {"reason": "moment generating function diverges", "witness_lambda": float(l)})
        lm[i] = v
    tau_lo = math.sqrt(variance(tail) / phi.phi2_0)
    trace = []
    for m in _level_masks(lam, phi.lambda0, levels):
        trace.append(_solve_tau(phi, lam[m], lm[m], tau_lo, cap, rel_tol))
    details = {"tau_lower": tau_lo}
    diverged = not math.isfinite(trace[-1]) or growth_diverges(trace, factor)
    if not math.isfinite(trace[-1]):
        details["reason"] = "no feasible tau on the finest grid"
    return NormEstimate(trace[-1], trace, diverged, "bphi", details)


# ---------------------------------------------------------------------------
# bounds, natural phi, N-function


def bphi_tail_bound(phi: PhiFunction, K: float) -> TailFunction:
    """``x -> exp(-phi*(x / K))``."""
    if not (K > 0 and math.isfinite(K)):
        raise InputError("K must be positive and finite")

    def log_raw(x):
        return -phi.conjugate(x / K) if x > 0 else 0.0

    crit = phi.lambda0 / K if math.isfinite(phi.lambda0) else INF
    return derived_tail("bphi-bound", {"phi": phi.to_dict(), "K": K}, log_raw, critical_lambda=crit)


register_derived("bphi-bound", lambda q: bphi_tail_bound(PhiFunction.from_dict(q["phi"]), float(q["K"])))


def natural_phi(tails: Sequence[TailFunction], lambda_grid_: Sequence[float],
                mu_grid: Sequence[float] | None = None) -> PhiFunction:
    """``lam -> ln sup_tails E cosh(lam |zeta|)`` sampled on ``[0] + lambda_grid``."""
    if not tails:
        raise InputError("need at least one tail")
    mus = np.geomspace(1e-4, 10.0, 60) if mu_grid is None else mu_grid
    for t in tails:
        if not cramer_check(t, mus).passed:
            raise InputError(f"tail '{t.family}' {dict(t.params)} fails the Cramer check")
    lam = np.unique(np.concatenate([[0.0], np.abs(np.asarray(lambda_grid_, dtype=float))]))
    vals = np.zeros_like(lam)
    for i, l in enumerate(lam[1:], start=1):
        vals[i] = max(float(log_mgf(t, float(l))) for t in tails)
    out = PhiFunction("sampled", {"lambda": lam.tolist(), "phi": vals.tolist()})
    check = SampledConvexFunction(lam[np.isfinite(vals)], vals[np.isfinite(vals)])
    if not second_differences_ok(check, 1e-8):
        raise NonConvexError("natural phi is not convex on the grid")
    return out


def n_function(phi: PhiFunction, u_grid: Sequence[float]) -> SampledConvexFunction:
    """``N(u) = exp(phi*(u)) - 1`` on ``u_grid``."""
    us = np.asarray(u_grid, dtype=float)
    if np.any(us < 0):
        raise InputError("u_grid must be nonnegative")
    vals = np.array([math.expm1(v) if v < 709.0 else INF for v in (phi.conjugate(float(u)) for u in us)])
    return SampledConvexFunction(us, vals, (0.0, INF), f"n-function:{phi.family}", None,
                                 lambda u: math.expm1(min(phi.conjugate(u), 709.0)))


# ---------------------------------------------------------------------------
# converse condition


@dataclass
class ZReport:
    C1: float
    lam: list
    theta: list
    Z: list
    c: list
    trace: list
    bounded: bool
    sensitivity: dict = field(default_factory=dict)

    def to_dict(self):
        return {"C1": self.C1, "lambda": self.lam, "theta": self.theta, "Z": self.Z, "c": self.c,
                "trace": self.trace, "bounded": self.bounded, "sensitivity": self.sensitivity}


def _z_single(phi: PhiFunction, C1: float, lam: np.ndarray, levels: int, growth_tol: float):
    thetas, Zs, cs = [], [], []
    for l in lam:
        l = float(l)
        theta = C1 / (l * phi.conjugate_derivative(l))
        target = 1.0 / theta
        scale = invert_increasing(phi.conjugate, target, 0.0, rel_tol=1e-8)
        try:
            Z = integrate_halfline(lambda x: math.exp(-theta * phi.conjugate(x)), start=0.0,
                                   scale=max(scale, 1e-6)).value
        except QuadratureError:
            Z = INF
        thetas.append(theta)
        Zs.append(Z)
        if not math.isfinite(Z):
            cs.append(INF)
            continue
        lz = math.log(Z)
        cs.append(invert_increasing(phi.conjugate, lz, 0.0, rel_tol=1e-10) / l if lz > 0 else 0.0)
    cs_arr = np.array(cs)
    trace = []
    top = lam[-1]
    for k in range(levels):
        c = top / 10.0 ** (levels - 1 - k)
        sel = cs_arr[lam <= c * (1 + 1e-12)]
        trace.append(float(np.max(sel)) if len(sel) else 0.0)
    bounded = all(math.isfinite(t) for t in trace) and not (
        len(trace) > 1 and trace[-1] > (1.0 + growth_tol) * trace[-2])
    return thetas, Zs, cs, trace, bounded


def z_condition_check(phi: PhiFunction, C1: float = 1.0, lambda_grid_: Sequence[float] | None = None, *,
                      cap: float = 1e3, points: int = 60, levels: int = 3,
                      growth_tol: float = 0.05) -> ZReport:
    """Empirical check that ``c(lam) = (phi*)^-1(ln Z(lam)) / lam`` stays bounded for ``lam > e``.

    ``theta(lam) = C1 / (lam phi*'(lam))`` and ``Z(lam) = int_0^inf exp(-theta phi*(x)) dx``.
    The verdict is empirical: the supremum of ``c`` up to ``cap`` must grow
    by at most ``growth_tol`` over the last decade.
    """
    if not C1 > 0:
        raise InputError("C1 must be positive")
    if math.isfinite(phi.lambda0):
        raise NotApplicableError(f"the Z-condition needs lambda0 = inf; phi '{phi.family}' has {phi.lambda0:g}")
    lam = np.geomspace(math.e * 1.0001, cap, points) if lambda_grid_ is None else np.asarray(lambda_grid_, float)
    if np.any(lam <= math.e):
        raise InputError("lambda grid must lie in (e, inf)")
    thetas, Zs, cs, trace, bounded = _z_single(phi, C1, lam, levels, growth_tol)
    sens = {}
    for c1 in C1_SENSITIVITY:
        if c1 == C1:
            sens[str(c1)] = {"trace": trace, "bounded": bounded}
            continue
        *_, tr, bd = _z_single(phi, c1, lam, levels, growth_tol)
        sens[str(c1)] = {"trace": tr, "bounded": bd}
    return ZReport(C1, lam.tolist(), thetas, Zs, cs, trace, bounded, sens)
