"""Generating functions psi, Grand Lebesgue norms and the tail bounds they imply."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DivergenceError, InputError, NotApplicableError
from .moments import NEAR_CRITICAL, MomentCurve, log_moment, natural_psi
from .numerics import invert_increasing, maximize_concave
from .tails import (NormEstimate, TailFunction, derived_tail, from_descriptor, growth_diverges,
                    lorentz_quasinorm, register_derived)

INF = math.inf
PSI_FAMILIES = ("flat", "power", "exp-power", "grand")
DEFAULT_FACTOR = 1.5
DEFAULT_CAP = 1e3
# smallest gap b - p a grid may reach; moments refuse anything closer than NEAR_CRITICAL
MIN_GAP = 1.001 * NEAR_CRITICAL


def _num(params, name, cond, what):
    if name not in params:
        raise InputError(f"missing parameter '{name}'")
    try:
        v = float(params[name])
    except (TypeError, ValueError):
        raise InputError(f"parameter '{name}' must be a number") from None
    if not cond(v):
        raise InputError(f"parameter '{name}'={v!r} outside admissible range ({what})")
    return v


@dataclass(frozen=True)
class PsiFunction:
    """A generating function on ``[1, b)`` (``[1, r]`` for ``flat``), normalized so ``inf psi = 1``.

    Every built-in family is nondecreasing, so the normalizing infimum is the
    raw value at ``p = 1``.
    """

    family: str
    params: Mapping[str, Any]

    def __post_init__(self):
        f, p = self.family, dict(self.params)
        if f == "flat":
            b = _num(p, "r", lambda v: v >= 1, "r >= 1")
        elif f == "power":
            _num(p, "m", lambda v: v > 0, "m > 0")
            b = INF
        elif f == "exp-power":
            _num(p, "C", lambda v: v > 0, "C > 0")
            _num(p, "beta", lambda v: v > 0, "beta > 0")
            b = INF
        elif f == "grand":
            b = _num(p, "b", lambda v: v > 1, "b > 1")
            _num(p, "gamma", lambda v: v > 0, "gamma > 0")
        else:
            raise InputError(f"invalid family descriptor: unknown psi family '{f}'")
        object.__setattr__(self, "params", {k: float(v) for k, v in p.items()})
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_log_inf", self.log_raw(1.0))

    @property
    def closed(self) -> bool:
        """Whether the right end of the support belongs to it."""
        return self.family == "flat"

    def in_support(self, p: float) -> bool:
        return 1.0 <= p < self.b or (self.closed and p == self.b)

    # -- evaluation

    def log_raw(self, p: float) -> float:
        q = self.params
        f = self.family
        if f == "flat":
            return 0.0 if p <= q["r"] else INF
        if f == "power":
            return math.log(p) / q["m"]
        if f == "exp-power":
            return q["C"] * p ** q["beta"]
        gap = q["b"] - p
        return -(q["gamma"] / q["b"]) * math.log(gap) if gap > 0 else INF

    def log_psi(self, p: float) -> float:
        return self.log_raw(p) - self._log_inf

    def __call__(self, p: float) -> float:
        v = self.log_psi(p)
        return math.exp(v) if v < 709.0 else INF

    def h(self, p: float) -> float:
        """``p * ln psi(p)``."""
        return p * self.log_psi(p)

    def hprime_log(self, s: float) -> float:
        """``h'(p)`` at ``p = exp(s)``, evaluated without forming ``p`` when it would overflow."""
        q = self.params
        f = self.family
        if f == "power":
            return (s + 1.0) / q["m"]
        if f == "exp-power":
            C, beta = q["C"], q["beta"]
            if beta * s > 700.0:
                return INF
            pb = math.exp(beta * s)
            return C * pb * (1.0 + beta) - C
        p = math.exp(s)
        hh = 1e-6 * p
        return (self.h(p + hh) - self.h(max(1.0, p - hh))) / (p + hh - max(1.0, p - hh))

    def h_star(self, u: float) -> float:
        """``sup_{p in support} (p u - h(p))``."""
        return self.h_star_arg(u)[0]

    def h_star_arg(self, u: float) -> tuple[float, float]:
        if self.family == "flat":
            r = self.params["r"]
            return (r * u, r) if u > 0 else (u, 1.0)

        def obj(p):
            v = self.h(p)
            return -INF if v == INF else p * u - v

        res = maximize_concave(obj, 1.0, self.b)
        if res.unbounded:
            return INF, INF
        return res.value, res.argmax

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PsiFunction":
        if not isinstance(d, Mapping) or "family" not in d:
            raise InputError("invalid family descriptor: expected an object with 'family'")
        params = d.get("params", {}) or {}
        if not isinstance(params, Mapping):
            raise InputError("invalid family descriptor: 'params' must be an object")
        return cls(str(d["family"]), dict(params))


def make_psi(family: str, params: Mapping | None = None) -> PsiFunction:
    return PsiFunction(family, dict(params or {}))


# ---------------------------------------------------------------------------
# p-grids


def p_grid(psi_or_b, *, levels: int = 3, points: int = 40, cap: float = DEFAULT_CAP,
           min_gap: float = MIN_GAP) -> np.ndarray:
    """Grid on the support of ``psi``, ``points`` per refinement level.

    For a finite open end ``b`` the gaps ``b - p`` shrink geometrically from
    ``b - 1`` to ``min_gap``; for ``b = inf`` the grid is geometric up to
    ``cap``; for a closed end the grid is geometric on ``[1, r]``.
    """
    if levels < 1 or points < 2:
        raise InputError("levels and points must be positive")
    n = levels * points
    if isinstance(psi_or_b, PsiFunction):
        b, closed = psi_or_b.b, psi_or_b.closed
    else:
        b, closed = float(psi_or_b), False
    if closed:
        return np.unique(np.geomspace(1.0, b, n)) if b > 1 else np.array([1.0])
    if math.isinf(b):
        return np.geomspace(1.0, cap, n)
    if b - 1.0 <= min_gap:
        raise InputError(f"support [1, {b}) is too short for a pole grid")
    gaps = np.geomspace(b - 1.0, min_gap, n)
    ps = b - gaps
    ps[0] = 1.0
    return ps


def _windows(p: np.ndarray, psi: PsiFunction, levels: int):
    """Disjoint windows approaching the end of the support (and an empty prefix mask).

    Toward a finite pole the windows split the range of ``log(b - p)``
    evenly; for ``b = inf`` they split the range of ``log p``.  Without a pole the grid is split by
    density instead and every window spans the whole support.
    """
    n = len(p)
    if psi.closed or n < 2 * levels:
        masks = []
        for k in range(levels):
            m = np.zeros(n, dtype=bool)
            m[::2 ** (levels - 1 - k)] = True
            m[-1] = True
            masks.append(m)
        return np.zeros(n, dtype=bool), masks
    if math.isinf(psi.b):
        key = np.log10(p[-1]) - np.log10(p)
    else:
        gaps = psi.b - p
        key = np.log10(gaps) - np.log10(gaps[-1])
    # key is 0 at the far end of the grid and grows away from it
    span = float(key[0])
    edges = [span * (levels - k) / levels for k in range(levels + 1)]
    masks = []
    for k in range(levels):
        hi, lo = edges[k], edges[k + 1]
        m = (key <= hi + 1e-12) & (key > lo + 1e-12) if k < levels - 1 else (key <= hi + 1e-12)
        if k == 0:
            m |= key > hi
        masks.append(m)
    return np.zeros(n, dtype=bool), masks


# ---------------------------------------------------------------------------
# the norm


def _log_ratio(curve: MomentCurve, psi: PsiFunction) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lv = np.log(curve.values)
    return lv - np.array([psi.log_psi(float(p)) for p in curve.p])


def gls_norm(curve: MomentCurve, psi: PsiFunction, *, factor: float = DEFAULT_FACTOR,
             levels: int = 3, tail: TailFunction | None = None, polish: bool = True) -> NormEstimate:
    """``sup_p |xi|_p / psi(p)`` over the curve's grid with a refinement trace.

    The trace holds the supremum over nested grids, each level reaching
    further toward the end of the support (equal steps in ``log(b - p)``, or
    in ``log p`` when ``b = inf``).  Divergence is judged on the ratio at the
    far edge of each level (``details['edge_values']``): the estimate is
    flagged when each edge value exceeds the previous one by more than
    ``factor``.  A large ratio at small ``p`` (an atom, say) therefore cannot
    mask growth at the pole.  When the tail is known (passed
    in or recorded on the curve) a finite supremum is polished by maximizing
    between the neighbours of the grid argmax.
    """
    p = np.asarray(curve.p, dtype=float)
    if len(p) == 0:
        raise InputError("empty moment curve")
    bad = [float(x) for x in p if not psi.in_support(float(x))]
    if bad:
        raise InputError(f"p-grid leaves the support of psi at p={bad[0]!r}")
    lr = _log_ratio(curve, psi)
    before, windows = _windows(p, psi, levels)
    trace, edge_values = [], []
    seen = before.copy()
    for w in windows:
        seen |= w
        trace.append(float(np.exp(np.max(lr[seen]))))
        # the ratio at the window's point nearest the end of the support
        edge_values.append(float(np.exp(lr[np.nonzero(w)[0][-1]])) if w.any() else 0.0)
    diverged = growth_diverges(edge_values, factor)
    i = int(np.argmax(lr))
    details = {"argmax_p": float(p[i]), "edge_values": edge_values}
    value = trace[-1]
    if not diverged and polish:
        if tail is None and curve.tail is not None:
            tail = from_descriptor(curve.tail)
        if tail is not None and len(p) >= 3:
            lo = float(p[max(i - 1, 0)])
            hi = float(p[min(i + 1, len(p) - 1)])

            def obj(q):
                return log_moment(tail, q)[0] - psi.log_psi(q)

            res = maximize_concave(obj, lo, hi)
            if res.value > math.log(value):
                value = math.exp(res.value)
                details["argmax_p"] = float(res.argmax)
                trace[-1] = value
    return NormEstimate(value, trace, diverged, "gls", details)


def gls_norm_of_tail(tail: TailFunction, psi: PsiFunction, *, levels: int = 3, points: int = 40,
                     cap: float = DEFAULT_CAP, factor: float = DEFAULT_FACTOR) -> NormEstimate:
    """Build the moment curve on the default grid, then take the norm.

    A divergent moment inside the support makes the norm infinite at once.
    """
    grid = p_grid(psi, levels=levels, points=points, cap=cap)
    crit = tail.critical_p
    if crit < INF and crit - NEAR_CRITICAL <= grid[-1]:
        inside = psi.b > crit or (psi.closed and psi.b >= crit)
        if inside:
            return NormEstimate(INF, [INF], True, "gls",
                                {"reason": "moment diverges inside the support", "critical_p": crit})
        # the moments themselves approach a pole together with psi
        grid = grid[grid <= crit - NEAR_CRITICAL]
    try:
        curve = natural_psi(tail, grid)
    except DivergenceError as exc:
        return NormEstimate(INF, [INF], True, "gls", {"reason": str(exc)})
    return gls_norm(curve, psi, factor=factor, levels=levels, tail=tail)


# ---------------------------------------------------------------------------
# tail bound


def gls_tail_bound(psi: PsiFunction, V: float) -> TailFunction:
    """``x -> exp(-h*(ln(x/V)))``, i.e. ``inf_p (V psi(p) / x)^p``; equal to 1 for ``x <= V``."""
    if not (V > 0 and math.isfinite(V)):
        raise InputError("V must be positive and finite")
    lv = math.log(V)

    def log_at_log(y):
        u = y - lv
        if u <= 0:
            return 0.0
        return -psi.h_star(u)

    def log_raw(x):
        return 0.0 if x <= V else log_at_log(math.log(x))

    if math.isfinite(psi.b):
        crit_p, crit_l = psi.b, 0.0
    elif psi.family == "power":
        m = psi.params["m"]
        crit_p = INF
        crit_l = INF if m > 1 else (1.0 / (math.e * V) if m == 1 else 0.0)
    else:
        crit_p, crit_l = INF, 0.0
    return derived_tail("gls-bound", {"psi": psi.to_dict(), "V": V}, log_raw,
                        critical_p=crit_p, critical_lambda=crit_l, log_raw_log=log_at_log)


register_derived("gls-bound", lambda q: gls_tail_bound(PsiFunction.from_dict(q["psi"]), float(q["V"])))


# ---------------------------------------------------------------------------
# converse machinery


@dataclass
class RPsiResult:
    value: float
    trace: list
    unbounded: bool
    argmax_u: float

    def to_dict(self):
        return {"value": self.value, "trace": list(self.trace), "unbounded": self.unbounded,
                "argmax_u": self.argmax_u}


def log_argmax_h_star(psi: PsiFunction, u: float) -> float:
    """``ln p*(u)`` where ``p*(u)`` maximizes ``p u - h(p)``; this is also ``h*'(u)``."""
    if psi.hprime_log(0.0) >= u:
        return 0.0
    return invert_increasing(psi.hprime_log, u, 0.0)


def r_psi(psi: PsiFunction, *, cap: float = DEFAULT_CAP, levels: int = 3, points: int = 200,
          growth_tol: float = 0.05) -> RPsiResult:
    """``sup_u h*'(u)^(1/u)`` on a geometric grid ``[1, cap]``.

    ``h*'`` equals the maximizer ``p*``, found in log-space by solving
    ``h'(p) = u``.  The trace holds the supremum up to ``cap / 10^(levels-1-k)``;
    the result is flagged unbounded when the last refinement still grows by
    more than ``growth_tol``.
    """
    if math.isfinite(psi.b):
        raise NotApplicableError(f"R[psi] needs an unbounded support; psi '{psi.family}' ends at {psi.b:g}")
    us = np.geomspace(1.0, cap, points)
    vals = np.array([log_argmax_h_star(psi, float(u)) / u for u in us])
    trace = []
    for k in range(levels):
        c = cap / 10.0 ** (levels - 1 - k)
        trace.append(float(np.exp(np.max(vals[us <= c * (1 + 1e-12)]))))
    unbounded = len(trace) > 1 and trace[-1] > (1.0 + growth_tol) * trace[-2]
    i = int(np.argmax(vals))
    return RPsiResult(INF if unbounded else trace[-1], trace, unbounded, float(us[i]))


def gls_converse_bound(tail: TailFunction, psi: PsiFunction, *, cap: float = DEFAULT_CAP,
                       levels: int = 3, points: int = 40) -> NormEstimate:
    """Compare the direct norm with ``2 R e^(1/e) ||tail||_L(S_psi)``, ``S_psi`` the ``V = 1`` bound."""
    r = r_psi(psi, cap=cap)
    if r.unbounded:
        raise NotApplicableError("R[psi] is unbounded on the grid")
    S = gls_tail_bound(psi, 1.0)
    lq = lorentz_quasinorm(tail, S)
    bound = 2.0 * r.value * math.exp(1.0 / math.e) * lq.value
    direct = gls_norm_of_tail(tail, psi, levels=levels, points=points, cap=cap)
    ratio = direct.value / bound if bound > 0 else INF
    details = {"direct": direct.value, "bound": bound, "ratio": ratio, "R": r.value,
               "lorentz": lq.value, "lorentz_diverged": lq.diverged, "direct_diverged": direct.diverged}
    return NormEstimate(bound, [bound], lq.diverged, "gls-converse", details)


def psi_values(psi: PsiFunction, ps: Sequence[float]) -> np.ndarray:
    return np.array([psi(float(p)) for p in ps])
