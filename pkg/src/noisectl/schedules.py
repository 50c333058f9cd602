"""Noise schedules for the forward SDE ``dX = -f X dt + sqrt(g) dB``.

A :class:`NoiseSchedule` holds vectorized evaluators for the drift rate ``f``
and diffusion rate ``g`` on ``[0, T]`` and derives the marginal coefficients
``alpha_t = exp(-int_0^t f)`` and ``sigma_t^2``, the solution of
``d sigma^2/dt = -2 f sigma^2 + g`` with ``sigma_0^2 = 0``.

Builders cover the standard catalog (linear, cosine, sigmoid, VE
exponential, constant), the affine-coupled family with ``f = theta g + omega``
and the drift-matched diffusion ``g_circle``. All times are forward times.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .errors import CoverageError, DomainError, SingularScheduleError, ValidationError
from .numerics import UNBOUNDED, _NODES, _WK, integrate

__all__ = [
    "NoiseSchedule",
    "MarginalCoeffs",
    "AcsParams",
    "Linear",
    "Cosine",
    "Sigmoid",
    "SigmoidApprox",
    "VeExponential",
    "Constant",
    "marginal_coeffs",
    "snr",
    "make_catalog",
    "make_acs",
    "make_g_circle",
    "make_custom",
    "ou",
    "reparameterize",
    "snr_time_map",
    "map_score",
    "score_from_noise_predictor",
    "schedule_from_json",
]

BRANCH_TOL = 1e-9
TABLE_CELLS = 512
VALIDATION_POINTS = 2001


def _as_vectorized(fn):
    """Return an evaluator that accepts scalars or arrays and returns floats."""
    def call(t):
        arr = np.asarray(t, dtype=float)
        try:
            out = np.asarray(fn(arr), dtype=float)
            if out.shape == arr.shape:
                return out if arr.ndim else float(out)
            if out.ndim == 0:
                out = np.broadcast_to(out, arr.shape).copy()
                return out if arr.ndim else float(out)
        except (TypeError, ValueError):
            pass
        out = np.array([float(fn(float(v))) for v in arr.ravel()]).reshape(arr.shape)
        return out if arr.ndim else float(out)
    return call


@dataclass(frozen=True)
class MarginalCoeffs:
    alpha: float
    sigma2: float

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)


class NoiseSchedule:
    """Immutable drift/diffusion pair on ``[0, T]``.

    ``cumulative_drift`` (``t -> int_0^t f``) and ``sigma2_closed`` are
    optional closed forms; when absent the marginals come from a cached
    cell table that integrates the variance ODE exactly (variation of
    constants) with nested 15-point Kronrod rules per cell.
    """

    def __init__(self, f, g, T, kind="custom", params=None, *, cumulative_drift=None,
                 sigma2_closed=None, breakpoints=(), marginals=None, validate=True):
        T = float(T)
        if not (T > 0 and math.isfinite(T)):
            raise ValidationError("horizon must be positive and finite", "T")
        self._f = _as_vectorized(f)
        self._g = _as_vectorized(g)
        self.T = T
        self.kind = kind
        self.params = dict(params or {})
        self._F = None if cumulative_drift is None else _as_vectorized(cumulative_drift)
        self._sigma2 = None if sigma2_closed is None else _as_vectorized(sigma2_closed)
        self._marginals = marginals
        self.breakpoints = tuple(sorted(float(b) for b in breakpoints if 0 < b < T))
        self._lock = threading.Lock()
        self._table = None
        self._memo = {}
        if validate:
            self._validate()

    # -- evaluators

    def f(self, t):
        return self._f(t)

    def g(self, t):
        return self._g(t)

    def __repr__(self):
        return f"NoiseSchedule(kind={self.kind!r}, T={self.T!r}, params={self.params!r})"

    def _validate(self):
        ts = np.linspace(0.0, self.T, VALIDATION_POINTS)
        fv = np.asarray(self.f(ts), dtype=float)
        gv = np.asarray(self.g(ts), dtype=float)
        if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(gv))):
            raise ValidationError("f and g must be finite on [0, T]", "f/g")
        if np.any(fv < 0):
            bad = ts[np.argmax(fv < 0)]
            raise ValidationError(f"drift rate negative at t={bad:.6g}", "f")
        if np.any(gv <= 0):
            bad = ts[np.argmax(gv <= 0)]
            raise ValidationError(f"diffusion rate not positive at t={bad:.6g}", "g")
        slope = np.diff(gv) / np.diff(ts)
        if not np.all(np.isfinite(slope)):
            raise ValidationError("diffusion rate has unbounded slope", "g")

    # -- marginals

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > self.T):
            raise DomainError(f"time outside [0, {self.T}]: {t}")
        return t

    def _build_table(self):
        with self._lock:
            if self._table is not None:
                return self._table
            edges = np.union1d(np.linspace(0.0, self.T, TABLE_CELLS + 1), self.breakpoints)
            a, b = edges[:-1], edges[1:]
            if self._F is None:
                dF = self._panel_drift(a, b)
                F_edges = np.concatenate([[0.0], np.cumsum(dF)])
            else:
                F_edges = np.asarray(self._F(edges), dtype=float)
                dF = np.diff(F_edges)
            inc = self._panel_variance(a, b, F_edges[1:] if self._F is not None else None)
            S = np.empty_like(edges)
            S[0] = 0.0
            decay = np.exp(-2.0 * dF)
            for i in range(len(a)):
                S[i + 1] = decay[i] * S[i] + inc[i]
            self._table = (edges, F_edges, S)
            return self._table

    def _panel_drift(self, a, b):
        """int_a^b f for arrays of intervals (one 15-point rule each)."""
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[..., None] + half[..., None] * _NODES
        return half * (self.f(s) @ _WK)

    def _panel_variance(self, a, b, F_b=None):
        """int_a^b g(s) exp(-2 int_s^b f) ds per interval."""
        half = 0.5 * (b - a)
        s = (0.5 * (a + b))[:, None] + half[:, None] * _NODES  # (n, 15)
        if self._F is not None:
            expo = np.asarray(self._F(s), dtype=float) - F_b[:, None]
        else:
            inner_half = 0.5 * (b[:, None] - s)
            inner = (0.5 * (b[:, None] + s))[..., None] + inner_half[..., None] * _NODES
            expo = -inner_half * (self.f(inner) @ _WK)
        return half * ((self.g(s) * np.exp(2.0 * expo)) @ _WK)

    def cumulative_drift(self, t):
        """``int_0^t f`` (vectorized)."""
        t = self._check_time(t)
        if self._F is not None:
            return self._F(t)
        edges, F_edges, _ = self._build_table()
        tt = np.atleast_1d(t)
        idx = np.clip(np.searchsorted(edges, tt, side="right") - 1, 0, len(edges) - 2)
        out = F_edges[idx] + self._panel_drift(edges[idx], tt)
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def coeffs(self, t):
        """``(alpha_t, sigma_t^2)`` for scalar or array ``t``."""
        t = self._check_time(t)
        if self._marginals is not None:
            a, s = self._marginals(t)
            return (np.asarray(a, float), np.asarray(s, float)) if t.ndim else (float(a), float(s))
        tt = np.atleast_1d(t)
        F = np.atleast_1d(np.asarray(self.cumulative_drift(tt), dtype=float))
        alpha = np.exp(-F)
        if self._sigma2 is not None:
            s2 = np.atleast_1d(np.asarray(self._sigma2(tt), dtype=float))
        else:
            edges, F_edges, S = self._build_table()
            idx = np.clip(np.searchsorted(edges, tt, side="right") - 1, 0, len(edges) - 2)
            a = edges[idx]
            s2 = np.exp(-2.0 * (F - F_edges[idx])) * S[idx]
            mask = tt > a
            if np.any(mask):
                Fb = F[mask] if self._F is not None else None
                s2[mask] += self._panel_variance(a[mask], tt[mask], Fb)
        s2 = np.where(tt == 0.0, 0.0, s2)
        if t.ndim:
            return alpha.reshape(t.shape), s2.reshape(t.shape)
        return float(alpha[0]), float(s2[0])

    def marginal(self, t) -> MarginalCoeffs:
        """Memoized scalar marginal coefficients."""
        key = float(t)
        hit = self._memo.get(key)
        if hit is None:
            hit = MarginalCoeffs(*self.coeffs(key))
            self._memo[key] = hit
        return hit

    def snr(self, t):
        m = self.marginal(t)
        if m.sigma2 == 0.0:
            return UNBOUNDED
        return m.alpha ** 2 / m.sigma2

    def log_snr(self, t):
        m = self.marginal(t)
        if m.sigma2 == 0.0:
            return math.inf
        return 2.0 * math.log(m.alpha) - math.log(m.sigma2)

    # -- serialization

    def to_dict(self):
        if self.kind not in _JSON_BUILDERS:
            raise ValidationError(f"schedule kind {self.kind!r} has no JSON form", "kind")
        return {"kind": self.kind, "T": self.T, "params": dict(self.params)}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def marginal_coeffs(schedule: NoiseSchedule, t: float) -> MarginalCoeffs:
    """Marginal ``(alpha_t, sigma_t^2)``; raises :class:`DomainError` outside ``[0, T]``."""
    return schedule.marginal(t)


def snr(schedule: NoiseSchedule, t: float):
    """``alpha_t^2 / sigma_t^2``, or :data:`UNBOUNDED` at ``t = 0``."""
    return schedule.snr(t)


# ---------------------------------------------------------------- catalog


def _check(cond, msg, name):
    if not cond:
        raise ValidationError(msg, name)


def _finite_pos(v, name):
    _check(isinstance(v, (int, float)) and math.isfinite(v) and v > 0, f"must be positive, got {v!r}", name)


@dataclass(frozen=True)
class Linear:
    """``f = (beta_min + (beta_max - beta_min) t/T)/2``; defaults 0.1/T and 20/T."""
    beta_min: Optional[float] = None
    beta_max: Optional[float] = None


@dataclass(frozen=True)
class Cosine:
    s: float = 0.008
    max_drift: Optional[float] = None


@dataclass(frozen=True)
class Sigmoid:
    """Exact sigmoid (cumulative signal ratio of sigmoids)."""
    theta_min: float = -3.0
    theta_max: float = 3.0
    tau: float = 1.0
    max_drift: Optional[float] = None


@dataclass(frozen=True)
class SigmoidApprox:
    """Sigmoid drift with the terminal sigmoid value approximated by one."""
    theta_min: float = -3.0
    theta_max: float = 3.0
    tau: float = 1.0


@dataclass(frozen=True)
class VeExponential:
    g0: float = 1.0
    lam: float = 1.0


@dataclass(frozen=True)
class Constant:
    f_const: float = 1.0
    g_const: float = 2.0


def _params_dict(p):
    return {fl.name: getattr(p, fl.name) for fl in fields(p) if getattr(p, fl.name) is not None}


def _cap_drift(f_raw, F_raw, cap, T):
    """Clip a drift that blows up near ``T`` at ``cap``.

    Returns capped ``(f, F, breakpoints)``; ``F`` stays closed form by
    integrating the cap linearly over the clipped segments.
    """
    ts = np.linspace(0.0, T, 4097)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        fv = f_raw(ts)
    over = ~(fv <= cap)
    if not np.any(over):
        return f_raw, F_raw, ()
    crossings = []
    for i in np.nonzero(over[1:] != over[:-1])[0]:
        lo, hi = ts[i], ts[i + 1]
        lo_over = over[i]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                m_over = not (f_raw(np.array(mid)) <= cap)
            if m_over == lo_over:
                lo = mid
            else:
                hi = mid
        crossings.append(0.5 * (lo + hi))
    # Segments alternate between raw and capped starting from the state at t = 0.
    seg_edges = [0.0] + crossings + [T]
    seg_capped = []
    state = bool(over[0])
    for _ in range(len(seg_edges) - 1):
        seg_capped.append(state)
        state = not state
    seg_edges = np.array(seg_edges)
    # F at segment starts.
    F_start = [0.0]
    for k in range(len(seg_capped) - 1):
        a, b = seg_edges[k], seg_edges[k + 1]
        inc = cap * (b - a) if seg_capped[k] else float(F_raw(np.array(b)) - F_raw(np.array(a)))
        F_start.append(F_start[-1] + inc)
    F_start = np.array(F_start)
    capped_arr = np.array(seg_capped)

    def f(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = f_raw(np.minimum(t, np.nextafter(T, 0.0)))
        return np.where(v <= cap, v, cap)

    def F(t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(seg_edges, t, side="right") - 1, 0, len(capped_arr) - 1)
        a = seg_edges[k]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            raw = F_raw(np.where(capped_arr[k], a, t)) - F_raw(a)
        return F_start[k] + np.where(capped_arr[k], cap * (t - a), raw)

    return f, F, tuple(crossings)


def _vp(f, F, T, kind, params, breakpoints=()):
    def g(t):
        return 2.0 * f(t)

    def sigma2(t):
        return -np.expm1(-2.0 * F(t))

    return NoiseSchedule(f, g, T, kind, params, cumulative_drift=F, sigma2_closed=sigma2,
                         breakpoints=breakpoints)


def make_catalog(params, T: float = 1.0) -> NoiseSchedule:
    """Build one of the standard schedules. VP kinds satisfy ``g = 2 f`` exactly."""
    _finite_pos(T, "T")
    T = float(T)
    if isinstance(params, Linear):
        bmin = 0.1 / T if params.beta_min is None else float(params.beta_min)
        bmax = 20.0 / T if params.beta_max is None else float(params.beta_max)
        _finite_pos(bmin, "beta_min")
        _check(math.isfinite(bmax) and bmax > bmin, "must exceed beta_min", "beta_max")
        slope = (bmax - bmin) / T

        def f(t):
            return 0.5 * (bmin + slope * np.asarray(t, dtype=float))

        def F(t):
            t = np.asarray(t, dtype=float)
            return 0.5 * (bmin * t + 0.5 * slope * t * t)

        return _vp(f, F, T, "linear", {"beta_min": bmin, "beta_max": bmax})

    if isinstance(params, Cosine):
        s = params.s
        _finite_pos(s, "s")
        cap = 10.0 / T if params.max_drift is None else params.max_drift
        _finite_pos(cap, "max_drift")
        k = math.pi / (2.0 * (1.0 + s))
        th0 = s * k

        def f_raw(t):
            return (k / T) * np.tan(np.asarray(t, dtype=float) / T * k + th0)

        def F_raw(t):
            return math.log(math.cos(th0)) - np.log(np.cos(np.asarray(t, dtype=float) / T * k + th0))

        f, F, bps = _cap_drift(f_raw, F_raw, cap, T)
        return _vp(f, F, T, "cosine", {"s": s, "max_drift": cap}, bps)

    if isinstance(params, (Sigmoid, SigmoidApprox)):
        lo, hi, tau = params.theta_min, params.theta_max, params.tau
        _finite_pos(tau, "tau")
        _check(math.isfinite(lo), "must be finite", "theta_min")
        _check(math.isfinite(hi) and hi > lo, "must exceed theta_min", "theta_max")
        span = hi - lo

        def h(t):
            return (np.asarray(t, dtype=float) / T * span + lo) / tau

        def sig(x):
            return 0.5 * (1.0 + np.tanh(0.5 * x))

        rate = span / (2.0 * tau * T)
        if isinstance(params, SigmoidApprox):
            def f(t):
                return rate * sig(h(t))

            def F(t):
                return 0.5 * (np.logaddexp(0.0, h(t)) - np.logaddexp(0.0, h(0.0)))

            return _vp(f, F, T, "sigmoid-approx", _params_dict(params))

        cap = 10.0 / T if params.max_drift is None else params.max_drift
        _finite_pos(cap, "max_drift")
        s1 = float(sig(h(T)))
        s0 = float(sig(h(0.0)))

        def f_raw(t):
            st = sig(h(t))
            return rate * st * (1.0 - st) / (s1 - st)

        def F_raw(t):
            return -0.5 * np.log((s1 - sig(h(t))) / (s1 - s0))

        f, F, bps = _cap_drift(f_raw, F_raw, cap, T)
        out = dict(_params_dict(params))
        out["max_drift"] = cap
        return _vp(f, F, T, "sigmoid", out, bps)

    if isinstance(params, VeExponential):
        g0, lam = params.g0, params.lam
        _finite_pos(g0, "g0")
        _check(math.isfinite(lam), "must be finite", "lam")

        def g(t):
            return g0 * np.exp(lam * np.asarray(t, dtype=float))

        def sigma2(t):
            t = np.asarray(t, dtype=float)
            if lam == 0.0:
                return g0 * t
            return g0 * np.expm1(lam * t) / lam

        return NoiseSchedule(lambda t: np.zeros_like(np.asarray(t, dtype=float)), g, T,
                             "ve-exponential", {"g0": g0, "lam": lam},
                             cumulative_drift=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                             sigma2_closed=sigma2)

    if isinstance(params, Constant):
        fc, gc = params.f_const, params.g_const
        _check(isinstance(fc, (int, float)) and math.isfinite(fc) and fc >= 0, "must be >= 0", "f_const")
        _finite_pos(gc, "g_const")
        return _constant(float(fc), float(gc), T, "constant", {"f_const": fc, "g_const": gc})

    raise ValidationError(f"unknown catalog parameters {params!r}", "params")


def _constant(fc, gc, T, kind, params):
    def f(t):
        return np.full_like(np.asarray(t, dtype=float), fc)

    def g(t):
        return np.full_like(np.asarray(t, dtype=float), gc)

    def F(t):
        return fc * np.asarray(t, dtype=float)

    def sigma2(t):
        t = np.asarray(t, dtype=float)
        if fc == 0.0:
            return gc * t
        return -gc * np.expm1(-2.0 * fc * t) / (2.0 * fc)

    return NoiseSchedule(f, g, T, kind, params, cumulative_drift=F, sigma2_closed=sigma2)


def ou(T: float = 1.0) -> NoiseSchedule:
    """Ornstein-Uhlenbeck schedule ``f = 1, g = 2``."""
    _finite_pos(T, "T")
    return _constant(1.0, 2.0, float(T), "ou", {})


# ---------------------------------------------------------------- ACS


@dataclass(frozen=True)
class AcsParams:
    """Affine-coupled schedule ``f = theta g + omega`` with ``g(0) = g0``."""
    theta: float
    omega: float
    lam: float
    g0: float

    def __post_init__(self):
        for name in ("theta", "omega", "lam", "g0"):
            v = getattr(self, name)
            _check(isinstance(v, (int, float)) and math.isfinite(v), f"must be finite, got {v!r}", name)
        _check(self.theta >= 0, "must be >= 0", "theta")
        _check(self.omega >= 0, "must be >= 0", "omega")
        _check(self.lam > 0, "must be > 0", "lam")
        _check(self.g0 > 0, "must be > 0", "g0")


def _acs_growth(x, t):
    """``(e^{xt} - 1)/x`` with the ``x -> 0`` limit ``t``."""
    t = np.asarray(t, dtype=float)
    if abs(x) <= BRANCH_TOL:
        return t
    return np.expm1(x * t) / x


def make_acs(params: AcsParams, T: float = 1.0) -> NoiseSchedule:
    """Closed-form ACS schedule solving ``g' = -(2 theta g + 2 omega - lam) g``.

    With ``x = 2 omega - lam`` the solution is
    ``g = g0 / (e^{xt} + 2 theta g0 (e^{xt} - 1)/x)``; for ``|x| <= 1e-9`` the
    rational branch ``g0 / (1 + 2 theta g0 t)`` is used.
    """
    _finite_pos(T, "T")
    T = float(T)
    th, om, lam, g0 = params.theta, params.omega, params.lam, params.g0
    x = 2.0 * om - lam
    rational = abs(x) <= BRANCH_TOL

    def denom(t):
        t = np.asarray(t, dtype=float)
        if rational:
            return 1.0 + 2.0 * th * g0 * t
        return np.exp(x * t) + 2.0 * th * g0 * _acs_growth(x, t)

    ts = np.linspace(0.0, T, 2001)
    dv = denom(ts)
    if np.any(~(dv > 0)):
        bad = ts[np.argmax(~(dv > 0))]
        raise SingularScheduleError(f"ACS denominator vanishes near t={bad:.6g}", "params")

    def g(t):
        t = np.asarray(t, dtype=float)
        if rational:
            return g0 / (1.0 + 2.0 * th * g0 * t)
        if x > 0:
            # Divide through by e^{xt} so nothing overflows for large x t.
            shrink = np.exp(-x * t)
            return g0 * shrink / (1.0 + 2.0 * th * g0 * (-np.expm1(-x * t)) / x)
        return g0 / (np.exp(x * t) + 2.0 * th * g0 * np.expm1(x * t) / x)

    def G(t):
        t = np.asarray(t, dtype=float)
        # int_0^t g = log(1 + 2 theta g0 E e^{-xt}) / (2 theta), E e^{-xt} = (1 - e^{-xt})/x.
        damp = t if rational else -np.expm1(-x * t) / x
        if th == 0.0:
            return g0 * damp
        return np.log1p(2.0 * th * g0 * damp) / (2.0 * th)

    def f(t):
        return th * g(t) + om

    def F(t):
        return th * G(t) + om * np.asarray(t, dtype=float)

    sched = NoiseSchedule(f, g, T, "acs", {"theta": th, "omega": om, "lam": lam, "g0": g0},
                          cumulative_drift=F)
    sched.branch = "rational" if rational else "exponential"
    sched.integral_g = G
    return sched


def make_g_circle(f: Callable, lam: float, g0: float, T: float = 1.0) -> NoiseSchedule:
    """Diffusion ``g(t) = g0 exp(lam t - 2 int_0^t f)`` paired with the given drift."""
    _finite_pos(T, "T")
    _finite_pos(lam, "lam")
    _finite_pos(g0, "g0")
    T = float(T)
    fv = _as_vectorized(f)
    # Drift integral: adaptive quadrature at table edges, one panel inside a cell.
    edges = np.linspace(0.0, T, TABLE_CELLS + 1)
    F_edges = np.concatenate([[0.0], np.cumsum([integrate(fv, a, b) for a, b in zip(edges[:-1], edges[1:])])])

    def F(t):
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t)
        idx = np.clip(np.searchsorted(edges, tt, side="right") - 1, 0, len(edges) - 2)
        a = edges[idx]
        half = 0.5 * (tt - a)
        nodes = (0.5 * (tt + a))[:, None] + half[:, None] * _NODES
        out = F_edges[idx] + half * (np.asarray(fv(nodes), dtype=float) @ _WK)
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def g(t):
        t = np.asarray(t, dtype=float)
        return g0 * np.exp(lam * t - 2.0 * F(t))

    return NoiseSchedule(fv, g, T, "g-circle", {"lam": lam, "g0": g0}, cumulative_drift=F)


def make_custom(f: Callable, g: Callable, T: float, *, cumulative_drift=None, kind="custom",
                breakpoints=()) -> NoiseSchedule:
    """Wrap arbitrary evaluators; marginals come from the cached table."""
    return NoiseSchedule(f, g, T, kind, {}, cumulative_drift=cumulative_drift, breakpoints=breakpoints)


# ---------------------------------------------------------------- transforms


def reparameterize(schedule: NoiseSchedule, phi: Callable, dphi: Callable, horizon: float) -> NoiseSchedule:
    """Change reverse time by ``tau_1 = phi(tau_2)``.

    ``phi`` maps ``[0, horizon]`` onto ``[0, schedule.T]`` increasingly. The
    new schedule has ``f2(t) = f1(T1 - phi(T2 - t)) phi'(T2 - t)`` and the
    same for ``g2``, so its marginal at ``t`` equals the source marginal at
    ``T1 - phi(T2 - t)``.
    """
    _finite_pos(horizon, "horizon")
    T1, T2 = schedule.T, float(horizon)
    phi = _as_vectorized(phi)
    dphi = _as_vectorized(dphi)
    grid = np.linspace(0.0, T2, 2001)
    dv = np.asarray(dphi(grid), dtype=float)
    if np.any(~(dv > 0)):
        raise ValidationError("time map must be strictly increasing (derivative > 0)", "phi")
    if not math.isclose(float(phi(0.0)), 0.0, abs_tol=1e-12 * T1):
        raise ValidationError("time map must send 0 to 0", "phi")
    if not math.isclose(float(phi(T2)), T1, rel_tol=1e-12, abs_tol=1e-12):
        raise ValidationError("time map must send the new horizon to the old one", "phi")

    def src(t):
        return np.clip(T1 - phi(T2 - np.asarray(t, dtype=float)), 0.0, T1)

    def f(t):
        return schedule.f(src(t)) * dphi(T2 - np.asarray(t, dtype=float))

    def g(t):
        return schedule.g(src(t)) * dphi(T2 - np.asarray(t, dtype=float))

    def F(t):
        return schedule.cumulative_drift(src(t))

    def marginals(t):
        return schedule.coeffs(src(t))

    return NoiseSchedule(f, g, T2, "reparameterized", {}, cumulative_drift=F, marginals=marginals)


def snr_time_map(a: NoiseSchedule, b: NoiseSchedule, t: float) -> float:
    """Time ``tau`` on schedule ``a`` whose SNR equals that of ``b`` at ``t``.

    Bisection on the (decreasing) log-SNR curve of ``a``; raises
    :class:`CoverageError` when the target lies below ``a``'s terminal SNR.
    """
    t = float(t)
    if t == 0.0:
        b.marginal(t)
        return 0.0
    if a is b:
        b.marginal(t)
        return t
    target = b.log_snr(t)
    hi = a.T
    lo_snr_range = a.log_snr(hi)
    if target < lo_snr_range:
        rng = (math.exp(lo_snr_range), math.inf)
        raise CoverageError(
            f"SNR {math.exp(target):.6g} at t={t:g} is below the source range [{rng[0]:.6g}, inf)",
            snr_range=rng, offending=[t])
    if target == lo_snr_range:
        return hi
    # Shrink towards zero until the bracket contains the target.
    lo = hi
    while True:
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
        if a.log_snr(lo) >= target:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if a.log_snr(mid) >= target:
            lo = mid
        else:
            hi = mid
    # Pick the endpoint with the smaller residual.
    if abs(a.log_snr(lo) - target) <= abs(a.log_snr(hi) - target):
        return lo
    return hi


def map_score(score_a: Callable, a: NoiseSchedule, b: NoiseSchedule, t: float, x):
    """Score of schedule ``b`` at ``(t, x)`` from a score evaluator of ``a``."""
    if float(t) <= 0.0:
        raise DomainError("score translation needs t > 0")
    tau = snr_time_map(a, b, t)
    r = math.sqrt(a.marginal(tau).sigma2 / b.marginal(t).sigma2)
    return r * np.asarray(score_a(tau, r * np.asarray(x, dtype=float)))


def score_from_noise_predictor(eps, sigma2: float):
    """Convert a noise prediction to a score: ``s = -eps / sigma``."""
    if not sigma2 > 0:
        raise DomainError("noise-prediction conversion needs sigma^2 > 0")
    return -np.asarray(eps, dtype=float) / math.sqrt(sigma2)


# ---------------------------------------------------------------- JSON


def _json_acs(T, p):
    return make_acs(AcsParams(theta=p["theta"], omega=p["omega"], lam=p["lam"], g0=p["g0"]), T)


_JSON_BUILDERS = {
    "linear": lambda T, p: make_catalog(Linear(**p), T),
    "cosine": lambda T, p: make_catalog(Cosine(**p), T),
    "sigmoid": lambda T, p: make_catalog(Sigmoid(**p), T),
    "sigmoid-approx": lambda T, p: make_catalog(SigmoidApprox(**p), T),
    "ve-exponential": lambda T, p: make_catalog(VeExponential(**p), T),
    "constant": lambda T, p: make_catalog(Constant(**p), T),
    "ou": lambda T, p: ou(T),
    "acs": _json_acs,
}


def schedule_from_json(doc) -> NoiseSchedule:
    """Rebuild a schedule from ``{"kind", "T", "params"}`` (dict or JSON text)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", "schedule") from None
    if not isinstance(doc, dict):
        raise ValidationError("schedule document must be an object", "schedule")
    kind = doc.get("kind")
    if kind not in _JSON_BUILDERS:
        raise ValidationError(f"unknown schedule kind {kind!r}", "schedule.kind")
    T = doc.get("T", 1.0)
    if not isinstance(T, (int, float)) or isinstance(T, bool):
        raise ValidationError("must be a number", "schedule.T")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ValidationError("must be an object", "schedule.params")
    try:
        return _JSON_BUILDERS[kind](float(T), dict(params))
    except TypeError as exc:
        raise ValidationError(str(exc), "schedule.params") from None
    except KeyError as exc:
        raise ValidationError(f"missing parameter {exc}", "schedule.params") from None
