"""Scalar special functions and generic integration kernels.

Everything here is pure: evaluators passed in must be side-effect free.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, DomainError, NumericError, ValidationError

__all__ = [
    "UNBOUNDED",
    "Unbounded",
    "QuadratureSpec",
    "OdeGrid",
    "lambert_w0",
    "parallel_sum",
    "integrate",
    "cumulative_integral",
    "solve_ode",
]


class Unbounded:
    """Sentinel for an infinite quantity (infinite SNR, unbounded step size...).

    Compares greater than every float and converts to ``math.inf``.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __float__(self):
        return math.inf

    def __gt__(self, other):
        return not isinstance(other, Unbounded)

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, Unbounded)

    def __reduce__(self):
        return (Unbounded, ())


UNBOUNDED = Unbounded()


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.rtol > 0:
            raise ValidationError("tolerance must be positive", "rtol")
        if self.max_subdivisions < 1:
            raise ValidationError("need at least one subdivision", "max_subdivisions")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class OdeGrid:
    """Strictly increasing, nonnegative time points."""

    points: tuple

    def __init__(self, points):
        pts = tuple(float(p) for p in np.asarray(points, dtype=float).ravel())
        if len(pts) < 1:
            raise ValidationError("grid must contain at least one point", "points")
        if pts[0] < 0:
            raise ValidationError("first grid point must be >= 0", "points")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValidationError("grid must be strictly increasing", "points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, t0, t1, m):
        return cls(np.linspace(t0, t1, m))

    def __len__(self):
        return len(self.points)

    def as_array(self):
        return np.asarray(self.points)


# ---------------------------------------------------------------- Lambert W


def lambert_w0(z: float) -> float:
    """Principal branch of Lambert W on the nonnegative axis.

    Halley iteration from a log-asymptotic seed; at most 50 iterations.
    """
    z = float(z)
    if math.isnan(z) or z < 0:
        raise DomainError(f"lambert_w0 needs z >= 0, got {z}")
    if z == 0.0:
        return 0.0
    if math.isinf(z):
        return math.inf
    if z <= math.e:
        w = math.log1p(z) * (1.0 - math.log1p(math.log1p(z)) / (2.0 + math.log1p(z)))
    else:
        l1 = math.log(z)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(50):
        ew = math.exp(w)
        r = w * ew - z
        wp1 = w + 1.0
        step = r / (ew * wp1 - (w + 2.0) * r / (2.0 * wp1))
        w -= step
        if abs(step) <= 4e-16 * (1.0 + abs(w)):
            break
    # Halley lands within an ulp; one Newton polish removes the bias of the last step.
    ew = math.exp(w)
    w -= (w * ew - z) / (ew * (w + 1.0))
    return w


def parallel_sum(a, b):
    """``(1/a + 1/b)^-1`` with :data:`UNBOUNDED` acting as +infinity."""
    a_inf = a is UNBOUNDED
    b_inf = b is UNBOUNDED
    if a_inf and b_inf:
        return UNBOUNDED
    for name, v, inf in (("a", a, a_inf), ("b", b, b_inf)):
        if not inf and not (float(v) > 0 and math.isfinite(float(v))):
            raise DomainError(f"parallel_sum needs positive finite {name}, got {v!r}")
    if a_inf:
        return float(b)
    if b_inf:
        return float(a)
    a = float(a)
    b = float(b)
    return a * b / (a + b)


# ---------------------------------------------------------------- quadrature

# Gauss-Kronrod 7/15 nodes on [-1, 1] (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss points sit at odd positions of _XGK (indices 1, 3, 5, 7).
_GAUSS_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
_WG_FULL = np.array([_WG[0], _WG[1], _WG[2], _WG[3], _WG[2], _WG[1], _WG[0]])


def _evaluator(fn):
    """Wrap ``fn`` so it maps an array of abscissae to an array of values."""
    state = {}

    def call(x):
        mode = state.get("mode")
        if mode is None:
            try:
                y = np.asarray(fn(x), dtype=float)
                if y.shape == x.shape:
                    state["mode"] = "vector"
                    return y
            except Exception:
                pass
            state["mode"] = "scalar"
        elif mode == "vector":
            return np.asarray(fn(x), dtype=float)
        return np.array([float(fn(float(xi))) for xi in x])

    return call


def _gk15(call, a, b):
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    x = c + r * _NODES
    y = call(x)
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise NumericError("non-finite integrand value", where=float(bad))
    k = r * float(np.dot(_WK, y))
    g = r * float(np.dot(_WG_FULL, y[_GAUSS_IDX]))
    kabs = r * float(np.dot(_WK, np.abs(y)))
    return k, abs(k - g), kabs


def integrate(fn: Callable, a: float, b: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Adaptive Gauss-Kronrod (7/15) quadrature of ``fn`` over ``[a, b]``.

    ``fn`` may be vectorized (array in, array out) or scalar; vectorized
    evaluators are much faster. The worst interval is bisected until the
    summed error estimate meets ``spec.rtol`` relative to the integral.
    """
    a = float(a)
    b = float(b)
    if b < a:
        raise DomainError(f"integrate needs a <= b, got [{a}, {b}]")
    if a == b:
        return 0.0
    call = _evaluator(fn)
    k, err, kabs = _gk15(call, a, b)
    heap = [(-err, a, b, k, kabs)]
    total, total_err, total_abs = k, err, kabs
    for _ in range(spec.max_subdivisions):
        if total_err <= max(spec.rtol * abs(total), 50 * np.finfo(float).eps * total_abs) or total_err == 0.0:
            return total
        neg_err, lo, hi, k_old, kabs_old = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        k1, e1, a1 = _gk15(call, lo, mid)
        k2, e2, a2 = _gk15(call, mid, hi)
        total += k1 + k2 - k_old
        total_abs += a1 + a2 - kabs_old
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, lo, mid, k1, a1))
        heapq.heappush(heap, (-e2, mid, hi, k2, a2))
    # Recompute from the heap to shed accumulated rounding in the running sums.
    total = math.fsum(item[3] for item in heap)
    total_err = math.fsum(-item[0] for item in heap)
    if total_err <= max(spec.rtol * abs(total), 50 * np.finfo(float).eps * total_abs):
        return total
    raise NumericError(
        f"quadrature did not reach rtol={spec.rtol:g} in {spec.max_subdivisions} subdivisions "
        f"(estimate {total:.6g} +/- {total_err:.2g})",
        where=(a, b),
    )


def cumulative_integral(fn: Callable, ts: Sequence[float], start: float = 0.0,
                        spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """``[integrate(fn, start, t) for t in ts]`` computed segment by segment."""
    ts = np.asarray(ts, dtype=float)
    flat = ts.ravel()
    order = np.argsort(flat, kind="stable")
    out = np.empty_like(flat)
    acc = 0.0
    prev = float(start)
    for i in order:
        t = float(flat[i])
        if t < start:
            raise DomainError(f"cumulative_integral needs t >= {start}, got {t}")
        if t > prev:
            acc += integrate(fn, prev, t, spec)
            prev = t
        out[i] = acc
    return out.reshape(ts.shape)


# ---------------------------------------------------------------- ODEs

OVERFLOW_GUARD = 1e300


def solve_ode(rhs: Callable, y0, grid: OdeGrid, spec: QuadratureSpec = DEFAULT_QUADRATURE,
              max_step: float | None = None) -> np.ndarray:
    """Classical RK4 along ``grid``; returns an array of shape ``(len(grid), dim)``.

    Each grid interval is split into at least 8 equal substeps (more when
    ``max_step`` demands it). ``spec`` is accepted for interface symmetry
    with :func:`integrate`; the step rule, not the tolerance, fixes the work
    so trajectories are reproducible bit for bit.
    """
    del spec
    if not isinstance(grid, OdeGrid):
        grid = OdeGrid(grid)
    y = np.array(y0, dtype=float, ndmin=1)
    pts = grid.points
    out = np.empty((len(pts), y.size))
    out[0] = y
    for i in range(1, len(pts)):
        t0, t1 = pts[i - 1], pts[i]
        nsub = 8
        if max_step is not None:
            nsub = max(nsub, int(math.ceil((t1 - t0) / max_step)))
        h = (t1 - t0) / nsub
        t = t0
        for j in range(nsub):
            k1 = np.asarray(rhs(t, y), dtype=float)
            k2 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
            k3 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
            tn = t1 if j == nsub - 1 else t0 + (j + 1) * h
            k4 = np.asarray(rhs(tn, y + h * k3), dtype=float)
            y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y_new)) or np.max(np.abs(y_new)) > OVERFLOW_GUARD:
                raise DivergenceError("ODE solution diverged", where=t)
            y = y_new
            t = tn
        out[i] = y
    return out
