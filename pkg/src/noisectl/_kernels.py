"""Hot inner loops with a numba backend and a pure-numpy fallback.

The backend is picked once at import time. Set ``NOISECTL_NUMBA=0`` to force
the numpy path (numba is also skipped when it is not installed). Both
backends produce the same integer hash stream; floating-point results agree
to a few ulps.
"""

from __future__ import annotations

import math
import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO53_INV = 1.0 / 9007199254740992.0


def _want_numba():
    flag = os.environ.get("NOISECTL_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------- numpy backend


def _mix_np(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _normals_np(seed, step, path0, npaths, d):
    with np.errstate(over="ignore"):
        base = _mix_np(np.uint64(seed) + _GOLDEN)
        base = _mix_np(base ^ (np.uint64(step) * _GOLDEN + np.uint64(1)))
        paths = np.arange(path0, path0 + npaths, dtype=np.uint64)
        hp = _mix_np(base ^ (paths * _GOLDEN + np.uint64(2)))
        coords = np.arange(d, dtype=np.uint64)
        h = _mix_np(hp[:, None] ^ (coords[None, :] * _GOLDEN + np.uint64(3)))
        a = _mix_np(h + _GOLDEN)
        b = _mix_np(h + _GOLDEN * np.uint64(2))
    # 53-bit uniforms; u1 in (0, 1] keeps the logarithm finite.
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO53_INV
    u2 = (b >> np.uint64(11)).astype(np.float64) * _TWO53_INV
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def _gmm_score_np(x, alpha, v2, means, logw):
    # x: (P, d); means: (L, d). Explicit sums keep each row independent of the batch.
    am = alpha * means
    diff = x[:, None, :] - am[None, :, :]
    logits = logw[None, :] - 0.5 * np.sum(diff * diff, axis=2) / v2
    mx = np.max(logits, axis=1, keepdims=True)
    w = np.exp(logits - mx)
    post = np.sum(w[:, :, None] * am[None, :, :], axis=1)
    return (post / np.sum(w, axis=1, keepdims=True) - x) / v2


def _ei_update_np(x, score, noise, a, b, sv):
    return a * x + b * score + sv * noise


# ---------------------------------------------------------------- numba backend

BACKEND = "numpy"
normals = _normals_np
gmm_score = _gmm_score_np
ei_update = _ei_update_np

if _want_numba():
    try:
        import numba
    except ImportError:  # pragma: no cover - depends on environment
        numba = None
    if numba is not None:
        _U_GOLDEN = np.uint64(0x9E3779B97F4A7C15)

        @numba.njit(cache=True, inline="always")
        def _mix_nb(z):
            z = z ^ (z >> np.uint64(30))
            z = z * np.uint64(0xBF58476D1CE4E5B9)
            z = z ^ (z >> np.uint64(27))
            z = z * np.uint64(0x94D049BB133111EB)
            return z ^ (z >> np.uint64(31))

        @numba.njit(cache=True, nogil=True)
        def _normals_nb(seed, step, path0, npaths, d):
            g = np.uint64(0x9E3779B97F4A7C15)
            out = np.empty((npaths, d))
            base = _mix_nb(np.uint64(seed) + g)
            base = _mix_nb(base ^ (np.uint64(step) * g + np.uint64(1)))
            for i in range(npaths):
                hp = _mix_nb(base ^ (np.uint64(path0 + i) * g + np.uint64(2)))
                for j in range(d):
                    h = _mix_nb(hp ^ (np.uint64(j) * g + np.uint64(3)))
                    a = _mix_nb(h + g)
                    b = _mix_nb(h + g * np.uint64(2))
                    u1 = (float(a >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)
                    u2 = float(b >> np.uint64(11)) * (1.0 / 9007199254740992.0)
                    out[i, j] = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
            return out

        @numba.njit(cache=True, nogil=True)
        def _gmm_score_nb(x, alpha, v2, means, logw):
            npaths, d = x.shape
            ncomp = means.shape[0]
            out = np.empty((npaths, d))
            logits = np.empty(ncomp)
            for i in range(npaths):
                mx = -np.inf
                for k in range(ncomp):
                    s = 0.0
                    for j in range(d):
                        r = x[i, j] - alpha * means[k, j]
                        s += r * r
                    logits[k] = logw[k] - 0.5 * s / v2
                    if logits[k] > mx:
                        mx = logits[k]
                tot = 0.0
                for k in range(ncomp):
                    logits[k] = math.exp(logits[k] - mx)
                    tot += logits[k]
                for j in range(d):
                    acc = 0.0
                    for k in range(ncomp):
                        acc += logits[k] * alpha * means[k, j]
                    out[i, j] = (acc / tot - x[i, j]) / v2
            return out

        @numba.njit(cache=True, nogil=True)
        def _ei_update_nb(x, score, noise, a, b, sv):
            out = np.empty_like(x)
            for i in range(x.shape[0]):
                for j in range(x.shape[1]):
                    out[i, j] = a * x[i, j] + b * score[i, j] + sv * noise[i, j]
            return out

        def normals(seed, step, path0, npaths, d):  # noqa: F811
            return _normals_nb(np.uint64(seed), np.uint64(step), np.int64(path0),
                               int(npaths), int(d))

        def gmm_score(x, alpha, v2, means, logw):  # noqa: F811
            return _gmm_score_nb(np.ascontiguousarray(x, dtype=np.float64), float(alpha),
                                 float(v2), np.ascontiguousarray(means, dtype=np.float64),
                                 np.ascontiguousarray(logw, dtype=np.float64))

        def ei_update(x, score, noise, a, b, sv):  # noqa: F811
            return _ei_update_nb(x, score, noise, float(a), float(b), float(sv))

        BACKEND = "numba"


NUMPY_KERNELS = {"normals": _normals_np, "gmm_score": _gmm_score_np, "ei_update": _ei_update_np}
