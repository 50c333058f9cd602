"""Exponential-integrator sampler for the reverse SDE.

Reverse time ``tau = T - t`` runs from 0 to ``T``. On each step the score is
frozen at the step's start state and the remaining linear SDE
``dY = (f Y + g s) dtau + sqrt(g) dW`` is integrated exactly, giving
``Y <- A Y + B s + sqrt(V) xi``.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import CoverageError, DivergenceError, NumericError, ValidationError
from .numerics import QuadratureSpec, integrate
from .schedules import NoiseSchedule, snr_time_map
from .targets import GaussianTarget, GmmTarget

__all__ = [
    "SamplerConfig",
    "EiStepCoeffs",
    "GaussianChainState",
    "ei_step_coeffs",
    "step_times",
    "sample_paths",
    "propagate_gaussian",
    "sample_paths_with_mapped_score",
    "affine_score_parts",
    "write_samples_csv",
    "write_samples_binary",
    "read_samples_binary",
]

CHUNK_PATHS = 32768
COEFF_QUADRATURE = QuadratureSpec(rtol=1e-13, max_subdivisions=400)
BINARY_MAGIC = b"NCTLSMPL"
BINARY_VERSION = 1
_HEADER = struct.Struct("<8sIQQ")


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters; ``delta`` stops the chain at forward time ``delta`` instead of 0."""

    n: int
    schedule: NoiseSchedule
    target: object
    paths: int = 1
    seed: int = 0
    delta: float = 0.0
    jobs: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("must be a positive integer", "n")
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValidationError("must be a positive integer", "paths")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValidationError("must fit in 64 bits", "seed")
        if not (0.0 <= self.delta < self.schedule.T):
            raise ValidationError("must lie in [0, T)", "delta")
        if self.jobs < 1:
            raise ValidationError("must be >= 1", "jobs")

    @property
    def T(self):
        return self.schedule.T

    @property
    def h(self):
        return (self.T - self.delta) / self.n


@dataclass(frozen=True)
class EiStepCoeffs:
    A: float
    B: float
    V: float


@dataclass
class GaussianChainState:
    mean: np.ndarray
    cov: np.ndarray

    def to_dict(self):
        return {"kind": "gaussian-chain-state", "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["cov"], dtype=float))


def step_times(config: SamplerConfig) -> np.ndarray:
    """Forward times ``t_k = T - tau_k`` for ``k = 0..n`` (decreasing)."""
    taus = np.arange(config.n + 1) * config.h
    taus[-1] = config.T - config.delta
    return config.T - taus


def ei_step_coeffs(schedule: NoiseSchedule, tau_k: float, tau_next: float) -> EiStepCoeffs:
    """Exact one-step coefficients over reverse times ``[tau_k, tau_next]``.

    In forward time ``s`` in ``[t_lo, t_hi] = [T - tau_next, T - tau_k]``:
    ``A = alpha_lo/alpha_hi``, ``B = int g(s) e^{F(s) - F(t_lo)} ds`` and
    ``V = int g(s) e^{2(F(s) - F(t_lo))} ds`` with ``F = int_0 f``.
    """
    T = schedule.T
    if not (0.0 <= tau_k < tau_next <= T):
        raise ValidationError(f"need 0 <= tau_k < tau_next <= T, got ({tau_k}, {tau_next})", "tau")
    t_hi = T - tau_k
    t_lo = T - tau_next
    F_lo = float(schedule.cumulative_drift(t_lo))
    F_hi = float(schedule.cumulative_drift(t_hi))

    def growth(s):
        return np.exp(np.asarray(schedule.cumulative_drift(s), dtype=float) - F_lo)

    A = math.exp(F_hi - F_lo)
    B = integrate(lambda s: np.asarray(schedule.g(s)) * growth(s), t_lo, t_hi, COEFF_QUADRATURE)
    V = integrate(lambda s: np.asarray(schedule.g(s)) * growth(s) ** 2, t_lo, t_hi, COEFF_QUADRATURE)
    return EiStepCoeffs(A, B, V)


def _plan(config: SamplerConfig):
    ts = step_times(config)
    taus = config.T - ts
    coeffs = [ei_step_coeffs(config.schedule, float(taus[k]), float(taus[k + 1])) for k in range(config.n)]
    return ts, coeffs


# ---------------------------------------------------------------- scores


def _gaussian_score_rows(target: GaussianTarget, alpha, sigma2, x):
    """Row-wise score with a fixed summation order (independent of chunking)."""
    prec = target.smoothed_precision_eigs(alpha, sigma2)
    r = x - alpha * target.mean
    if target.diagonal:
        return -r * prec
    q = target.eigvecs
    d = target.d
    y = np.zeros_like(r)
    for i in range(d):
        y += r[:, i:i + 1] * q[i][None, :]
    y *= prec
    out = np.zeros_like(r)
    for i in range(d):
        out += y[:, i:i + 1] * q[:, i][None, :]
    return -out


def native_score(config: SamplerConfig) -> Callable:
    """Score ``(t, x) -> s_t(x)`` for the configured target and schedule."""
    target = config.target
    sched = config.schedule

    def score(t, x):
        m = sched.marginal(t)
        if isinstance(target, GaussianTarget):
            return _gaussian_score_rows(target, m.alpha, m.sigma2, x)
        if isinstance(target, GmmTarget):
            return target.score(m.alpha, m.sigma2, x)
        raise ValidationError(f"unsupported target {target!r}", "target")

    return score


# ---------------------------------------------------------------- paths


def _run_chunk(config, ts, coeffs, score, path0, npaths):
    d = config.target.d
    sT = math.sqrt(config.schedule.marginal(float(ts[0])).sigma2)
    x = sT * _kernels.normals(config.seed, 0, path0, npaths, d)
    for k, c in enumerate(coeffs):
        s = np.asarray(score(float(ts[k]), x), dtype=float)
        xi = _kernels.normals(config.seed, k + 1, path0, npaths, d)
        x = _kernels.ei_update(x, s, xi, c.A, c.B, math.sqrt(c.V))
        if not np.all(np.isfinite(x)):
            raise DivergenceError("sampler state became non-finite", where=k)
    return x


def _simulate(config: SamplerConfig, score: Callable) -> np.ndarray:
    ts, coeffs = _plan(config)
    # Touch every marginal once so worker threads only read the memo.
    for t in ts:
        config.schedule.marginal(float(t))
    starts = list(range(0, config.paths, CHUNK_PATHS))

    def work(p0):
        return _run_chunk(config, ts, coeffs, score, p0, min(CHUNK_PATHS, config.paths - p0))

    if config.jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(config.jobs) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(p0) for p0 in starts]
    return np.concatenate(parts, axis=0)


def sample_paths(config: SamplerConfig) -> np.ndarray:
    """Terminal samples, shape ``(paths, d)``.

    Starts from ``N(0, sigma_T^2 I)``; noise for path ``p``, step ``k`` and
    coordinate ``j`` is a hash of ``(seed, k, p, j)``, so results do not
    depend on chunking or ``jobs``.
    """
    return _simulate(config, native_score(config))


def sample_paths_with_mapped_score(config: SamplerConfig, source_schedule: NoiseSchedule,
                                   source_score: Optional[Callable] = None) -> np.ndarray:
    """Sample under ``config.schedule`` using a score defined for ``source_schedule``.

    Each query ``(t, x)`` is answered by ``r s_a(tau, r x)`` where ``tau``
    matches the SNR at ``t`` and ``r = sigma_a(tau)/sigma(t)``.
    """
    score = mapped_score(config, source_schedule, source_score)
    return _simulate(config, score)


def mapped_score(config, source_schedule, source_score=None):
    sched = config.schedule
    ts = step_times(config)[:-1]
    if source_schedule is sched:
        return native_score(config) if source_score is None else source_score
    if source_score is None:
        src_cfg = SamplerConfig(config.n, source_schedule, config.target, seed=config.seed)
        source_score = native_score(src_cfg)
    taus = {}
    offending = []
    rng = None
    for k, t in enumerate(ts):
        try:
            taus[float(t)] = snr_time_map(source_schedule, sched, float(t))
        except CoverageError as exc:
            offending.append(k)
            rng = exc.snr_range
    if offending:
        raise CoverageError(f"source schedule cannot cover the SNR at steps {offending}",
                            snr_range=rng, offending=offending)
    ratios = {t: math.sqrt(source_schedule.marginal(tau).sigma2 / sched.marginal(t).sigma2)
              for t, tau in taus.items()}

    def score(t, x):
        tau = taus.get(t)
        if tau is None:
            tau = snr_time_map(source_schedule, sched, t)
            r = math.sqrt(source_schedule.marginal(tau).sigma2 / sched.marginal(t).sigma2)
        else:
            r = ratios[t]
        return r * np.asarray(source_score(tau, r * np.asarray(x)))

    return score


# ---------------------------------------------------------------- exact laws


def affine_score_parts(score: Callable, t: float, d: int):
    """``(C, c)`` with ``score(t, x) = C x + c`` for an affine score."""
    c = np.asarray(score(t, np.zeros((1, d))), dtype=float).reshape(d)
    cols = np.asarray(score(t, np.eye(d)), dtype=float) - c[None, :]
    return cols.T, c


def propagate_gaussian(config: SamplerConfig, source_schedule: Optional[NoiseSchedule] = None,
                       source_score: Optional[Callable] = None) -> GaussianChainState:
    """Exact law of the chain for a Gaussian target (no randomness).

    With the frozen score ``C_k x + c_k`` each step is the affine map
    ``M = A I + B C_k``: ``mean <- M mean + B c_k``, ``cov <- M cov M^T + V I``.
    """
    target = config.target
    if not isinstance(target, GaussianTarget):
        raise ValidationError("exact propagation needs a Gaussian target", "target")
    d = target.d
    ts, coeffs = _plan(config)
    if source_schedule is not None:
        score = mapped_score(config, source_schedule, source_score)
    else:
        score = None
    mean = np.zeros(d)
    cov = config.schedule.marginal(float(ts[0])).sigma2 * np.eye(d)
    eye = np.eye(d)
    for k, c in enumerate(coeffs):
        t = float(ts[k])
        if score is None:
            m = config.schedule.marginal(t)
            C = -target.precision_matrix(m.alpha, m.sigma2)
            cvec = -C @ (m.alpha * target.mean)
        else:
            C, cvec = affine_score_parts(score, t, d)
        M = c.A * eye + c.B * C
        mean = M @ mean + c.B * cvec
        cov = M @ cov @ M.T + c.V * eye
        cov = 0.5 * (cov + cov.T)
    w = np.linalg.eigvalsh(cov)
    if w[0] < -1e-12:
        raise NumericError("propagated covariance lost positive semidefiniteness", where=float(w[0]))
    return GaussianChainState(mean, cov)


# ---------------------------------------------------------------- export


def write_samples_csv(path, samples) -> None:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    header = ",".join(f"x{j}" for j in range(samples.shape[1]))
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, samples, fmt="%.17g", delimiter=",")
    except OSError as exc:
        raise OSError(f"cannot write samples to {path}: {exc.strerror}") from exc


def write_samples_binary(path, samples) -> None:
    """Header (magic, version, paths, d) followed by row-major little-endian float64."""
    samples = np.ascontiguousarray(np.atleast_2d(np.asarray(samples, dtype="<f8")))
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, samples.shape[0], samples.shape[1]))
            fh.write(samples.tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"cannot write samples to {path}: {exc.strerror}") from exc


def read_samples_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, paths, d = _HEADER.unpack(head)
        if magic != BINARY_MAGIC or version != BINARY_VERSION:
            raise ValidationError("not a noisectl sample file", "path")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != paths * d:
        raise ValidationError("truncated sample file", "path")
    return data.reshape(paths, d).astype(float)
