"""Analytic target distributions and their smoothed statistics.

For a target ``X*`` the forward marginal is ``X_t = alpha X* + sigma Z``.
Gaussian and isotropic-component Gaussian-mixture targets keep this family
closed, so scores, score Jacobians and Fisher information are available
exactly (Gaussian) or by 1D quadrature / Monte Carlo (mixtures).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import DomainError, NumericError, ValidationError
from .numerics import _NODES, _WK, UNBOUNDED, QuadratureSpec, integrate, parallel_sum

__all__ = [
    "GaussianTarget",
    "GmmTarget",
    "SmoothedMoments",
    "gaussian_score",
    "gaussian_moments",
    "gmm_logdensity_score_hessian",
    "gmm_moments",
    "gmm_moments_path",
    "kappa",
    "kappa_upper_gmm",
    "pl_bounds",
    "smoothed_moments",
    "InequalityCheck",
    "InequalityReport",
    "inequality_suite",
    "target_from_json",
]

MC_BLOCK = 4096


class GaussianTarget:
    """``N(mean, cov)``; ``cov`` may be a full SPD matrix or a vector of variances."""

    kind = "gaussian"

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        if mean.ndim != 1 or mean.size < 1:
            raise ValidationError("mean must be a nonempty vector", "mean")
        d = mean.size
        if cov.ndim == 1:
            if cov.size != d:
                raise ValidationError("variance vector length must match the mean", "cov")
            if np.any(~(cov > 0)) or np.any(~np.isfinite(cov)):
                raise ValidationError("variances must be positive and finite", "cov")
            self.diagonal = True
            self.eigvals = cov.copy()
            self.eigvecs = None
            self.cov = np.diag(cov)
        elif cov.ndim == 2:
            if cov.shape != (d, d):
                raise ValidationError(f"covariance must be {d}x{d}", "cov")
            if not np.allclose(cov, cov.T, rtol=1e-12, atol=0):
                raise ValidationError("covariance must be symmetric", "cov")
            off = cov - np.diag(np.diag(cov))
            if not np.any(off):
                return self.__init__(mean, np.diag(cov).copy())
            w, q = np.linalg.eigh(cov)
            if not np.all(w > 0):
                raise ValidationError("covariance must be positive-definite", "cov")
            self.diagonal = False
            self.eigvals = w
            self.eigvecs = q
            self.cov = 0.5 * (cov + cov.T)
        else:
            raise ValidationError("covariance must be a vector or a matrix", "cov")
        self.mean = mean
        self.d = d

    def __repr__(self):
        return f"GaussianTarget(d={self.d})"

    def _to_eig(self, x):
        return x if self.diagonal else x @ self.eigvecs

    def _from_eig(self, y):
        return y if self.diagonal else y @ self.eigvecs.T

    def smoothed_precision_eigs(self, alpha, sigma2):
        c = alpha * alpha * self.eigvals + sigma2
        if np.any(~(c > 0)):
            raise NumericError("smoothed covariance is singular", where=(alpha, sigma2))
        return 1.0 / c

    def score(self, alpha, sigma2, x):
        """``-(alpha^2 cov + sigma2 I)^{-1} (x - alpha mean)``; ``x`` is ``(d,)`` or ``(P, d)``."""
        prec = self.smoothed_precision_eigs(alpha, sigma2)
        r = self._to_eig(np.asarray(x, dtype=float) - alpha * self.mean)
        return -self._from_eig(r * prec)

    def smoothed_cov(self, alpha, sigma2):
        return alpha * alpha * self.cov + sigma2 * np.eye(self.d)

    def precision_matrix(self, alpha, sigma2):
        prec = self.smoothed_precision_eigs(alpha, sigma2)
        if self.diagonal:
            return np.diag(prec)
        return (self.eigvecs * prec) @ self.eigvecs.T

    def second_moment(self):
        """``E |X*|^2``."""
        return float(self.mean @ self.mean + np.sum(self.eigvals))

    def fisher_star(self):
        return float(np.sum(1.0 / self.eigvals))

    def slc_constants(self):
        """``(m*, M*) = (1/lambda_max, 1/lambda_min)`` of the covariance."""
        return 1.0 / float(np.max(self.eigvals)), 1.0 / float(np.min(self.eigvals))

    def to_dict(self):
        out = {"kind": "gaussian", "mean": self.mean.tolist()}
        if self.diagonal:
            out["cov_diag"] = self.eigvals.tolist()
        else:
            out["cov"] = self.cov.tolist()
        return out


class GmmTarget:
    """Mixture ``sum_i pi_i N(mu_i, nu^2 I)``."""

    kind = "gmm"

    def __init__(self, weights, means, nu):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        m = np.asarray(means, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if w.ndim != 1 or w.size < 1:
            raise ValidationError("weights must be a nonempty vector", "weights")
        if m.ndim != 2 or m.shape[0] != w.size:
            raise ValidationError("need one mean per weight", "means")
        if np.any(~(w > 0)) or abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValidationError("weights must be positive and sum to 1", "weights")
        if not np.all(np.isfinite(m)):
            raise ValidationError("means must be finite", "means")
        if not (isinstance(nu, (int, float)) and math.isfinite(nu) and nu > 0):
            raise ValidationError("component scale must be positive", "nu")
        self.weights = w
        self.log_weights = np.log(w)
        self.means = m
        self.nu = float(nu)
        self.d = m.shape[1]
        self.L = w.size

    def __repr__(self):
        return f"GmmTarget(L={self.L}, d={self.d}, nu={self.nu})"

    @property
    def mean_center(self):
        return self.weights @ self.means

    @property
    def mean(self):
        return self.mean_center

    def score(self, alpha, sigma2, x):
        v2 = alpha * alpha * self.nu ** 2 + sigma2
        if not v2 > 0:
            raise NumericError("smoothed component variance is zero", where=(alpha, sigma2))
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out = _kernels.gmm_score(np.atleast_2d(x), alpha, v2, self.means, self.log_weights)
        return out[0] if single else out

    def second_moment(self):
        return float(self.weights @ np.sum(self.means ** 2, axis=1) + self.d * self.nu ** 2)

    def fisher_star(self, **kw):
        return gmm_moments(self, 1.0, 0.0, **kw).J

    def to_dict(self):
        return {"kind": "gmm", "weights": self.weights.tolist(), "means": self.means.tolist(),
                "nu": self.nu}


def target_from_json(doc):
    """Build a target from ``{"kind": "gaussian"|"gmm", ...}`` (dict or JSON text)."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}", "target") from None
    if not isinstance(doc, dict):
        raise ValidationError("target document must be an object", "target")
    kind = doc.get("kind")
    try:
        if kind == "gaussian":
            if "cov_diag" in doc:
                return GaussianTarget(doc["mean"], doc["cov_diag"])
            return GaussianTarget(doc["mean"], doc["cov"])
        if kind == "gmm":
            return GmmTarget(doc["weights"], doc["means"], doc["nu"])
    except KeyError as exc:
        raise ValidationError(f"missing field {exc}", "target") from None
    except ValidationError as exc:
        raise ValidationError(exc.detail, f"target.{exc.field}" if exc.field else "target") from None
    raise ValidationError(f"unknown target kind {kind!r}", "target.kind")


@dataclass(frozen=True)
class SmoothedMoments:
    """Fisher information ``J = E|s|^2`` and ``H = E|grad s|_F^2``."""

    J: float
    H: float
    J_stderr: Optional[float] = None
    H_stderr: Optional[float] = None

    @property
    def exact(self):
        return self.J_stderr is None


# ---------------------------------------------------------------- Gaussian


def gaussian_score(target: GaussianTarget, alpha: float, sigma2: float, x):
    return target.score(alpha, sigma2, x)


def gaussian_moments(target: GaussianTarget, alpha: float, sigma2: float) -> SmoothedMoments:
    """``J = Tr A`` and ``H = Tr A^2`` with ``A = (alpha^2 cov + sigma2 I)^{-1}``."""
    prec = target.smoothed_precision_eigs(alpha, sigma2)
    return SmoothedMoments(float(np.sum(prec)), float(np.sum(prec * prec)))


# ---------------------------------------------------------------- mixtures


def _gmm_v2(target, alpha, sigma2):
    if sigma2 < 0:
        raise DomainError("sigma2 must be >= 0")
    v2 = alpha * alpha * target.nu ** 2 + sigma2
    if not v2 > 0:
        raise NumericError("smoothed component variance is zero", where=(alpha, sigma2))
    return v2


def gmm_logdensity_score_hessian(target: GmmTarget, alpha: float, sigma2: float, x):
    """Log density, score and Hessian of the smoothed mixture at one point ``x``.

    Posterior component weights are formed in log space; the score is
    ``(E[alpha M | x] - x)/v^2`` and the Hessian
    ``-I/v^2 + alpha^2 Cov(M | x)/v^4`` with ``v^2 = alpha^2 nu^2 + sigma2``.
    """
    v2 = _gmm_v2(target, alpha, sigma2)
    x = np.asarray(x, dtype=float).reshape(target.d)
    am = alpha * target.means
    r2 = np.sum((x - am) ** 2, axis=1)
    logc = target.log_weights - 0.5 * r2 / v2
    lse = logsumexp(logc)
    logp = float(lse - 0.5 * target.d * math.log(2.0 * math.pi * v2))
    w = np.exp(logc - lse)
    m_bar = w @ target.means
    score = (alpha * m_bar - x) / v2
    centered = target.means - m_bar
    cov_m = (centered * w[:, None]).T @ centered
    hess = -np.eye(target.d) / v2 + (alpha * alpha / (v2 * v2)) * cov_m
    return logp, score, hess


def _gmm_1d_fields(target, alpha, sigma2, v2, x):
    """Vectorized 1D density, score and second derivative of log density."""
    mu = target.means[:, 0]
    logc = target.log_weights[None, :] - 0.5 * (x[:, None] - alpha * mu[None, :]) ** 2 / v2
    lse = logsumexp(logc, axis=1)
    w = np.exp(logc - lse[:, None])
    m1 = w @ mu
    m2 = w @ (mu * mu)
    dens = np.exp(lse) / math.sqrt(2.0 * math.pi * v2)
    score = (alpha * m1 - x) / v2
    hess = -1.0 / v2 + (alpha * alpha / (v2 * v2)) * (m2 - m1 * m1)
    return dens, score, hess


def gmm_moments(target: GmmTarget, alpha: float, sigma2: float, method: str = "quadrature",
                nsamples: int = 100_000, seed: int = 0,
                spec: QuadratureSpec = QuadratureSpec(rtol=1e-11, max_subdivisions=2000)) -> SmoothedMoments:
    """Fisher information and score-Jacobian norm of the smoothed mixture.

    ``method="quadrature"`` (1D only) integrates over the smoothed means
    plus/minus 12 effective standard deviations. ``method="monte-carlo"``
    draws ``nsamples`` exact samples in fixed-size blocks, each block seeded
    from ``SeedSequence(seed).spawn``, and reports standard errors.
    """
    v2 = _gmm_v2(target, alpha, sigma2)
    if method == "quadrature":
        if target.d != 1:
            raise ValidationError("quadrature moments need d = 1", "method")
        v = math.sqrt(v2)
        centers = alpha * target.means[:, 0]
        lo = float(np.min(centers)) - 12.0 * v
        hi = float(np.max(centers)) + 12.0 * v
        # Split at the component centers so every peak sits on a panel edge.
        cuts = np.unique(np.concatenate([[lo, hi], centers]))
        J = H = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            J += integrate(lambda x: _j_integrand(target, alpha, sigma2, v2, x), a, b, spec)
            H += integrate(lambda x: _h_integrand(target, alpha, sigma2, v2, x), a, b, spec)
        return SmoothedMoments(J, H)
    if method in ("monte-carlo", "mc"):
        if int(nsamples) < 100:
            raise ValidationError("Monte Carlo needs at least 100 samples", "nsamples")
        return _gmm_moments_mc(target, alpha, v2, int(nsamples), int(seed))
    raise ValidationError(f"unknown method {method!r}", "method")


def _j_integrand(target, alpha, sigma2, v2, x):
    dens, s, _ = _gmm_1d_fields(target, alpha, sigma2, v2, np.atleast_1d(x))
    return dens * s * s


def _h_integrand(target, alpha, sigma2, v2, x):
    dens, _, h = _gmm_1d_fields(target, alpha, sigma2, v2, np.atleast_1d(x))
    return dens * h * h


PANELS_PER_SCALE = 2
PANEL_BATCH = 128


def gmm_moments_path(target: GmmTarget, alphas, sigma2s):
    """``(J, H)`` arrays for a 1D mixture at many ``(alpha, sigma^2)`` pairs.

    Fixed composite 15-point Kronrod rule with panels no wider than ``v/2``
    over the smoothed means plus/minus 12 ``v``; every time point uses the
    same panel count so the work is batched. Agrees with the adaptive
    :func:`gmm_moments` to near machine precision.
    """
    if target.d != 1:
        raise ValidationError("panel moments need d = 1", "target")
    alphas = np.asarray(alphas, dtype=float).ravel()
    sigma2s = np.asarray(sigma2s, dtype=float).ravel()
    v2 = alphas ** 2 * target.nu ** 2 + sigma2s
    if np.any(~(v2 > 0)):
        raise NumericError("smoothed component variance is zero")
    v = np.sqrt(v2)
    mu = target.means[:, 0]
    lo = alphas * mu.min() - 12.0 * v
    hi = alphas * mu.max() + 12.0 * v
    panels = int(math.ceil(PANELS_PER_SCALE * float(np.max((hi - lo) / v))))
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    u = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * _NODES[None, :]
    w = (half[:, None] * _WK[None, :]).ravel()
    u = u.ravel()
    J = np.empty(alphas.size)
    H = np.empty(alphas.size)
    for start in range(0, alphas.size, PANEL_BATCH):
        sl = slice(start, start + PANEL_BATCH)
        a, vv2, span = alphas[sl, None], v2[sl, None], (hi - lo)[sl, None]
        x = lo[sl, None] + span * u[None, :]
        logc = target.log_weights[None, None, :] - 0.5 * (x[..., None] - a[..., None] * mu) ** 2 / vv2[..., None]
        mx = logc.max(axis=2, keepdims=True)
        ec = np.exp(logc - mx)
        tot = ec.sum(axis=2)
        m1 = (ec @ mu) / tot
        m2 = (ec @ (mu * mu)) / tot
        dens = tot * np.exp(mx[..., 0]) / np.sqrt(2.0 * math.pi * vv2)
        score = (a * m1 - x) / vv2
        hess = -1.0 / vv2 + (a * a / (vv2 * vv2)) * (m2 - m1 * m1)
        J[sl] = span[:, 0] * ((dens * score * score) @ w)
        H[sl] = span[:, 0] * ((dens * hess * hess) @ w)
    return J, H


def _gmm_block_sums(target, alpha, v2, n, rng):
    comp = rng.choice(target.L, size=n, p=target.weights)
    x = alpha * target.means[comp] + math.sqrt(v2) * rng.standard_normal((n, target.d))
    am = alpha * target.means
    logc = target.log_weights[None, :] - 0.5 * (
        np.sum(x * x, axis=1)[:, None] - 2.0 * x @ am.T + np.sum(am * am, axis=1)[None, :]) / v2
    lse = logsumexp(logc, axis=1)
    w = np.exp(logc - lse[:, None])
    m_bar = w @ target.means
    score = (alpha * m_bar - x) / v2
    j = np.sum(score * score, axis=1)
    # |H|_F^2 = d/v^4 - 2 c Tr C / v^2 + c^2 |C|_F^2 with C = Cov(M | x), c = alpha^2/v^4.
    c = alpha * alpha / (v2 * v2)
    second = np.einsum("pl,li,lj->pij", w, target.means, target.means)
    cov = second - m_bar[:, :, None] * m_bar[:, None, :]
    tr = np.einsum("pii->p", cov)
    fro = np.einsum("pij,pij->p", cov, cov)
    h = target.d / (v2 * v2) - 2.0 * c * tr / v2 + c * c * fro
    return np.array([j.sum(), (j * j).sum(), h.sum(), (h * h).sum(), n], dtype=float)


def _gmm_moments_mc(target, alpha, v2, nsamples, seed):
    nblocks = -(-nsamples // MC_BLOCK)
    children = np.random.SeedSequence(seed).spawn(nblocks)
    tot = np.zeros(5)
    for k, child in enumerate(children):
        n = min(MC_BLOCK, nsamples - k * MC_BLOCK)
        tot += _gmm_block_sums(target, alpha, v2, n, np.random.default_rng(child))
    n = tot[4]
    J = tot[0] / n
    H = tot[2] / n
    J_se = math.sqrt(max(tot[1] / n - J * J, 0.0) / (n - 1))
    H_se = math.sqrt(max(tot[3] / n - H * H, 0.0) / (n - 1))
    return SmoothedMoments(float(J), float(H), J_se, H_se)


def smoothed_moments(target, alpha, sigma2, **kw) -> SmoothedMoments:
    """Dispatch to :func:`gaussian_moments` or :func:`gmm_moments`."""
    if isinstance(target, GaussianTarget):
        return gaussian_moments(target, alpha, sigma2)
    if isinstance(target, GmmTarget):
        if "method" not in kw and target.d != 1:
            kw["method"] = "monte-carlo"
        return gmm_moments(target, alpha, sigma2, **kw)
    raise ValidationError(f"unsupported target {target!r}", "target")


# ---------------------------------------------------------------- constants


def kappa(target) -> float:
    """Problem constant bounding ``J^2/H`` below by ``d/kappa^2``."""
    if isinstance(target, GaussianTarget):
        return float(np.max(target.eigvals) / np.min(target.eigvals))
    if isinstance(target, GmmTarget):
        m = target.means
        diff = m[:, None, :] - m[None, :, :]
        spread = float(np.max(np.sum(diff * diff, axis=2)))
        centered = m - target.mean_center
        var = float(target.weights @ np.sum(centered ** 2, axis=1))
        nu2 = target.nu ** 2
        return math.sqrt(1.0 + spread / (4.0 * nu2)) * (1.0 + var / (nu2 * target.d))
    raise ValidationError(f"unsupported target {target!r}", "target")


def kappa_upper_gmm(target: GmmTarget) -> float:
    """``(1 + R^2/nu^2)(1 + R^2/(d nu^2))`` with ``R`` the largest distance to the mean center."""
    centered = target.means - target.mean_center
    r2 = float(np.max(np.sum(centered ** 2, axis=1)))
    q = r2 / target.nu ** 2
    return (1.0 + q) * (1.0 + q / target.d)


def pl_bounds(m_star: float, M_star: float, alpha: float, sigma2: float):
    """Strong log-concavity and smoothness constants of the smoothed density.

    ``alpha = 0`` is accepted as the pure-noise limit.
    """
    for name, v in (("m_star", m_star), ("M_star", M_star)):
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValidationError("must be positive and finite", name)
    if m_star > M_star:
        raise ValidationError("must not exceed M_star", "m_star")
    if not (math.isfinite(alpha) and alpha >= 0):
        raise ValidationError("must be >= 0", "alpha")
    if not (math.isfinite(sigma2) and sigma2 >= 0):
        raise ValidationError("must be >= 0", "sigma2")
    if alpha == 0 and sigma2 == 0:
        raise ValidationError("alpha and sigma2 cannot both vanish", "sigma2")
    noise = UNBOUNDED if sigma2 == 0 else 1.0 / sigma2

    def scaled(v):
        return UNBOUNDED if alpha == 0 else v / (alpha * alpha)

    return float(parallel_sum(scaled(m_star), noise)), float(parallel_sum(scaled(M_star), noise))


# ---------------------------------------------------------------- inequality suite

EQUALITY_SLACK = 1e-10


@dataclass
class InequalityCheck:
    name: str
    t: float
    lhs: float
    rhs: float
    margin: float
    status: str

    def to_dict(self):
        return {"name": self.name, "t": self.t, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "status": self.status}


@dataclass
class InequalityReport:
    checks: list
    kappa: float
    kappa_upper: Optional[float] = None
    target: dict = field(default_factory=dict)
    schedule: Optional[dict] = None

    @property
    def passed(self):
        return all(c.status == "pass" for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if c.status == "fail"]

    @property
    def inconclusive(self):
        return [c for c in self.checks if c.status == "inconclusive"]

    def summary(self):
        out = {}
        for c in self.checks:
            s = out.setdefault(c.name, {"pass": 0, "fail": 0, "inconclusive": 0, "min_margin": math.inf})
            s[c.status] += 1
            s["min_margin"] = min(s["min_margin"], c.margin)
        return out

    def to_dict(self):
        return {"kappa": self.kappa, "kappa_upper": self.kappa_upper, "passed": self.passed,
                "target": self.target, "schedule": self.schedule,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _judge(name, t, lhs, rhs, se=0.0):
    """Check ``lhs <= rhs`` with a relative equality slack."""
    margin = rhs - lhs
    scale = max(abs(lhs), abs(rhs))
    if se and se > 0.1 * abs(margin):
        status = "inconclusive"
    elif margin >= -EQUALITY_SLACK * scale:
        status = "pass"
    else:
        status = "fail"
    return InequalityCheck(name, float(t), float(lhs), float(rhs), float(margin), status)


def inequality_suite(target, schedule, grid, **moment_kw) -> InequalityReport:
    """Evaluate the Fisher-information inequalities at every grid time.

    Checks: ``J^2 <= d H`` (entropy-power concavity), ``J <= PS(J*/alpha^2,
    d/sigma^2)`` (Blachman-Stam), ``J >= d^2 / E|X_t|^2`` (Cramer-Rao), the
    terminal squeeze ``(d - alpha^2 E|X*|^2/sigma^2)/sigma^2 <= J_T <=
    d/sigma^2`` and ``d/kappa^2 <= J^2/H <= d``.
    """
    ts = np.asarray(getattr(grid, "points", grid), dtype=float)
    d = target.d
    k = kappa(target)
    k_up = kappa_upper_gmm(target) if isinstance(target, GmmTarget) else None
    m2 = target.second_moment()
    star = smoothed_moments(target, 1.0, 0.0, **moment_kw)
    checks = []
    for t in ts:
        m = schedule.marginal(float(t))
        a, s2 = m.alpha, m.sigma2
        mom = smoothed_moments(target, a, s2, **moment_kw)
        J, H = mom.J, mom.H
        sJ = mom.J_stderr or 0.0
        sH = mom.H_stderr or 0.0
        checks.append(_judge("entropy_power", t, J * J, d * H, math.hypot(2 * J * sJ, d * sH)))
        bs = parallel_sum(star.J / (a * a), UNBOUNDED if s2 == 0 else d / s2)
        checks.append(_judge("blachman_stam", t, J, float(bs), math.hypot(sJ, star.J_stderr or 0.0)))
        ex2 = a * a * m2 + s2 * d
        checks.append(_judge("crlb", t, d * d / ex2, J, sJ))
        ratio = J * J / H
        ratio_se = ratio * math.hypot(2 * sJ / J, sH / H)
        checks.append(_judge("kappa_lower", t, d / (k * k), ratio, ratio_se))
        checks.append(_judge("kappa_upper", t, ratio, float(d), ratio_se))
        if t == ts[-1] and s2 > 0:
            checks.append(_judge("terminal_lower", t, (d - a * a * m2 / s2) / s2, J, sJ))
            checks.append(_judge("terminal_upper", t, J, d / s2, sJ))
    sched_doc = None
    try:
        sched_doc = schedule.to_dict()
    except ValidationError:
        pass
    return InequalityReport(checks, k, k_up, target.to_dict(), sched_doc)
