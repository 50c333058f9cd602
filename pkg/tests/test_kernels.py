import os
import subprocess
import sys

import numpy as np
import pytest

from noisectl import _kernels
from noisectl._kernels import NUMPY_KERNELS


def test_normals_backends_agree():
    a = _kernels.normals(123, 4, 0, 500, 3)
    b = NUMPY_KERNELS["normals"](123, 4, 0, 500, 3)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_normals_chunk_consistent():
    full = NUMPY_KERNELS["normals"](7, 2, 0, 100, 2)
    tail = NUMPY_KERNELS["normals"](7, 2, 60, 40, 2)
    assert np.array_equal(full[60:], tail)


def test_normals_streams_differ():
    a = NUMPY_KERNELS["normals"](1, 0, 0, 50, 1)
    assert not np.array_equal(a, NUMPY_KERNELS["normals"](2, 0, 0, 50, 1))
    assert not np.array_equal(a, NUMPY_KERNELS["normals"](1, 1, 0, 50, 1))


def test_normals_moments():
    z = NUMPY_KERNELS["normals"](11, 0, 0, 400_000, 1).ravel()
    se = 1.0 / np.sqrt(z.size)
    assert abs(z.mean()) < 4 * se
    assert abs(z.var() - 1.0) < 4 * np.sqrt(2.0) * se
    assert abs(np.mean(z ** 4) - 3.0) < 4 * np.sqrt(96.0) * se


def _gmm_logdensity(x, alpha, v2, means, logw):
    diff = x[:, None, :] - alpha * means[None, :, :]
    q = logw[None, :] - 0.5 * np.sum(diff ** 2, axis=2) / v2
    return np.log(np.sum(np.exp(q), axis=1))


def test_gmm_score_matches_finite_differences():
    rng = np.random.default_rng(0)
    means = rng.standard_normal((3, 2))
    logw = np.log(np.array([0.2, 0.3, 0.5]))
    x = rng.standard_normal((20, 2))
    alpha, v2 = 0.7, 0.6
    eps = 1e-6
    fd = np.empty_like(x)
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd[:, j] = (_gmm_logdensity(x + e, alpha, v2, means, logw)
                    - _gmm_logdensity(x - e, alpha, v2, means, logw)) / (2 * eps)
    for fn in (_kernels.gmm_score, NUMPY_KERNELS["gmm_score"]):
        np.testing.assert_allclose(fn(x, alpha, v2, means, logw), fd, rtol=1e-6, atol=1e-8)


def test_gmm_score_batch_independent():
    rng = np.random.default_rng(1)
    means = rng.standard_normal((4, 3))
    logw = np.log(np.full(4, 0.25))
    x = rng.standard_normal((64, 3))
    for fn in (_kernels.gmm_score, NUMPY_KERNELS["gmm_score"]):
        full = fn(x, 0.5, 0.8, means, logw)
        part = fn(x[10:13], 0.5, 0.8, means, logw)
        assert np.array_equal(full[10:13], part)


def test_ei_update():
    rng = np.random.default_rng(2)
    x, s, z = rng.standard_normal((3, 10, 2))
    for fn in (_kernels.ei_update, NUMPY_KERNELS["ei_update"]):
        np.testing.assert_allclose(fn(x, s, z, 1.5, 0.25, 0.3), 1.5 * x + 0.25 * s + 0.3 * z, rtol=1e-15)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, NOISECTL_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from noisectl import _kernels; print(_kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
