"""Shared helpers: data builders and the monotone-trace assertion."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from scca import ViewMatrix


def make_views(n, p1, p2, seed=0):
    """Centered Gaussian views."""
    rng = np.random.default_rng(seed)
    d1 = rng.standard_normal((n, p1))
    d2 = rng.standard_normal((n, p2))
    d1 -= d1.mean(axis=0)
    d2 -= d2.mean(axis=0)
    v1 = ViewMatrix(d1, [f"A{j}" for j in range(p1)], centered=True)
    v2 = ViewMatrix(d2, [f"B{j}" for j in range(p2)], centered=True)
    return v1, v2


def whiten(data: np.ndarray) -> np.ndarray:
    """Centered data transformed so the divisor-n covariance is the identity."""
    data = data - data.mean(axis=0)
    cov = data.T @ data / data.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return data @ inv_root


def whitened_views(n, p1, p2, seed=0):
    """Centered views with exact identity within-view covariance (divisor n)."""
    rng = np.random.default_rng(seed)
    d1 = whiten(rng.standard_normal((n, p1)))
    d2 = whiten(rng.standard_normal((n, p2)))
    v1 = ViewMatrix(d1, [f"A{j}" for j in range(p1)], centered=True)
    v2 = ViewMatrix(d2, [f"B{j}" for j in range(p2)], centered=True)
    return v1, v2


def orthonormal_columns(n, p, rng) -> np.ndarray:
    """Centered matrix with exactly orthonormal columns (X'X = I)."""
    raw = rng.standard_normal((n, p + 1))
    raw -= raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    cols = q[:, 1:p + 1]
    cols -= cols.mean(axis=0)
    q2, _ = np.linalg.qr(cols)
    return q2


def classical_correlations(c11, c12, c22) -> np.ndarray:
    """Whitened-SVD canonical correlations (the closed-form oracle)."""
    w1 = scipy.linalg.fractional_matrix_power(c11, -0.5).real
    w2 = scipy.linalg.fractional_matrix_power(c22, -0.5).real
    return np.linalg.svd(w1 @ c12 @ w2, compute_uv=False)


def assert_monotone(trace, tol=1e-12, label="objective"):
    trace = np.asarray(trace, dtype=float)
    if trace.size < 2:
        return
    floor = -tol * np.maximum(1.0, np.abs(trace[:-1]))
    diffs = np.diff(trace)
    assert np.all(diffs >= floor), (
        f"{label} decreased by {diffs.min():.3e} at step {int(np.argmin(diffs))}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
