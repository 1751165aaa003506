"""Weighted least-squares fits of ``k(m) = B p**(m-1)`` and robust averages."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRID_POINTS = 801
MAX_ITER = 100


class FitError(ValueError):
    """Not enough data to fit a decay."""


@dataclass(frozen=True)
class FitResult:
    B: float
    p: float
    residual: float
    converged: bool = True


def _model(B, p, e):
    return B[..., None] * np.power(p[..., None], e)


def _closed_form_B(x, k, w):
    num = np.sum(w * k * x, axis=-1)
    den = np.sum(w * x * x, axis=-1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def _grid_init(e, k, w):
    """Profile the weighted residual over ``p`` in ``[-1, 1]`` with ``B`` solved exactly."""
    grid = np.linspace(-1.0, 1.0, GRID_POINTS)
    best_res = np.full(k.shape[:-1], np.inf)
    best_p = np.zeros(k.shape[:-1])
    best_B = np.zeros(k.shape[:-1])
    for p in grid:
        x = np.power(p, e)
        B = _closed_form_B(x, k, w)
        res = np.sum(w * (k - B[..., None] * x) ** 2, axis=-1)
        better = res < best_res
        best_res = np.where(better, res, best_res)
        best_p = np.where(better, p, best_p)
        best_B = np.where(better, B, best_B)
    return best_B, best_p


def _loglinear_init(e, k, w):
    """Weighted regression of ``log k`` on ``m - 1`` using the positive points."""
    pos = k > 0
    lk = np.log(np.where(pos, k, 1.0))
    ww = np.where(pos, w * np.where(pos, k, 0.0) ** 2, 0.0)  # delta-method weights for log k
    s0 = ww.sum(-1)
    s1 = (ww * e).sum(-1)
    s2 = (ww * e * e).sum(-1)
    t0 = (ww * lk).sum(-1)
    t1 = (ww * e * lk).sum(-1)
    det = s0 * s2 - s1 * s1
    ok = (pos.sum(-1) >= 2) & (det > 1e-300)
    det = np.where(ok, det, 1.0)
    slope = (s0 * t1 - s1 * t0) / det
    icpt = (s2 * t0 - s1 * t1) / det
    return np.exp(np.clip(icpt, -50, 50)), np.exp(np.clip(slope, -50, 50)), ok


def _residual(B, p, e, k, w):
    return np.sum(w * (k - _model(B, p, e)) ** 2, axis=-1)


def fit_decay_batch(m, k, w=None, init=None) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized damped Gauss-Newton fit over leading axes of ``k``.

    :param m: sequence lengths, shape ``(L,)``
    :param k: sequence averages, shape ``(..., L)``
    :param w: weights broadcastable to ``k`` (default uniform)
    :param init: optional starting ``(B, p)`` broadcastable to ``k.shape[:-1]``;
        skips the grid and log-linear initialization (used for bootstrap refits)
    :return: ``(B, p, residual, converged)`` each of shape ``k.shape[:-1]``
    """
    m = np.asarray(m, dtype=float)
    k = np.asarray(k, dtype=float)
    if len(np.unique(m)) < 3:
        raise FitError("need at least three distinct sequence lengths")
    w = np.ones_like(k) if w is None else np.broadcast_to(np.asarray(w, dtype=float), k.shape)
    e = m - 1.0

    if init is None:
        B, p = _grid_init(e, k, w)
        lB, lp, ok = _loglinear_init(e, k, w)
        use_log = ok & (_residual(lB, lp, e, k, w) < _residual(B, p, e, k, w))
        B = np.where(use_log, lB, B)
        p = np.where(use_log, lp, p)
    else:
        B = np.broadcast_to(np.asarray(init[0], dtype=float), k.shape[:-1]).copy()
        p = np.broadcast_to(np.asarray(init[1], dtype=float), k.shape[:-1]).copy()

    lam = np.full(B.shape, 1e-3)
    res = _residual(B, p, e, k, w)
    converged = np.zeros(B.shape, dtype=bool)
    for _ in range(MAX_ITER):
        x = np.power(p[..., None], e)
        # d/dp p**e, written to stay finite at p = 0 and for e = 0
        dx = np.where(e > 0, e * np.power(p[..., None], np.maximum(e - 1, 0)), 0.0)
        r = k - B[..., None] * x
        jb, jp = x, B[..., None] * dx
        a11 = np.sum(w * jb * jb, -1)
        a12 = np.sum(w * jb * jp, -1)
        a22 = np.sum(w * jp * jp, -1)
        g1 = np.sum(w * jb * r, -1)
        g2 = np.sum(w * jp * r, -1)
        d11 = a11 * (1 + lam)
        d22 = a22 * (1 + lam) + 1e-300
        det = d11 * d22 - a12 * a12
        det = np.where(np.abs(det) > 1e-300, det, 1e-300)
        dB = (d22 * g1 - a12 * g2) / det
        dp = (d11 * g2 - a12 * g1) / det
        nB, np_ = B + dB, p + dp
        nres = _residual(nB, np_, e, k, w)
        accept = np.isfinite(nres) & (nres <= res)
        step = np.abs(dp) + np.abs(dB) / np.maximum(1.0, np.abs(B))
        B = np.where(accept, nB, B)
        p = np.where(accept, np_, p)
        converged |= accept & (step < 1e-13)
        converged |= accept & (np.abs(res - nres) <= 1e-15 * np.maximum(res, 1e-300)) & (step < 1e-9)
        res = np.where(accept, nres, res)
        lam = np.where(accept, lam * 0.3, lam * 10.0)
        lam = np.clip(lam, 1e-12, 1e12)
        if np.all(converged | (lam >= 1e12)):
            break
    converged |= res <= 1e-28
    return B, p, res, converged


def fit_single_exponential(m, k, weights=None) -> FitResult:
    """Fit ``k(m) = B p**(m-1)`` to one curve."""
    m = np.asarray(m, dtype=float)
    k = np.asarray(k, dtype=float)
    if m.shape != k.shape or m.ndim != 1:
        raise FitError("m and k must be 1-D arrays of equal length")
    B, p, res, conv = fit_decay_batch(m, k, weights)
    return FitResult(float(B), float(p), float(res), bool(conv))


def fit_jacobian_ci(m, k, weights, B: float, p: float, z: float = 1.96) -> tuple[float, float]:
    """Linearized confidence interval for ``p`` from the weighted Jacobian."""
    e = np.asarray(m, dtype=float) - 1
    w = np.asarray(weights, dtype=float)
    x = np.power(p, e)
    dx = np.where(e > 0, e * np.power(p, np.maximum(e - 1, 0)), 0.0)
    jac = np.stack([x, B * dx], axis=1)
    cov = np.linalg.pinv(jac.T @ (w[:, None] * jac))
    sd = math.sqrt(max(cov[1, 1], 0.0))
    return p - z * sd, p + z * sd


# -- robust averaging -------------------------------------------------------------------

def median_of_means(values, K: int) -> float:
    """Median of ``K`` group means; groups are consecutive and truncated to ``N*K`` values."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("median_of_means of an empty sample")
    K = int(K)
    if K < 1:
        raise ValueError("K must be >= 1")
    K = min(K, v.size)
    N = v.size // K
    return float(np.median(v[: N * K].reshape(K, N).mean(axis=1)))


def mom_parameters(num_probes: int, delta: float, epsilon: float, variance_bound: float) -> tuple[int, int]:
    """Number of groups ``K`` and group size ``N`` for a median-of-means estimate.

    ``K = ceil(2 ln(2 |A| / delta))`` and ``N = ceil(34 V / epsilon**2)``.
    """
    if num_probes < 1 or not 0 < delta < 1 or epsilon <= 0 or variance_bound < 0:
        raise ValueError("invalid median-of-means parameters")
    K = math.ceil(2 * math.log(2 * num_probes / delta) - 1e-12)
    N = math.ceil(34 * variance_bound / epsilon**2 - 1e-9)
    return K, N


def bootstrap_counts(n: int, resamples: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial resampling counts, shape ``(resamples, n)``; row ``b`` sums to ``n``."""
    idx = rng.integers(0, n, size=(resamples, n)) + (np.arange(resamples) * n)[:, None]
    return np.bincount(idx.ravel(), minlength=resamples * n).reshape(resamples, n).astype(np.float64)
