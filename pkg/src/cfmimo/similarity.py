"""Channel-similarity metrics between UE pairs and between AP pairs.

The statistical metrics are ratios of traces of covariance products: for UEs
k and v, sum_l tr(R_kl R_vl) / (sum_l tr R_kl)(sum_l tr R_vl); for APs the
roles of the UE and AP indices swap. Both approximate the expected squared
normalized inner product of the stacked channels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CovarianceSet, sample_channels

SIMILARITY_KINDS = ("statistical", "instantaneous")


@dataclass(frozen=True)
class UESimilarityMatrix:
    s: np.ndarray  # (K, K), symmetric, entries in [0, 1]
    metric_kind: str = "statistical"


@dataclass(frozen=True)
class APSimilarityMatrix:
    e: np.ndarray  # (L, L), symmetric, entries in [0, 1]


def instantaneous_similarity(h_k: np.ndarray, h_v: np.ndarray) -> complex:
    """Normalized inner product h_k^H h_v / (|h_k| |h_v|) of two stacked channels."""
    h_k = np.ravel(h_k)
    h_v = np.ravel(h_v)
    nk = np.linalg.norm(h_k)
    nv = np.linalg.norm(h_v)
    if nk == 0 or nv == 0:
        raise ValueError("similarity undefined for a zero channel")
    return complex(np.vdot(h_k, h_v) / (nk * nv))


def _gram(X: np.ndarray) -> np.ndarray:
    """Sum over blocks of tr(X_a X_b) for Hermitian blocks, as one matrix product.

    ``X`` is (n, ..., N, N); tr(A B) = sum A_mn conj(B_mn) when B is Hermitian.
    """
    flat = X.reshape(X.shape[0], -1)
    return (flat @ np.conj(flat).T).real


def expected_similarity_ue(Rk: np.ndarray, Rv: np.ndarray) -> float:
    """Expected squared similarity of two UEs from their per-AP covariance blocks.

    ``Rk`` and ``Rv`` have shape (L, N, N).
    """
    Rk = np.asarray(Rk)
    Rv = np.asarray(Rv)
    tk = np.trace(Rk, axis1=-2, axis2=-1).real.sum()
    tv = np.trace(Rv, axis1=-2, axis2=-1).real.sum()
    if tk <= 0 or tv <= 0:
        raise ValueError("UE covariance has zero total trace")
    num = np.einsum("lmn,lnm->", Rk, Rv).real
    return float(num / (tk * tv))


def expected_similarity_ap(cov: CovarianceSet, l: int, j: int) -> float:
    """Expected squared similarity of APs ``l`` and ``j`` across all UEs."""
    if l == j:
        raise ValueError("AP similarity needs two distinct APs")
    Rl = cov.R[:, l]
    Rj = cov.R[:, j]
    tl = np.trace(Rl, axis1=-2, axis2=-1).real.sum()
    tj = np.trace(Rj, axis1=-2, axis2=-1).real.sum()
    if tl <= 0 or tj <= 0:
        raise ValueError("AP covariance has zero total trace")
    num = np.einsum("kmn,knm->", Rl, Rj).real
    return float(num / (tl * tj))


def ue_similarity_matrix(
    cov: CovarianceSet,
    kind: str = "statistical",
    h: np.ndarray | None = None,
) -> UESimilarityMatrix:
    """Pairwise UE similarity used by the pilot assignment.

    ``statistical`` gives sqrt of the expected squared similarity. ``instantaneous``
    gives |rho_kv| on one channel realization ``h`` of shape (K, L, N).
    Cost is O(K^2 L N^2).
    """
    if kind == "statistical":
        traces = np.trace(cov.R, axis1=-2, axis2=-1).real.sum(axis=1)
        if np.any(traces <= 0):
            raise ValueError("UE covariance has zero total trace")
        s2 = _gram(cov.R) / np.outer(traces, traces)
    elif kind == "instantaneous":
        if h is None:
            raise ValueError("instantaneous similarity needs a channel realization")
        H = np.asarray(h).reshape(h.shape[0], -1)
        norms = np.linalg.norm(H, axis=1)
        if np.any(norms == 0):
            raise ValueError("similarity undefined for a zero channel")
        s2 = np.abs(np.conj(H) @ H.T / np.outer(norms, norms)) ** 2
    else:
        raise ValueError(f"unknown similarity kind {kind!r}")
    s2 = np.clip(0.5 * (s2 + s2.T), 0.0, 1.0)
    return UESimilarityMatrix(s=np.sqrt(s2), metric_kind=kind)


def ap_similarity_matrix(cov: CovarianceSet) -> APSimilarityMatrix:
    """Expected squared similarity for all AP pairs. Cost O(L^2 K N^2)."""
    traces = np.trace(cov.R, axis1=-2, axis2=-1).real.sum(axis=0)
    if np.any(traces <= 0):
        raise ValueError("AP covariance has zero total trace")
    e = _gram(np.swapaxes(cov.R, 0, 1)) / np.outer(traces, traces)
    return APSimilarityMatrix(e=np.clip(0.5 * (e + e.T), 0.0, 1.0))


MC_ESTIMATORS = ("mean-of-ratios", "ratio-of-means")


def monte_carlo_similarity_ue(
    Rk: np.ndarray,
    Rv: np.ndarray,
    rng: np.random.Generator,
    n_draws: int,
    estimator: str = "mean-of-ratios",
) -> float:
    """Monte Carlo similarity of two UEs with independent channels.

    ``mean-of-ratios`` averages |h_k^H h_v|^2 / (|h_k|^2 |h_v|^2) draw by draw.
    ``ratio-of-means`` divides the sample mean of |h_k^H h_v|^2 by the sample
    mean of |h_k|^2 |h_v|^2; it converges to the trace formula exactly, while
    the mean of ratios differs from it whenever the channel energy is spread
    unevenly over few dimensions. ``Rk`` and ``Rv`` are (L, N, N) block stacks.
    """
    cov = CovarianceSet(R=np.stack([Rk, Rv]))
    h = sample_channels(cov, rng, n=n_draws).h.reshape(n_draws, 2, -1)
    return _similarity_estimate(h[:, 0], h[:, 1], estimator)


def monte_carlo_similarity_ap(
    cov: CovarianceSet,
    l: int,
    j: int,
    rng: np.random.Generator,
    n_draws: int,
    estimator: str = "mean-of-ratios",
) -> float:
    """Monte Carlo similarity of the UE-stacked channels of APs ``l`` and ``j``."""
    sub = CovarianceSet(R=cov.R[:, [l, j]])
    h = sample_channels(sub, rng, n=n_draws).h  # (n, K, 2, N)
    return _similarity_estimate(h[:, :, 0].reshape(n_draws, -1), h[:, :, 1].reshape(n_draws, -1), estimator)


def _similarity_estimate(a: np.ndarray, b: np.ndarray, estimator: str) -> float:
    inner = np.abs(np.sum(np.conj(a) * b, axis=1)) ** 2
    energy = np.sum(np.abs(a) ** 2, axis=1) * np.sum(np.abs(b) ** 2, axis=1)
    if estimator == "mean-of-ratios":
        return float(np.mean(inner / energy))
    if estimator == "ratio-of-means":
        return float(np.mean(inner) / np.mean(energy))
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {MC_ESTIMATORS}")
