"""Uplink pilot training, MMSE estimation, local MMSE combining and UatF SE.

Array conventions: channels and estimates are (..., K, L, N) with optional
leading realization axes; per-pair matrices are (K, L, N, N).
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .apselect import ServingMap
from .channel import CovarianceSet, standard_complex_normal
from .pilots import PilotAssignment

log = logging.getLogger(__name__)

WEIGHTINGS = ("lsfd", "equal")

# Realizations are processed in chunks of this many; the chunk size only
# affects memory, never the random draws.
_CHUNK = 25


@dataclass(frozen=True)
class PilotObservation:
    y: np.ndarray  # (..., tau_p, L, N)


@dataclass(frozen=True)
class EstimateSet:
    h_hat: np.ndarray  # (..., K, L, N)
    B: np.ndarray  # (K, L, N, N)
    C: np.ndarray  # (K, L, N, N)


@dataclass(frozen=True)
class EstimationFilters:
    """Per-setup MMSE quantities that do not depend on the realization."""

    Phi: np.ndarray  # (tau_p, L, N, N)
    W: np.ndarray  # (K, L, N, N); h_hat_kl = W_kl y_{t_k, l}
    B: np.ndarray
    C: np.ndarray


@dataclass
class UatFStatistics:
    """Sample means behind the use-and-then-forget bound, per UE.

    ``u[k, l]`` is E{a_kl^H h_kl}; ``Xi_sum[k]`` is sum_i p_i Xi_ki;
    ``Gamma[k, l]`` is E{|a_kl|^2}. Entries for APs outside A_k are zero.
    ``Xi`` holds the per-pair matrices (K, K, L, L) when requested.
    """

    u: np.ndarray
    Xi_sum: np.ndarray
    Gamma: np.ndarray
    n_samples: int
    Xi: np.ndarray | None = None


@dataclass
class SEReport:
    se: np.ndarray  # (n_setups, K), NaN marks a missing value
    prelog: float
    labels: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def _power_vector(powers, K: int) -> np.ndarray:
    p = np.broadcast_to(np.asarray(powers, dtype=float), (K,)).copy()
    if np.any(p <= 0):
        raise ValueError("transmit powers must be positive")
    return p


def _pilot_matrix(assignment: PilotAssignment, p: np.ndarray) -> np.ndarray:
    """(tau_p, K) matrix with sqrt(tau_p p_k) where UE k uses pilot t."""
    P = np.zeros((assignment.tau_p, assignment.K))
    P[assignment.t, np.arange(assignment.K)] = np.sqrt(assignment.tau_p * p)
    return P


def noise_sources(assignment: PilotAssignment) -> np.ndarray:
    """Row of the noise draw used by each pilot.

    An occupied pilot t uses row min(S_t), an unused one row K + t, so a UE
    alone on its pilot sees the same noise whatever the pilot label.
    """
    K, tau_p = assignment.K, assignment.tau_p
    src = K + np.arange(tau_p)
    for t, users in enumerate(assignment.pilot_sets()):
        if users.size:
            src[t] = users[0]
    return src


def draw_pilot_noise(rng: np.random.Generator, lead: tuple, K: int, tau_p: int, L: int, N: int) -> np.ndarray:
    return standard_complex_normal(rng, lead + (K + tau_p, L, N))


def observe_pilots(
    h: np.ndarray,
    assignment: PilotAssignment,
    powers,
    noise_power: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> PilotObservation:
    """Received pilot signal projected on each pilot, per AP.

    ``noise`` (standard complex normal, shape (..., K + tau_p, L, N)) may be
    passed in to share draws between schemes; otherwise it is drawn from ``rng``.
    """
    h = np.asarray(h)
    K, L, N = h.shape[-3:]
    p = _power_vector(powers, K)
    if noise is None:
        if rng is None:
            raise ValueError("observe_pilots needs rng or noise")
        noise = draw_pilot_noise(rng, h.shape[:-3], K, assignment.tau_p, L, N)
    y = np.einsum("tk,...kln->...tln", _pilot_matrix(assignment, p), h)
    y = y + math.sqrt(noise_power) * noise[..., noise_sources(assignment), :, :]
    return PilotObservation(y=y)


def estimation_filters(
    cov: CovarianceSet, assignment: PilotAssignment, powers, noise_power: float
) -> EstimationFilters:
    """Pilot correlation Phi_tl, MMSE filters and estimate/error covariances.

    All inverses are applied through linear solves against the Hermitian
    positive-definite Phi_tl.
    """
    K, L, N = cov.K, cov.L, cov.N
    p = _power_vector(powers, K)
    tau_p = assignment.tau_p
    onehot = np.zeros((tau_p, K))
    onehot[assignment.t, np.arange(K)] = tau_p * p
    Phi = np.einsum("tk,klmn->tlmn", onehot, cov.R) + noise_power * np.eye(N)
    Phi_k = Phi[assignment.t]  # (K, L, N, N)
    X = np.linalg.solve(Phi_k, cov.R)  # Phi^{-1} R
    scale = np.sqrt(tau_p * p)[:, None, None, None]
    W = scale * np.conj(np.swapaxes(X, -1, -2))  # sqrt(tau_p p_k) R Phi^{-1}
    B = (tau_p * p)[:, None, None, None] * (cov.R @ X)
    B = 0.5 * (B + np.conj(np.swapaxes(B, -1, -2)))
    C = cov.R - B
    return EstimationFilters(Phi=Phi, W=W, B=B, C=C)


def mmse_estimate(
    obs: PilotObservation,
    cov: CovarianceSet,
    assignment: PilotAssignment,
    powers,
    noise_power: float,
    filters: EstimationFilters | None = None,
) -> EstimateSet:
    """MMSE channel estimates of every UE at every AP."""
    y = np.asarray(obs.y)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("pilot observation contains non-finite values")
    if filters is None:
        filters = estimation_filters(cov, assignment, powers, noise_power)
    y_k = y[..., assignment.t, :, :]  # (..., K, L, N)
    h_hat = np.einsum("klmn,...kln->...klm", filters.W, y_k)
    return EstimateSet(h_hat=h_hat, B=filters.B, C=filters.C)


def combine_local(est: EstimateSet, serving: ServingMap | np.ndarray, powers, noise_power: float) -> np.ndarray:
    """Local MMSE combiners a_kl, zero for APs outside A_k.

    AP l builds sum_{i in U_l} p_i (h_hat_il h_hat_il^H + C_il) + sigma^2 I from
    the UEs it serves and solves against p_k h_hat_kl.
    """
    D = serving.mask if isinstance(serving, ServingMap) else np.asarray(serving, dtype=bool)
    h_hat = est.h_hat
    K, L, N = h_hat.shape[-3:]
    p = _power_vector(powers, K)
    w = p[:, None] * D  # (K, L)
    M = np.einsum("kl,...klm,...kln->...lmn", w, h_hat, np.conj(h_hat))
    M = M + np.einsum("kl,klmn->lmn", w, est.C) + noise_power * np.eye(N)
    rhs = np.moveaxis(h_hat, -3, -1)  # (..., L, N, K)
    sol = np.linalg.solve(M, rhs)  # (..., L, N, K)
    a = np.moveaxis(sol, -1, -3) * (w[..., None])  # (..., K, L, N)
    return a


def _realization_seeds(rng, n_realizations: int) -> list[np.random.SeedSequence]:
    if isinstance(rng, np.random.SeedSequence):
        base = rng
    elif isinstance(rng, np.random.Generator):
        base = np.random.SeedSequence(int(rng.integers(0, 2**63)))
    else:
        base = np.random.SeedSequence(rng)
    return [
        np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (r,))
        for r in range(n_realizations)
    ]


def draw_realizations(cov: CovarianceSet, tau_p: int, seeds) -> tuple[np.ndarray, np.ndarray]:
    """Channels and standard pilot noise, one independent stream per realization."""
    h = []
    z = []
    for seq in seeds:
        g = np.random.Generator(np.random.PCG64(seq))
        h.append(standard_complex_normal(g, (cov.K, cov.L, cov.N)))
        z.append(draw_pilot_noise(g, (), cov.K, tau_p, cov.L, cov.N))
    h = np.einsum("klmn,rkln->rklm", cov.sqrtm, np.stack(h))
    return h, np.stack(z)


def accumulate_uatf_many(
    cov: CovarianceSet,
    schemes: list[tuple[PilotAssignment, ServingMap]],
    powers,
    noise_power: float,
    rng,
    n_realizations: int,
    keep_pairs: bool = False,
    with_digest: bool = False,
):
    """UatF statistics for several (pilot, serving) schemes on shared draws.

    Every scheme sees the same channel and pilot-noise realizations, so
    comparisons between schemes are paired. All schemes must use the same
    pilot length. With ``with_digest`` a hash of the drawn realizations is
    returned alongside the statistics.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    if not schemes:
        return ([], "") if with_digest else []
    tau_p = schemes[0][0].tau_p
    if any(a.tau_p != tau_p for a, _ in schemes):
        raise ValueError("all schemes must share tau_p")
    K, L = cov.K, cov.L
    p = _power_vector(powers, K)
    sqrt_p = np.sqrt(p)
    filters = [estimation_filters(cov, a, p, noise_power) for a, _ in schemes]
    masks = [s.mask for _, s in schemes]

    u = [np.zeros((K, L), complex) for _ in schemes]
    S = [np.zeros((K, L, L), complex) for _ in schemes]
    G2 = [np.zeros((K, L)) for _ in schemes]
    Xi = [np.zeros((K, K, L, L), complex) for _ in schemes] if keep_pairs else None
    diag = np.arange(K)

    seeds = _realization_seeds(rng, n_realizations)
    digest = hashlib.sha256()
    for start in range(0, n_realizations, _CHUNK):
        h, z = draw_realizations(cov, tau_p, seeds[start : start + _CHUNK])
        if with_digest:
            digest.update(h.tobytes())
            digest.update(z.tobytes())
        r = h.shape[0]
        for s, (assignment, _) in enumerate(schemes):
            obs = observe_pilots(h, assignment, p, noise_power, noise=z)
            est = mmse_estimate(obs, cov, assignment, p, noise_power, filters=filters[s])
            a = combine_local(est, masks[s], p, noise_power)
            g = np.einsum("rkln,riln->rkil", np.conj(a), h)  # a_kl^H h_il
            u[s] += g[:, diag, diag, :].sum(axis=0)
            G2[s] += np.sum(np.abs(a) ** 2, axis=(0, 3))
            gw = g * sqrt_p[None, None, :, None]
            X = np.swapaxes(gw, 0, 1).reshape(K, r * K, L)
            S[s] += np.swapaxes(X, 1, 2) @ np.conj(X)
            if keep_pairs:
                Xi[s] += np.einsum("rkil,rkij->kilj", g, np.conj(g))

    out = []
    for s in range(len(schemes)):
        out.append(
            UatFStatistics(
                u=u[s] / n_realizations,
                Xi_sum=S[s] / n_realizations,
                Gamma=G2[s] / n_realizations,
                n_samples=n_realizations,
                Xi=None if Xi is None else Xi[s] / n_realizations,
            )
        )
    if with_digest:
        return out, digest.hexdigest()[:16]
    return out


def accumulate_uatf(
    cov: CovarianceSet,
    assignment: PilotAssignment,
    serving: ServingMap,
    powers,
    noise_power: float,
    rng,
    n_realizations: int,
    keep_pairs: bool = False,
) -> UatFStatistics:
    return accumulate_uatf_many(
        cov, [(assignment, serving)], powers, noise_power, rng, n_realizations, keep_pairs
    )[0]


def prelog_factor(tau_p: int, tau_c: int) -> float:
    return (tau_c - tau_p) / tau_c


def spectral_efficiency(
    stats: UatFStatistics,
    serving: ServingMap | np.ndarray,
    powers,
    noise_power: float,
    tau_p: int,
    tau_c: int,
    weighting: str = "lsfd",
) -> np.ndarray:
    """Per-UE uplink SE (bit/s/Hz) from the UatF statistics.

    With ``weighting="lsfd"`` the CPU combines the local estimates with the
    optimal large-scale-fading weights, giving
    SINR_k = p_k u_k^H Psi_k^{-1} u_k, Psi_k = sum_i p_i Xi_ki - p_k u_k u_k^H + sigma^2 Gamma_k,
    all restricted to the serving APs. ``"equal"`` sums the local estimates
    with unit weights. A UE whose Psi_k is materially indefinite (too few
    realizations) gets NaN.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    D = serving.mask if isinstance(serving, ServingMap) else np.asarray(serving, dtype=bool)
    K = D.shape[0]
    p = _power_vector(powers, K)
    prelog = prelog_factor(tau_p, tau_c)
    se = np.full(K, np.nan)
    for k in range(K):
        idx = np.flatnonzero(D[k])
        u = stats.u[k, idx]
        Psi = stats.Xi_sum[k][np.ix_(idx, idx)] - p[k] * np.outer(u, np.conj(u))
        Psi = Psi + noise_power * np.diag(stats.Gamma[k, idx])
        Psi = 0.5 * (Psi + np.conj(Psi.T))
        if not np.all(np.isfinite(Psi)):
            log.warning("UE %d: non-finite UatF statistics", k)
            continue
        if not np.any(u):
            se[k] = 0.0
            continue
        if weighting == "equal":
            denom = Psi.sum().real
            if denom <= 0:
                log.warning("UE %d: nonpositive interference power", k)
                continue
            sinr = p[k] * abs(u.sum()) ** 2 / denom
        else:
            w, V = np.linalg.eigh(Psi)
            trace = w.sum()
            if trace <= 0 or w[0] < -1e-6 * trace:
                log.warning("UE %d: Psi not positive definite (min eig %.3g)", k, w[0])
                continue
            w = np.maximum(w, 1e-12 * trace)
            proj = np.conj(V.T) @ u
            sinr = p[k] * float(np.sum(np.abs(proj) ** 2 / w))
        se[k] = prelog * math.log2(1.0 + sinr)
    return se
