"""Serving-AP selection: similarity-aware grouping, all-APs and top-M baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

AP_SCHEMES = ("capa", "all", "top_m")


@dataclass(frozen=True)
class ServingMap:
    """Serving AP set per UE, as sorted index arrays. AP indices are 0-based."""

    A: tuple  # K tuples of AP indices
    L: int
    scheme: str = "all"

    def __post_init__(self) -> None:
        A = tuple(tuple(sorted({int(l) for l in a})) for a in self.A)
        for k, a in enumerate(A):
            if not a:
                raise ValueError(f"UE {k} has an empty serving set")
            if a[0] < 0 or a[-1] >= self.L:
                raise ValueError(f"UE {k} served by an AP outside range({self.L})")
        object.__setattr__(self, "A", A)

    @property
    def K(self) -> int:
        return len(self.A)

    @property
    def mask(self) -> np.ndarray:
        """Boolean (K, L) matrix; True where D_kl is the identity."""
        D = np.zeros((self.K, self.L), dtype=bool)
        for k, a in enumerate(self.A):
            D[k, list(a)] = True
        return D

    def served_by(self, l: int) -> list[int]:
        return [k for k, a in enumerate(self.A) if l in a]


def group_aps(ap_sim, threshold: float) -> list[list[int]]:
    """Greedy complete-linkage partition of the APs.

    AP l joins the first existing group in which every member j has
    similarity e[l, j] < threshold; otherwise it opens a new group.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    e = np.asarray(getattr(ap_sim, "e", ap_sim), dtype=float)
    L = e.shape[0]
    groups: list[list[int]] = []
    # row g holds the largest similarity of each AP to any member of group g
    worst = np.empty((L, L))
    for l in range(L):
        fits = np.flatnonzero(worst[: len(groups), l] < threshold)
        if fits.size:
            g = int(fits[0])
            groups[g].append(l)
            np.maximum(worst[g], e[l], out=worst[g])
        else:
            worst[len(groups)] = e[l]
            groups.append([l])
    return groups


def default_similarity_threshold(ap_sim, quantile: float = 0.5) -> float:
    """Quantile (linear interpolation) of the off-diagonal AP similarities."""
    e = np.asarray(getattr(ap_sim, "e", ap_sim), dtype=float)
    L = e.shape[0]
    if L < 2:
        raise ValueError("need at least two APs for a similarity threshold")
    if not 0.0 <= quantile <= 1.0:
        raise ValueError("quantile must lie in [0, 1]")
    off = e[~np.eye(L, dtype=bool)]
    return float(np.quantile(off, quantile))


def literal_gain_threshold(h: np.ndarray) -> float:
    """Mean per-antenna channel power, sum |h_kl|^2 / (L N K), for h of shape (K, L, N)."""
    h = np.asarray(h)
    return float(np.sum(np.abs(h) ** 2) / h.size)


def select_capa_aps(groups, beta: np.ndarray, complement: bool = False) -> ServingMap:
    """Per UE, keep the APs of each group whose gain reaches the group's mean gain.

    With ``complement=True`` the below-mean members are kept instead. A UE left
    with no AP is served by its strongest one.
    """
    beta = np.asarray(beta, dtype=float)
    K, L = beta.shape
    members = sorted(l for g in groups for l in g)
    if members != list(range(L)):
        raise ValueError("groups must partition range(L)")
    A = []
    for k in range(K):
        chosen: set[int] = set()
        for g in groups:
            g = np.asarray(g)
            gains = beta[k, g]
            # relative slack so an all-equal group is not split by rounding in the mean
            strong = gains >= gains.mean() * (1.0 - 1e-12)
            chosen.update(g[~strong if complement else strong].tolist())
        if not chosen:
            chosen = {int(np.argmax(beta[k]))}
        A.append(chosen)
    return ServingMap(A=tuple(A), L=L, scheme="capa")


def select_all(K: int, L: int) -> ServingMap:
    return ServingMap(A=tuple(tuple(range(L)) for _ in range(K)), L=L, scheme="all")


def select_top_m(beta: np.ndarray, M: int) -> ServingMap:
    """Each UE is served by its M strongest APs (ties to the lower index)."""
    beta = np.asarray(beta, dtype=float)
    K, L = beta.shape
    if not 1 <= M <= L:
        raise ValueError(f"M must lie in [1, {L}], got {M}")
    order = np.argsort(-beta, axis=1, kind="stable")[:, :M]
    return ServingMap(A=tuple(map(tuple, order)), L=L, scheme="top_m")
