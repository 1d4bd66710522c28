"""Pilot assignment: similarity-aware greedy (CAPA) and random (RPA).

Pilot and UE indices are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PILOT_SCHEMES = ("capa", "random")


@dataclass(frozen=True)
class PilotAssignment:
    t: np.ndarray  # (K,) pilot index per UE, in range(tau_p)
    tau_p: int
    scheme: str = "capa"

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=int)
        if t.ndim != 1:
            raise ValueError("pilot assignment must be one-dimensional")
        if t.size and (t.min() < 0 or t.max() >= self.tau_p):
            raise ValueError(f"pilot index out of range for tau_p={self.tau_p}")
        object.__setattr__(self, "t", t)

    @property
    def K(self) -> int:
        return self.t.size

    def pilot_sets(self) -> list[np.ndarray]:
        """UEs sharing each pilot, in increasing UE order."""
        return [np.flatnonzero(self.t == p) for p in range(self.tau_p)]


def pilot_usage_counts(assignment: PilotAssignment) -> np.ndarray:
    return np.bincount(assignment.t, minlength=assignment.tau_p)


def assign_capa(sim, tau_p: int, literal: bool = False) -> PilotAssignment:
    """Greedy similarity-aware pilot assignment in UE index order.

    The first ``min(K, tau_p)`` UEs get pilots 0, 1, ... . Each later UE k skips
    the pilot of its most similar predecessor and takes, among the remaining
    pilots, the one with the smallest summed similarity to the UEs already on
    it. With a single pilot nothing remains after the exclusion and the
    least-used pilot is taken. ``literal=True`` always takes the least-used
    pilot for k >= tau_p. Ties go to the lowest index.
    """
    s = np.asarray(getattr(sim, "s", sim), dtype=float)
    K = s.shape[0]
    if s.shape != (K, K):
        raise ValueError("similarity matrix must be square")
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")

    t = np.empty(K, dtype=int)
    head = min(K, tau_p)
    t[:head] = np.arange(head)
    counts = np.zeros(tau_p, dtype=int)
    counts[:head] = 1
    # load[p] = sum of s[k, u] over earlier UEs u holding pilot p, rebuilt per k
    for k in range(head, K):
        if literal:
            p = int(np.argmin(counts))
        else:
            row = s[k, :k]
            v_star = int(np.argmax(row))
            load = np.bincount(t[:k], weights=row, minlength=tau_p)
            load[t[v_star]] = np.inf
            if np.isinf(load).all():
                p = int(np.argmin(counts))
            else:
                p = int(np.argmin(load))
        t[k] = p
        counts[p] += 1
    return PilotAssignment(t=t, tau_p=tau_p, scheme="capa")


def assign_random(K: int, tau_p: int, rng: np.random.Generator) -> PilotAssignment:
    """Distinct random pilots for the first min(K, tau_p) UEs, uniform draws after."""
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    head = min(K, tau_p)
    t = np.empty(K, dtype=int)
    t[:head] = rng.permutation(tau_p)[:head]
    t[head:] = rng.integers(0, tau_p, size=K - head)
    return PilotAssignment(t=t, tau_p=tau_p, scheme="random")
