import math

import numpy as np
import pytest
from scipy import integrate


def quadrature_covariance(phi, asd, N, spacing=0.5):
    """Angular integral of the ULA response under a Gaussian density, by adaptive quadrature."""
    col = np.zeros(N, dtype=complex)
    dens = lambda t: math.exp(-((t - phi) ** 2) / (2 * asd**2)) / (math.sqrt(2 * math.pi) * asd)
    lo, hi = phi - 12 * asd, phi + 12 * asd
    for d in range(N):
        a = 2 * math.pi * spacing * d
        re = integrate.quad(lambda t: dens(t) * math.cos(a * math.sin(t)), lo, hi, limit=2000)[0]
        im = integrate.quad(lambda t: dens(t) * math.sin(a * math.sin(t)), lo, hi, limit=2000)[0]
        col[d] = re + 1j * im
    R = np.empty((N, N), dtype=complex)
    for m in range(N):
        for n in range(N):
            R[m, n] = col[m - n] if m >= n else np.conj(col[n - m])
    return R


def random_psd(rng, N, rank=None, scale=1.0):
    rank = N if rank is None else rank
    A = rng.standard_normal((N, rank)) + 1j * rng.standard_normal((N, rank))
    return scale * (A @ A.conj().T) / rank


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
