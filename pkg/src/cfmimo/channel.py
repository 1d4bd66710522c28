"""Network geometry, large-scale fading and correlated Rayleigh channels."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from .config import NetworkConfig

COVARIANCE_METHODS = ("series", "gaussian-approx")


@dataclass(frozen=True)
class Layout:
    ap_positions: np.ndarray  # (L, 2)
    ue_positions: np.ndarray  # (K, 2)

    @property
    def L(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def K(self) -> int:
        return self.ue_positions.shape[0]


@dataclass(eq=False)
class CovarianceSet:
    """Spatial covariances ``R[k, l]`` (N x N) and large-scale gains ``beta[k, l]``.

    ``beta`` is always derived as ``trace(R) / N``.
    """

    R: np.ndarray  # (K, L, N, N) complex
    beta: np.ndarray = field(init=False)  # (K, L)

    def __post_init__(self) -> None:
        self.R = np.asarray(self.R, dtype=complex)
        if self.R.ndim != 4 or self.R.shape[2] != self.R.shape[3]:
            raise ValueError(f"R must have shape (K, L, N, N), got {self.R.shape}")
        self.beta = np.trace(self.R, axis1=2, axis2=3).real / self.N

    @property
    def K(self) -> int:
        return self.R.shape[0]

    @property
    def L(self) -> int:
        return self.R.shape[1]

    @property
    def N(self) -> int:
        return self.R.shape[2]

    @cached_property
    def sqrtm(self) -> np.ndarray:
        """Hermitian square roots of every R[k, l]."""
        return psd_sqrt(self.R)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray  # (..., K, L, N) complex


def place_network(config: NetworkConfig, rng: np.random.Generator) -> Layout:
    """Draw AP and UE positions in the square service area.

    UEs are always i.i.d. uniform. With ``ap_layout == "grid"`` the APs sit at
    the cell centers of a ceil(sqrt(L)) x ceil(sqrt(L)) grid, filled row by row
    (x fastest) so surplus points fall off the end of the last row.
    """
    side = config.area_side
    if config.ap_layout == "grid":
        per_row = math.ceil(math.sqrt(config.L))
        spacing = side / per_row
        idx = np.arange(config.L)
        ap = np.column_stack(((idx % per_row + 0.5) * spacing, (idx // per_row + 0.5) * spacing))
    else:
        ap = rng.uniform(0.0, side, size=(config.L, 2))
    ue = rng.uniform(0.0, side, size=(config.K, 2))
    return Layout(ap_positions=ap, ue_positions=ue)


def _wrap_offsets(a: np.ndarray, b: np.ndarray, area_side: float) -> np.ndarray:
    """Displacement from ``a`` to the nearest of the 9 torus copies of ``b``."""
    shifts = np.array([(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)], dtype=float) * area_side
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = b[..., None, :] + shifts - a[..., None, :]
    best = np.argmin(np.sum(diff**2, axis=-1), axis=-1)
    return np.take_along_axis(diff, best[..., None, None], axis=-2)[..., 0, :]


def wrap_distance(a, b, area_side: float, height_delta: float = 0.0):
    """3D distance between ``a`` and the closest wrapped copy of ``b``.

    Broadcasts over leading axes of ``a`` and ``b`` (last axis holds x, y).
    """
    offset = _wrap_offsets(a, b, area_side)
    d = np.sqrt(np.sum(offset**2, axis=-1) + height_delta**2)
    return float(d) if np.ndim(d) == 0 else d


def wrap_bearing(ap, ue, area_side: float):
    """Bearing (radians from the x-axis) from an AP to the nearest copy of a UE."""
    offset = _wrap_offsets(ap, ue, area_side)
    return np.arctan2(offset[..., 1], offset[..., 0])


def large_scale_fading(
    d,
    shadow_db=0.0,
    intercept_db: float = -30.5,
    exponent_db: float = 36.7,
):
    """Linear channel gain for distance ``d`` (meters) plus shadowing in dB."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    beta_db = intercept_db - exponent_db * np.log10(d) + shadow_db
    out = 10.0 ** (beta_db / 10.0)
    return float(out) if out.ndim == 0 else out


def _lag_response(angle, asd, n_lags: int, spacing: float, method: str) -> np.ndarray:
    """Correlation between antennas ``delta`` apart, delta = 0..n_lags-1."""
    angle = np.asarray(angle, dtype=float)
    phase = 2.0 * np.pi * spacing * np.arange(n_lags)
    if method == "gaussian-approx":
        a = phase * np.sin(angle)[..., None]
        b = phase * np.cos(angle)[..., None]
        return np.exp(1j * a) * np.exp(-0.5 * asd**2 * b**2)
    if method == "series":
        # Jacobi-Anger: exp(j a sin t) = sum_n J_n(a) exp(j n t), and the Gaussian
        # density has characteristic function exp(j n phi - n^2 asd^2 / 2).
        a_max = phase[-1]
        n_max = int(math.ceil(a_max + 10.0 * a_max ** (1.0 / 3.0) + 30.0))
        orders = np.arange(-n_max, n_max + 1)
        bessel = special.jv(orders[None, :], phase[:, None])  # (n_lags, orders)
        char = np.exp(1j * orders * angle[..., None] - 0.5 * asd**2 * orders.astype(float) ** 2)
        return char @ bessel.T
    raise ValueError(f"unknown covariance method {method!r}; expected one of {COVARIANCE_METHODS}")


def _toeplitz_from_lags(c: np.ndarray) -> np.ndarray:
    n = c.shape[-1]
    lag = np.arange(n)[:, None] - np.arange(n)[None, :]
    R = np.where(lag >= 0, c[..., np.abs(lag)], np.conj(c[..., np.abs(lag)]))
    # The zero lag integrates the density to one; pin it so trace(R) = N * beta.
    diag = np.arange(n)
    R[..., diag, diag] = 1.0
    return R


def clip_psd(R: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Zero out negative eigenvalues of Hermitian matrices (batched).

    Matrices whose spectrum is already nonnegative within ``rel_tol * trace``
    are returned unchanged.
    """
    R = np.array(R, dtype=complex, copy=True)
    if R.shape[-1] == 1:
        R.real[...] = np.maximum(R.real, 0.0)
        R.imag[...] = 0.0
        return R
    w, V = np.linalg.eigh(R)
    trace = np.trace(R, axis1=-2, axis2=-1).real
    bad = np.any(w < -rel_tol * np.abs(trace)[..., None], axis=-1)
    if np.any(bad):
        w_fix = np.maximum(w[bad], 0.0)
        V_fix = V[bad]
        fixed = (V_fix * w_fix[..., None, :]) @ np.conj(np.swapaxes(V_fix, -1, -2))
        R[bad] = 0.5 * (fixed + np.conj(np.swapaxes(fixed, -1, -2)))
    return R


def psd_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian square root of PSD matrices (batched), via eigendecomposition."""
    w, V = np.linalg.eigh(R)
    w = np.sqrt(np.maximum(w, 0.0))
    return (V * w[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def spatial_covariance(
    nominal_angle,
    asd: float,
    beta,
    N: int,
    spacing: float = 0.5,
    method: str = "series",
) -> np.ndarray:
    """Covariance of a ULA under a Gaussian angular power density.

    ``nominal_angle`` (radians) and ``beta`` broadcast together; the result has
    their broadcast shape followed by (N, N). ``method="series"`` averages the
    array response over the Gaussian density through a Bessel series, exact up
    to truncation for any angular spread; ``"gaussian-approx"`` is the small-angle closed
    form ``exp(j a sin(phi)) * exp(-(asd^2 / 2) (a cos(phi))^2)``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if asd < 0:
        raise ValueError("asd must be nonnegative")
    nominal_angle, beta = np.broadcast_arrays(np.asarray(nominal_angle, float), np.asarray(beta, float))
    if np.any(beta < 0):
        raise ValueError("beta must be nonnegative")
    if N == 1:
        return beta[..., None, None].astype(complex)
    R = _toeplitz_from_lags(_lag_response(nominal_angle, asd, N, spacing, method))
    return clip_psd(beta[..., None, None] * R)


def build_covariance_set(
    layout: Layout,
    config: NetworkConfig,
    rng: np.random.Generator,
    shadowing: bool = True,
    method: str = "series",
) -> CovarianceSet:
    """Spatial covariances for every UE/AP pair of one network setup."""
    ue = layout.ue_positions[:, None, :]
    ap = layout.ap_positions[None, :, :]
    d = wrap_distance(ap, ue, config.area_side, config.ap_height_delta)
    angles = wrap_bearing(ap, ue, config.area_side)
    if shadowing and config.shadow_std_db > 0:
        shadow = rng.normal(0.0, config.shadow_std_db, size=d.shape)
    else:
        shadow = np.zeros(d.shape)
    gain = large_scale_fading(d, shadow, config.pathloss_intercept_db, config.pathloss_exponent_db)
    R = spatial_covariance(
        angles, math.radians(config.asd_deg), gain, config.N, config.antenna_spacing, method
    )
    return CovarianceSet(R=R)


def standard_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def sample_channels(cov: CovarianceSet, rng: np.random.Generator, n: int | None = None) -> ChannelRealization:
    """Draw h[k, l] ~ CN(0, R[k, l]); with ``n`` set, a leading axis of n draws."""
    lead = () if n is None else (n,)
    z = standard_complex_normal(rng, lead + (cov.K, cov.L, cov.N))
    h = np.einsum("klmn,...kln->...klm", cov.sqrtm, z)
    return ChannelRealization(h=h)
