"""Rank-1 Rician uplink model: configuration, channel and impairment sampling.

The receiver has ``N`` antennas and serves ``M`` single-antenna users.
User 1 sees a line-of-sight (LOS) component plus scattering; users
``2..M`` see scattering only. Every scattered entry of column ``i`` is
circularly-symmetric complex Gaussian with ``E|h|^2 = d_i**-alpha_i / (K+1)``.

Complex Gaussian convention throughout: variance ``v`` means the real and
imaginary parts are independent ``N(0, v/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "db_to_linear",
    "linear_to_db",
    "complex_normal",
    "steering_vector",
    "sample_channel",
    "sample_channels",
    "estimated_channel",
    "sample_noise_sources",
]


def db_to_linear(value_db):
    """Convert dB to a linear power ratio; ``-inf`` maps to exactly 0."""
    if value_db == -math.inf:
        return 0.0
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value):
    """Convert a linear power ratio to dB; 0 maps to ``-inf``."""
    if value == 0:
        return -math.inf
    return 10.0 * math.log10(value)


def complex_normal(rng, shape, variance=1.0):
    """Circularly-symmetric complex Gaussian samples with ``E|x|^2 = variance``."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    # Interleaved real/imaginary draws viewed in place as complex128.
    z = rng.standard_normal(shape + (2,))
    z *= math.sqrt(variance / 2.0)
    return z.view(np.complex128)[..., 0]


@dataclass(frozen=True)
class SystemConfig:
    """Full description of one uplink scenario.

    Attributes
    ----------
    n_rx, n_tx : int
        Receive antennas ``N`` and users/streams ``M`` (``N >= M >= 1``).
    rician_k : float
        Rician K-factor on a linear scale; 0 is pure Rayleigh fading.
    distances, pathloss_exps : tuple of float
        Per-user normalized distance ``d_i > 0`` and path-loss exponent
        ``alpha_i`` in ``[2, 6]``.
    sigma_est : float
        Channel-estimation error level ``sigma`` in ``[0, 1]``.
    kappa_t, kappa_r : float
        Transmit and receive error-vector magnitudes.
    snr_db : float
        Transmit SNR ``p/N0`` in dB. ``inf`` drops the thermal-noise term.
    noise_power : float
        ``N0``.
    arrival_angle_deg : float
        LOS arrival angle ``phi``.
    antenna_spacing_wavelengths : float
        Element spacing ``D/lambda``.
    """

    n_rx: int
    n_tx: int
    rician_k: float = 0.0
    distances: tuple = None
    pathloss_exps: tuple = None
    sigma_est: float = 0.0
    kappa_t: float = 0.0
    kappa_r: float = 0.0
    snr_db: float = 10.0
    noise_power: float = 1.0
    arrival_angle_deg: float = 20.0
    antenna_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        n, m = self.n_rx, self.n_tx
        if int(n) != n or int(m) != m:
            raise ValueError(f"n_rx and n_tx must be integers, got {n}, {m}")
        object.__setattr__(self, "n_rx", int(n))
        object.__setattr__(self, "n_tx", int(m))
        if not self.n_rx >= self.n_tx >= 1:
            raise ValueError(f"need n_rx >= n_tx >= 1, got n_rx={n}, n_tx={m}")
        dist = (1.0,) * self.n_tx if self.distances is None else tuple(float(d) for d in self.distances)
        alph = (4.0,) * self.n_tx if self.pathloss_exps is None else tuple(float(a) for a in self.pathloss_exps)
        if len(dist) != self.n_tx:
            raise ValueError(f"distances must have length n_tx={self.n_tx}, got {len(dist)}")
        if len(alph) != self.n_tx:
            raise ValueError(f"pathloss_exps must have length n_tx={self.n_tx}, got {len(alph)}")
        if any(not d > 0 for d in dist):
            raise ValueError(f"distances must be positive, got {dist}")
        if any(not 2.0 <= a <= 6.0 for a in alph):
            raise ValueError(f"pathloss_exps must lie in [2, 6], got {alph}")
        object.__setattr__(self, "distances", dist)
        object.__setattr__(self, "pathloss_exps", alph)
        if not (self.rician_k >= 0 and math.isfinite(self.rician_k)):
            raise ValueError(f"rician_k must be finite and non-negative, got {self.rician_k}")
        if not 0.0 <= self.sigma_est <= 1.0:
            raise ValueError(f"sigma_est must lie in [0, 1], got {self.sigma_est}")
        if not self.kappa_t >= 0:
            raise ValueError(f"kappa_t must be non-negative, got {self.kappa_t}")
        if not self.kappa_r >= 0:
            raise ValueError(f"kappa_r must be non-negative, got {self.kappa_r}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be a number above -inf, got {self.snr_db}")
        if not (self.noise_power > 0 and math.isfinite(self.noise_power)):
            raise ValueError(f"noise_power must be positive, got {self.noise_power}")
        if not self.antenna_spacing_wavelengths > 0:
            raise ValueError("antenna_spacing_wavelengths must be positive")

    @classmethod
    def symmetric(cls, n_rx, n_tx, *, rician_k_db=-math.inf, distance=1.0, pathloss_exp=4.0,
                  sigma_est=0.0, kappa=0.0, **kwargs):
        """Identical users and ``kappa_t = kappa_r = kappa``; K given in dB."""
        return cls(
            n_rx=n_rx,
            n_tx=n_tx,
            rician_k=db_to_linear(rician_k_db),
            distances=(distance,) * n_tx,
            pathloss_exps=(pathloss_exp,) * n_tx,
            sigma_est=sigma_est,
            kappa_t=kwargs.pop("kappa_t", kappa),
            kappa_r=kwargs.pop("kappa_r", kappa),
            **kwargs,
        )

    def with_(self, **changes):
        return replace(self, **changes)

    @property
    def tx_power(self):
        """Transmit power ``p = N0 * 10**(snr_db/10)``."""
        return self.noise_power * db_to_linear(self.snr_db)

    @property
    def inv_snr(self):
        """``N0 / p``; zero in the infinite-SNR limit."""
        if self.snr_db == math.inf:
            return 0.0
        return 1.0 / db_to_linear(self.snr_db)

    @property
    def path_gains(self):
        """Large-scale gains ``d_i**-alpha_i``."""
        return np.array([d ** (-a) for d, a in zip(self.distances, self.pathloss_exps)])

    @property
    def scatter_variances(self):
        """Per-entry variance of the scattered component, one value per user."""
        return self.path_gains / (self.rician_k + 1.0)


@dataclass
class ChannelRealization:
    """One draw of the true channel and, optionally, of the estimation noise."""

    h_true: np.ndarray
    h_det: np.ndarray
    omega: Optional[np.ndarray] = None

    @property
    def h_los(self):
        """Full LOS matrix: ``h_det`` in column 1, zeros elsewhere."""
        out = np.zeros_like(self.h_true)
        out[..., :, 0] = self.h_det
        return out


def steering_vector(config: SystemConfig):
    """LOS column ``h_d`` of user 1 for a uniform linear array."""
    amp = math.sqrt(config.path_gains[0] * config.rician_k / (config.rician_k + 1.0))
    phase_step = 2.0 * math.pi * config.antenna_spacing_wavelengths * math.sin(math.radians(config.arrival_angle_deg))
    q = np.arange(config.n_rx)
    return amp * np.exp(-1j * q * phase_step)


def sample_channels(config: SystemConfig, rng, size, with_omega=True):
    """Draw ``size`` independent realizations as stacked arrays.

    Returns a :class:`ChannelRealization` whose ``h_true`` has shape
    ``(size, N, M)``; ``h_det`` is shared.
    """
    n, m = config.n_rx, config.n_tx
    h_d = steering_vector(config)
    std = np.sqrt(config.scatter_variances)
    h = complex_normal(rng, (size, n, m)) * std
    h[:, :, 0] += h_d
    omega = complex_normal(rng, (size, n, m)) if with_omega else None
    return ChannelRealization(h_true=h, h_det=h_d, omega=omega)


def sample_channel(config: SystemConfig, rng, with_omega=True):
    """Draw one realization ``H = H_d + H_r`` and, optionally, ``Omega``."""
    batch = sample_channels(config, rng, 1, with_omega)
    return ChannelRealization(
        h_true=batch.h_true[0],
        h_det=batch.h_det,
        omega=None if batch.omega is None else batch.omega[0],
    )


def estimated_channel(real: ChannelRealization, sigma_est):
    """Receiver's channel estimate ``H + sigma * Omega``."""
    if sigma_est == 0:
        return real.h_true
    if real.omega is None:
        raise ValueError("realization carries no estimation noise (omega is None)")
    return real.h_true + sigma_est * real.omega


def sample_noise_sources(config: SystemConfig, rng, size=None):
    """Transmit distortion, receive distortion and thermal noise.

    Returns ``(n_t, n_r, w)`` with variances ``p kappa_t^2``,
    ``p kappa_r^2 M`` and ``N0``. With ``size`` given, a leading batch axis
    is added.
    """
    if config.snr_db == math.inf:
        raise ValueError("absolute noise samples are undefined at infinite SNR")
    p = config.tx_power
    n, m = config.n_rx, config.n_tx
    lead = () if size is None else (size,)
    n_t = complex_normal(rng, lead + (m,), p * config.kappa_t ** 2)
    n_r = complex_normal(rng, lead + (n,), p * config.kappa_r ** 2 * m)
    w = complex_normal(rng, lead + (n,), config.noise_power)
    return n_t, n_r, w
