"""Monte Carlo link-level engine for ZF and ZF-SIC detection.

Trials are drawn in fixed-size blocks. Block ``b`` uses its own generator
seeded from ``SeedSequence(seed, spawn_key=(b,))`` and per-block results
are reduced in block order, so every report depends only on ``seed`` and
``trials``, whatever the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import ChannelRealization, SystemConfig, estimated_channel, sample_channels, steering_vector
from .metrics import MODES, psi_approx

__all__ = [
    "COND_LIMIT",
    "IllConditionedError",
    "MonteCarloReport",
    "DetectionMode",
    "inv_gram_diag",
    "projection_dof_check",
    "deflate",
    "stream_sinr_batch",
    "stream_snr_statistic",
    "stream_sinr_full",
    "estimate_outage",
    "estimate_capacity",
    "wishart_trace_reference",
    "wishart_trace_stats",
    "sample_y_statistic",
    "sample_sinr",
]

COND_LIMIT = 1e12
_EPS = 1e-300
# Complex entries per block; keeps a block's channel tensor near 32 MB.
_BLOCK_BUDGET = 2_000_000


class IllConditionedError(np.linalg.LinAlgError):
    """Gram matrix too close to singular for a reliable inverse."""


@dataclass
class MonteCarloReport:
    """Point estimate with its standard error and optional analytic reference."""

    trials: int
    seed: int
    estimate: float
    std_error: float
    analytic_ref: Optional[float] = None
    rel_delta: Optional[float] = None
    resampled: int = 0

    def __post_init__(self):
        self.estimate = float(self.estimate)
        self.std_error = float(self.std_error)
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")
        if self.analytic_ref is not None and self.rel_delta is None:
            self.rel_delta = abs(self.estimate - self.analytic_ref) / max(abs(self.analytic_ref), _EPS)

    @property
    def z_score(self):
        """``|estimate - analytic_ref|`` in standard errors."""
        if self.analytic_ref is None:
            return None
        diff = abs(self.estimate - self.analytic_ref)
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.std_error


@dataclass(frozen=True)
class DetectionMode:
    """Detector (``zf`` or ``zf_sic``) and SINR model.

    ``snr_model="statistic"`` evaluates ``1/(kappa_t^2 + psi [(H^H H)^-1]_ii)``
    with the realization's exact ``psi``; ``"full_system"`` applies the
    estimated-channel pseudo-inverse to the true channel and accounts for
    every noise and distortion term explicitly.
    """

    mode: str = "zf_sic"
    snr_model: str = "full_system"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.snr_model not in ("statistic", "full_system"):
            raise ValueError(f"snr_model must be 'statistic' or 'full_system', got {self.snr_model!r}")


def _hermitian_gram(h):
    return np.conj(np.swapaxes(h, -1, -2)) @ h


def _condition(gram):
    ev = np.linalg.eigvalsh(gram)
    return ev[..., -1] / np.maximum(ev[..., 0], _EPS)


def _condition_screen(gram):
    """Condition numbers, exact only where the cheap bound cannot clear them.

    For a Hermitian positive definite matrix ``cond <= tr(G) tr(G^-1)``, so
    eigenvalues are computed only for realizations whose bound exceeds
    ``COND_LIMIT``.
    """
    try:
        eye = np.broadcast_to(np.eye(gram.shape[-1], dtype=gram.dtype), gram.shape)
        inv_tr = np.real(np.trace(np.linalg.solve(gram, eye), axis1=-2, axis2=-1))
        bound = np.real(np.trace(gram, axis1=-2, axis2=-1)) * inv_tr
    except np.linalg.LinAlgError:
        return _condition(gram)
    cond = np.where(inv_tr > 0, bound, np.inf)
    suspect = ~(cond <= COND_LIMIT)
    if np.any(suspect):
        cond[suspect] = _condition(gram[suspect])
    return cond


def inv_gram_diag(h, check=True):
    """Diagonal and trace of ``(H^H H)^-1`` by Gram-matrix solves.

    Works on a single ``N x M`` matrix or a stack ``(..., N, M)``.

    Returns
    -------
    diag : ndarray, shape (..., M)
    trace : ndarray, shape (...)

    Raises
    ------
    IllConditionedError
        If any Gram matrix has condition number above ``COND_LIMIT``.
    """
    h = np.asarray(h)
    if h.shape[-2] < h.shape[-1]:
        raise ValueError(f"need at least as many rows as columns, got shape {h.shape}")
    gram = _hermitian_gram(h)
    if check:
        cond = _condition(gram)
        if np.any(~(cond <= COND_LIMIT)):
            raise IllConditionedError(f"Gram matrix condition number {np.max(cond):.3g} exceeds {COND_LIMIT:g}")
    eye = np.broadcast_to(np.eye(h.shape[-1], dtype=gram.dtype), gram.shape)
    inv = np.linalg.solve(gram, eye)
    diag = np.real(np.diagonal(inv, axis1=-2, axis2=-1)).copy()
    return diag, diag.sum(axis=-1)


def projection_dof_check(h, stage=None, tol=1e-8):
    """Eigenvalue counts of the projector that isolates the first column of ``h``.

    ``h`` is the stage-deflated channel (its first column is the desired
    stream). The projector onto the orthogonal complement of the remaining
    columns must have eigenvalues in ``{0, 1}`` only; returns
    ``(count_zero, count_one)``, which for stage ``i`` of an ``N x M``
    system is ``(M - i, N - M + i)``.
    """
    h = np.asarray(h)
    n, k = h.shape
    if stage is not None and stage < 1:
        raise ValueError(f"stage must be >= 1, got {stage}")
    others = h[:, 1:]
    if k > 1:
        gram = _hermitian_gram(others)
        proj = np.eye(n) - others @ np.linalg.solve(gram, np.conj(others.T))
    else:
        proj = np.eye(n, dtype=h.dtype)
    ev = np.linalg.eigvalsh(0.5 * (proj + np.conj(proj.T)))
    zeros = int(np.sum(np.abs(ev) <= tol))
    ones = int(np.sum(np.abs(ev - 1.0) <= tol))
    if zeros + ones != n:
        raise ArithmeticError(f"projector eigenvalues off {{0, 1}}: {ev}")
    return zeros, ones


def deflate(h, stage, mode):
    """Active columns and the desired column index for ``stage`` (1-based)."""
    if mode == "zf_sic":
        return h[..., stage - 1:], 0
    return h, stage - 1


def stream_sinr_batch(h_true, omega, config: SystemConfig, stage, detection=DetectionMode()):
    """SINR of stream ``stage`` for a stack of realizations.

    Parameters
    ----------
    h_true : ndarray, shape (T, N, M)
    omega : ndarray or None
        Estimation noise, required for ``full_system`` with ``sigma_est > 0``.
    """
    hd, des = deflate(h_true, stage, detection.mode)
    kt2 = config.kappa_t ** 2
    base = config.kappa_r ** 2 * config.n_tx + config.inv_snr
    if detection.snr_model == "statistic":
        diag, trace = inv_gram_diag(hd, check=False)
        psi = psi_approx(config) + config.sigma_est ** 2 * base * trace
        return 1.0 / (kt2 + psi * diag[..., des])
    if config.sigma_est > 0:
        if omega is None:
            raise ValueError("full_system SINR with sigma_est > 0 needs omega")
        od, _ = deflate(omega, stage, detection.mode)
        hat = hd + config.sigma_est * od
    else:
        hat = hd
    gram = _hermitian_gram(hat)
    rhs = np.zeros(gram.shape[:-1] + (1,), dtype=gram.dtype)
    rhs[..., des, 0] = 1.0
    v = np.linalg.solve(gram, rhs)
    # Filter row g = (H_hat v)^H, so g h_j = v^H H_hat^H h_j and ||g||^2 = v_des.
    gh = (np.conj(np.swapaxes(v, -1, -2)) @ (np.conj(np.swapaxes(hat, -1, -2)) @ hd))[..., 0, :]
    power = np.abs(gh) ** 2
    signal = power[..., des]
    total = power.sum(axis=-1)
    g_norm = np.real(v[..., des, 0])
    return signal / ((total - signal) + kt2 * total + base * g_norm)


def _as_batch(real: ChannelRealization):
    h = real.h_true[None]
    om = None if real.omega is None else real.omega[None]
    return h, om


def stream_snr_statistic(real: ChannelRealization, config: SystemConfig, stage, mode="zf_sic"):
    """SNR of one realization from the exact-``psi`` statistic."""
    h, om = _as_batch(real)
    inv_gram_diag(deflate(h, stage, mode)[0])
    return float(stream_sinr_batch(h, om, config, stage, DetectionMode(mode, "statistic"))[0])


def stream_sinr_full(real: ChannelRealization, config: SystemConfig, stage, mode="zf_sic"):
    """Post-detection SINR of one realization with the full noise model."""
    h, om = _as_batch(real)
    hat = deflate(estimated_channel(real, config.sigma_est)[None], stage, mode)[0]
    inv_gram_diag(hat)
    return float(stream_sinr_batch(h, om, config, stage, DetectionMode(mode, "full_system"))[0])


# ---------------------------------------------------------------------------
# Block engine
# ---------------------------------------------------------------------------

def _block_size(config):
    return int(max(1000, min(50_000, _BLOCK_BUDGET // (config.n_rx * config.n_tx))))


def _block_rng(seed, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _well_conditioned_channels(config, rng, size, stage, mode):
    """Sample channels, redrawing any realization with an ill-conditioned Gram matrix."""
    need_omega = config.sigma_est > 0
    batch = sample_channels(config, rng, size, with_omega=need_omega)
    h, om = batch.h_true, batch.omega
    redrawn = 0
    while True:
        hat = h if om is None else h + config.sigma_est * om
        cond = _condition_screen(_hermitian_gram(deflate(h, stage, mode)[0]))
        if om is not None:
            cond = np.maximum(cond, _condition_screen(_hermitian_gram(deflate(hat, stage, mode)[0])))
        bad = np.nonzero(~(cond <= COND_LIMIT))[0]
        if bad.size == 0:
            return h, om, redrawn
        redrawn += bad.size
        fresh = sample_channels(config, rng, bad.size, with_omega=need_omega)
        h[bad] = fresh.h_true
        if om is not None:
            om[bad] = fresh.omega


def _run_blocks(config, trials, seed, work, workers):
    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials}")
    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    trials = int(trials)
    size = _block_size(config)
    sizes = [min(size, trials - start) for start in range(0, trials, size)]
    jobs = [(i, s) for i, s in enumerate(sizes)]

    def run(job):
        idx, s = job
        return work(_block_rng(int(seed), idx), s)

    if workers is None or workers <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(run, jobs))


class _Moments:
    """Shifted power sums, merged in a fixed order."""

    def __init__(self, shift=0.0):
        self.shift = shift
        self.n = 0
        self.s = np.zeros(5)

    def add(self, x):
        d = np.asarray(x, dtype=float) - self.shift
        self.n += d.size
        self.s += [d.size, d.sum(), (d ** 2).sum(), (d ** 3).sum(), (d ** 4).sum()]

    @property
    def mean(self):
        return self.shift + self.s[1] / self.n

    def central(self):
        n = self.n
        m1 = self.s[1] / n
        m2 = self.s[2] / n - m1 ** 2
        m4 = self.s[4] / n - 4 * m1 * self.s[3] / n + 6 * m1 ** 2 * self.s[2] / n - 3 * m1 ** 4
        return m2, m4

    @property
    def variance(self):
        m2, _ = self.central()
        return m2 * self.n / (self.n - 1)

    @property
    def mean_se(self):
        return math.sqrt(max(self.variance, 0.0) / self.n)

    @property
    def variance_se(self):
        m2, m4 = self.central()
        return math.sqrt(max(m4 - m2 ** 2, 0.0) / self.n)


def sample_sinr(config: SystemConfig, stage, trials, seed, detection=DetectionMode(), workers=1):
    """All per-trial SINR values (block order) and the number of redraws."""
    def work(rng, size):
        h, om, redrawn = _well_conditioned_channels(config, rng, size, stage, detection.mode)
        return stream_sinr_batch(h, om, config, stage, detection), redrawn

    parts = _run_blocks(config, trials, seed, work, workers)
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def estimate_outage(config: SystemConfig, stage, gamma_th, mode="zf_sic", trials=100_000, seed=0,
                    snr_model="full_system", analytic_ref=None, workers=1):
    """Fraction of trials with SINR below ``gamma_th``."""
    if gamma_th < 0:
        raise ValueError(f"gamma_th must be non-negative, got {gamma_th}")
    detection = DetectionMode(mode, snr_model)

    def work(rng, size):
        h, om, redrawn = _well_conditioned_channels(config, rng, size, stage, mode)
        sinr = stream_sinr_batch(h, om, config, stage, detection)
        return int(np.count_nonzero(sinr < gamma_th)), redrawn

    parts = _run_blocks(config, trials, seed, work, workers)
    hits = sum(p[0] for p in parts)
    p_hat = hits / trials
    return MonteCarloReport(
        trials=int(trials), seed=int(seed), estimate=p_hat,
        std_error=math.sqrt(p_hat * (1.0 - p_hat) / trials),
        analytic_ref=analytic_ref, resampled=sum(p[1] for p in parts),
    )


def estimate_capacity(config: SystemConfig, stage, mode="zf_sic", trials=100_000, seed=0,
                      snr_model="full_system", analytic_ref=None, workers=1, units="bps_hz"):
    """Sample mean of ``log2(1 + SINR)`` (or ``ln`` with ``units="nats"``)."""
    if units not in ("bps_hz", "nats"):
        raise ValueError(f"units must be 'bps_hz' or 'nats', got {units!r}")
    detection = DetectionMode(mode, snr_model)
    log_fn = np.log2 if units == "bps_hz" else np.log1p

    def work(rng, size):
        h, om, redrawn = _well_conditioned_channels(config, rng, size, stage, mode)
        sinr = stream_sinr_batch(h, om, config, stage, detection)
        vals = np.log2(1.0 + sinr) if log_fn is np.log2 else np.log1p(sinr)
        return vals, redrawn

    acc = _Moments()
    redrawn = 0
    for vals, r in _run_blocks(config, trials, seed, work, workers):
        acc.add(vals)
        redrawn += r
    return MonteCarloReport(
        trials=int(trials), seed=int(seed), estimate=acc.mean, std_error=acc.mean_se,
        analytic_ref=analytic_ref, resampled=redrawn,
    )


def wishart_trace_reference(config: SystemConfig, stage, literal=False):
    """Reference mean and variance of ``tr[(H_i^H H_i)^-1]`` at stage ``i``.

    ``H_i^H H_i`` is treated as complex Wishart with ``N`` degrees of freedom
    and scale ``Sigma = E[H_i^H H_i] / N``. With ``m = N - M + i - 1``,

        mean = tr(Sigma^-1) / m
        var  = (tr Sigma^-1)^2 / (m^2 (m^2 - 1)) + tr(Sigma^-2) / (m (m^2 - 1)).

    This is exact for central channels. With ``literal=True`` the unit-scale
    expressions ``(M-i+1)/m`` and ``(M-i+1) N / (m^2 (m^2 - 1))`` are
    returned instead.
    """
    n, mm = config.n_rx, config.n_tx
    m = n - mm + stage - 1
    if m < 1:
        raise ValueError(f"trace mean needs N > M - i + 1 (got N={n}, M={mm}, i={stage})")
    k = mm - stage + 1
    var_ok = m >= 2
    if literal:
        mean = k / m
        var = k * n / (m ** 2 * (m ** 2 - 1)) if var_ok else math.nan
        return mean, var
    sigma = np.diag(config.scatter_variances[stage - 1:]).astype(complex)
    if stage == 1:
        hd = steering_vector(config)
        sigma[0, 0] += np.vdot(hd, hd) / n
    inv = np.linalg.inv(sigma)
    t1 = float(np.real(np.trace(inv)))
    t2 = float(np.real(np.trace(inv @ inv)))
    mean = t1 / m
    var = (t1 ** 2 / (m ** 2 * (m ** 2 - 1)) + t2 / (m * (m ** 2 - 1))) if var_ok else math.nan
    return mean, var


def wishart_trace_stats(config: SystemConfig, stage=1, trials=100_000, seed=0, workers=1):
    """Sample mean and variance of the stage-deflated ``tr[(H^H H)^-1]``.

    Returns two :class:`MonteCarloReport` objects whose ``analytic_ref``
    comes from :func:`wishart_trace_reference`.
    """
    if not config.n_rx > config.n_tx:
        raise ValueError(f"trace statistics need N > M (got N={config.n_rx}, M={config.n_tx})")
    ref_mean, ref_var = wishart_trace_reference(config, stage)

    def work(rng, size):
        h, _, redrawn = _well_conditioned_channels(config.with_(sigma_est=0.0), rng, size, stage, "zf_sic")
        _, trace = inv_gram_diag(deflate(h, stage, "zf_sic")[0], check=False)
        return trace, redrawn

    acc = _Moments(shift=ref_mean)
    redrawn = 0
    for tr, r in _run_blocks(config, trials, seed, work, workers):
        acc.add(tr)
        redrawn += r
    mean_rep = MonteCarloReport(int(trials), int(seed), acc.mean, acc.mean_se, ref_mean, resampled=redrawn)
    var_rep = MonteCarloReport(int(trials), int(seed), acc.variance, acc.variance_se,
                               None if math.isnan(ref_var) else ref_var, resampled=redrawn)
    return mean_rep, var_rep


def sample_y_statistic(config: SystemConfig, stage, trials, seed, mode="zf_sic", workers=1):
    """Samples of ``Y_i = 1/[(H_i^H H_i)^-1]_11`` on the true channel."""
    def work(rng, size):
        h, _, _ = _well_conditioned_channels(config.with_(sigma_est=0.0), rng, size, stage, mode)
        hd, des = deflate(h, stage, mode)
        diag, _ = inv_gram_diag(hd, check=False)
        return 1.0 / diag[..., des]

    return np.concatenate(_run_blocks(config, trials, seed, work, workers))
