"""Closed-form outage and ergodic-capacity expressions for ZF and ZF-SIC.

Each detected stream ``i`` has the statistic ``Y_i = 1/[(H^H H)^-1]_ii``
(on the stage-deflated channel for ZF-SIC). With ``n`` projection degrees
of freedom, ``s * Y_i`` is a (non-)central chi-squared variable with ``2n``
degrees of freedom, where ``s = 2 (K+1) / d_i**-alpha_i`` is twice the
inverse scattered variance. For the LOS stream the non-centrality is
``c * beta`` with ``c = 2 N K`` and ``beta ~ Beta(n, M-1)``: the fraction
of the LOS power that survives projection onto a uniformly oriented
``n``-dimensional subspace. Rayleigh streams are central.

Two parameterizations of this law are available through ``law``:

``"matched"`` (default)
    the constants above, which follow from the channel model.
``"unit"``
    non-centrality ``beta`` (``c = 1``) and ``s = (K+1)/d_i**-alpha_i``.
    An alternative scaling kept for comparison; it does not describe the
    sampled channel.

Capacities are returned in nats ("normalized" units); multiply by
``1/ln 2`` (see :func:`to_bps_hz`) for bit/s/Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

from .channel import SystemConfig
from .specfun import (
    DEFAULT_CONTROL,
    ConvergenceError,
    SeriesControl,
    SeriesResult,
    _FINE_CONTROL,
    _log_kummer_many,
    _upper_cf_scaled,
    exp1,
    marcum_integral_j,
    marcum_q_complement,
)

__all__ = [
    "MODES",
    "LAWS",
    "StreamLaw",
    "EffectiveNoiseParams",
    "to_bps_hz",
    "psi_approx",
    "psi_exact",
    "stream_law",
    "noise_params",
    "y_cdf",
    "y_sf",
    "y_cdf_rician",
    "y_cdf_rayleigh",
    "snr_cdf",
    "outage",
    "outage_rician",
    "outage_rayleigh",
    "outage_floor",
    "scaled_gamma_terms",
    "capacity_rayleigh",
    "capacity_rician",
    "capacity_partial_sums",
    "capacity_closed_form",
    "capacity_numeric",
    "sum_capacity",
    "terms_to_three_decimals",
    "table_one",
    "TABLE_ONE_ROWS",
    "sample_stream_law",
]

MODES = ("zf", "zf_sic")
LAWS = ("matched", "unit")
TABLE_ONE_ROWS = ((4, 4), (8, 4), (8, 8), (16, 8), (64, 8), (128, 8))

# CDF excursions beyond this are treated as numerical failures, not clamped.
_CLAMP_SLACK = 1e-9
# Relative error budget for the alternating closed form before falling back
# to direct quadrature over the Beta mixture.
_CANCEL_LIMIT = 1e-10
_J_REL_ERR = 1e-13


def to_bps_hz(value_nats):
    """Convert a normalized (nats) capacity to bit/s/Hz."""
    return value_nats / math.log(2.0)


def _check_stage(config, stage):
    if int(stage) != stage or not 1 <= stage <= config.n_tx:
        raise ValueError(f"stage must be an integer in [1, {config.n_tx}], got {stage}")
    return int(stage)


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _check_law(law):
    if law not in LAWS:
        raise ValueError(f"law must be one of {LAWS}, got {law!r}")


# ---------------------------------------------------------------------------
# Noise scale
# ---------------------------------------------------------------------------

def psi_approx(config: SystemConfig):
    """Aggregate noise/distortion scale with the trace term relaxed away."""
    m = config.n_tx
    return (config.kappa_r ** 2 * m + config.inv_snr) + config.sigma_est ** 2 * m * (1.0 + config.kappa_t ** 2)


def psi_exact(config: SystemConfig, trace_inv_gram):
    """Noise scale including the realization-dependent ``tr[(H^H H)^-1]`` term."""
    if trace_inv_gram < 0:
        raise ValueError(f"trace_inv_gram must be non-negative, got {trace_inv_gram}")
    base = config.kappa_r ** 2 * config.n_tx + config.inv_snr
    return psi_approx(config) + config.sigma_est ** 2 * base * trace_inv_gram


# ---------------------------------------------------------------------------
# Per-stream law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StreamLaw:
    """Distribution of ``Y_i`` for one detected stream.

    ``scale * Y`` is chi-squared with ``2 * dof`` degrees of freedom and
    non-centrality ``noncentrality * beta``; ``beta ~ Beta(dof, beta_b)``
    when ``beta_b > 0`` and ``beta = 1`` otherwise.
    """

    dof: int
    scale: float
    noncentrality: float
    beta_b: int

    @property
    def is_central(self):
        return self.noncentrality == 0.0


@dataclass(frozen=True)
class EffectiveNoiseParams:
    """Noise scale ``psi``, ``kappa_t**2`` and the stream scale ``s``."""

    psi: float
    kappa_t_sq: float
    scale: float

    def __post_init__(self):
        if not self.psi > 0:
            raise ValueError(f"psi must be positive, got {self.psi}")
        if self.kappa_t_sq < 0:
            raise ValueError("kappa_t_sq must be non-negative")


def stage_dof(config: SystemConfig, stage, mode="zf_sic"):
    """Projection degrees of freedom of stream ``stage``."""
    _check_mode(mode)
    stage = _check_stage(config, stage)
    if mode == "zf":
        return config.n_rx - config.n_tx + 1
    return config.n_rx - config.n_tx + stage


def stream_law(config: SystemConfig, stage=1, mode="zf_sic", law="matched"):
    """Distribution parameters of ``Y_stage``."""
    _check_law(law)
    stage = _check_stage(config, stage)
    n = stage_dof(config, stage, mode)
    gain = float(config.path_gains[stage - 1])
    k = config.rician_k
    if law == "matched":
        scale = 2.0 * (k + 1.0) / gain
        nonc = 2.0 * config.n_rx * k if stage == 1 else 0.0
    else:
        scale = (k + 1.0) / gain
        nonc = 1.0 if stage == 1 else 0.0
    beta_b = config.n_tx - 1 if (stage == 1 and nonc > 0) else 0
    return StreamLaw(dof=n, scale=scale, noncentrality=nonc, beta_b=beta_b)


def noise_params(config: SystemConfig, stage=1, mode="zf_sic", law="matched"):
    return EffectiveNoiseParams(
        psi=psi_approx(config),
        kappa_t_sq=config.kappa_t ** 2,
        scale=stream_law(config, stage, mode, law).scale,
    )


# ---------------------------------------------------------------------------
# CDF of Y
# ---------------------------------------------------------------------------

def _clamp(value, what):
    if value < -_CLAMP_SLACK or value > 1.0 + _CLAMP_SLACK:
        raise ArithmeticError(f"{what} evaluated to {value!r}, outside [0, 1]")
    return min(1.0, max(0.0, value))


def _beta_window(a, b):
    mean = a / (a + b)
    sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    return max(0.0, mean - 14.0 * sd), min(1.0, mean + 14.0 * sd), mean


def _mixture_cdf_quad(law: StreamLaw, z):
    """``E_beta[1 - Q_n(sqrt(c beta), sqrt(z))]`` by direct quadrature."""
    n, b, c = law.dof, law.beta_b, law.noncentrality
    log_b = special.betaln(n, b)
    root_z = math.sqrt(z)

    def f(u):
        if u <= 0.0 or u >= 1.0:
            return 0.0
        w = math.exp((n - 1) * math.log(u) + (b - 1) * math.log1p(-u) - log_b)
        return w * marcum_q_complement(n, math.sqrt(c * u), root_z)

    lo, hi, mode = _beta_window(n, b)
    pts = [mode] if lo < mode < hi else None
    val, err = integrate.quad(f, lo, hi, points=pts, epsabs=1e-15, epsrel=1e-11, limit=200)
    if err > 1e-8 * max(val, 1e-300) and err > 1e-14:
        raise ConvergenceError(f"Beta-mixture quadrature did not converge (err={err:g})")
    return val


def _mixture_closed_form(law: StreamLaw, z):
    """Binomial expansion of the Beta mixture into Marcum-integral terms.

    Returns ``(survival, error_estimate)``.
    """
    n, b, c = law.dof, law.beta_b, law.noncentrality
    root_z = math.sqrt(z)
    log_beta = special.betaln(n, b)
    total = 0.0
    magnitude = 0.0
    for j in range(b):
        coef = math.exp(math.lgamma(b) - math.lgamma(j + 1) - math.lgamma(b - j) - log_beta)
        term = coef * marcum_integral_j(n - 1 + j, n, root_z, c)
        magnitude += abs(term)
        total += term if j % 2 == 0 else -term
    return total, _J_REL_ERR * magnitude


def _y_cdf_sf(law: StreamLaw, x):
    """Return ``(F(x), 1 - F(x))`` for ``Y`` with the given law."""
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    if x == 0:
        return 0.0, 1.0
    z = law.scale * x
    if law.is_central:
        return float(special.gammainc(law.dof, 0.5 * z)), float(special.gammaincc(law.dof, 0.5 * z))
    if law.beta_b == 0:
        cdf = marcum_q_complement(law.dof, math.sqrt(law.noncentrality), math.sqrt(z))
        return cdf, 1.0 - cdf
    sf, err = _mixture_closed_form(law, z)
    cdf = 1.0 - sf
    if err > _CANCEL_LIMIT * max(min(cdf, sf), 0.0) or not -_CLAMP_SLACK <= cdf <= 1 + _CLAMP_SLACK:
        cdf = _mixture_cdf_quad(law, z)
        return cdf, 1.0 - cdf
    return cdf, sf


def y_cdf(config: SystemConfig, stage, x, mode="zf_sic", law="matched"):
    """CDF of ``Y_stage`` at ``x``."""
    cdf, _ = _y_cdf_sf(stream_law(config, stage, mode, law), x)
    return _clamp(cdf, "CDF")


def y_sf(config: SystemConfig, stage, x, mode="zf_sic", law="matched"):
    """Survival function ``1 - F_Y(x)``, evaluated without subtraction where possible."""
    _, sf = _y_cdf_sf(stream_law(config, stage, mode, law), x)
    return _clamp(sf, "survival function")


def y_cdf_rician(config: SystemConfig, x, law="matched"):
    """CDF of ``Y_1`` for the LOS stream.

    Uses the finite binomial expansion of the Beta mixture in terms of
    Marcum-Q integrals; when its alternating terms cancel beyond the error
    budget the mixture is integrated directly.
    """
    return y_cdf(config, 1, x, "zf_sic", law)


def y_cdf_rayleigh(config: SystemConfig, stage, x, mode="zf_sic", law="matched"):
    """CDF of ``Y_stage`` for a Rayleigh stream: a regularized lower gamma."""
    if _check_stage(config, stage) == 1:
        raise ValueError("stage 1 carries the LOS component; use y_cdf_rician")
    return y_cdf(config, stage, x, mode, law)


def snr_cdf(config: SystemConfig, stage, x, mode="zf_sic", law="matched", psi=None):
    """CDF of the per-stream SNR ``1/(kappa_t^2 + psi/Y)``.

    Equals 1 at and beyond the ceiling ``1/kappa_t^2``.
    """
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    kt2 = config.kappa_t ** 2
    if kt2 * x >= 1.0:
        return 1.0
    psi = psi_approx(config) if psi is None else psi
    if psi == 0:
        return 0.0
    return y_cdf(config, stage, psi * x / (1.0 - kt2 * x), mode, law)


def _snr_sf(config, stage, x, mode, law, psi):
    kt2 = config.kappa_t ** 2
    if kt2 * x >= 1.0:
        return 0.0
    return y_sf(config, stage, psi * x / (1.0 - kt2 * x), mode, law)


def outage(config: SystemConfig, stage, gamma_th, mode="zf_sic", law="matched"):
    """Outage probability ``P[SNR_stage < gamma_th]``."""
    if not gamma_th > 0:
        raise ValueError(f"gamma_th must be positive, got {gamma_th}")
    return snr_cdf(config, stage, gamma_th, mode, law)


def outage_rician(config: SystemConfig, gamma_th, law="matched"):
    """Outage probability of the LOS stream."""
    return outage(config, 1, gamma_th, "zf_sic", law)


def outage_rayleigh(config: SystemConfig, stage, gamma_th, mode="zf_sic", law="matched"):
    """Outage probability of Rayleigh stream ``stage >= 2``."""
    if _check_stage(config, stage) == 1:
        raise ValueError("stage 1 carries the LOS component; use outage_rician")
    return outage(config, stage, gamma_th, mode, law)


def outage_floor(config: SystemConfig, stage, gamma_th, mode="zf_sic", law="matched"):
    """High-SNR outage limit: the thermal-noise term is dropped."""
    ideal = config.sigma_est == 0 and config.kappa_t == 0 and config.kappa_r == 0
    if ideal:
        return 0.0
    return outage(replace(config, snr_db=math.inf), stage, gamma_th, mode, law)


# ---------------------------------------------------------------------------
# Ergodic capacity
# ---------------------------------------------------------------------------

def scaled_gamma_terms(g, count):
    """``t_j = g**j e**g Gamma(-j, g)`` for ``j = 0 .. count-1``.

    ``t_j = (1 - g t_{j-1}) / j`` damps errors upward once ``j > g`` and
    downward while ``j < g``, so the sequence is seeded by a continued
    fraction at ``j* ~ g`` and run in both directions from there.
    """
    if not g > 0:
        raise ValueError(f"g must be positive, got {g}")
    count = int(count)
    out = np.empty(count)
    if count == 0:
        return out
    start = min(count - 1, int(g))
    if start == 0:
        out[0] = math.exp(g) * exp1(g) if g < 1.0 else _upper_cf_scaled(0.0, g)
    else:
        out[start] = _upper_cf_scaled(-float(start), g)
    for j in range(start, 0, -1):
        out[j - 1] = (1.0 - j * out[j]) / g
    for j in range(start + 1, count):
        out[j] = (1.0 - g * out[j - 1]) / j
    return out


def _require_ideal_tx(config):
    if config.kappa_t != 0:
        raise ValueError("closed-form capacity requires kappa_t == 0; use capacity_numeric")


def capacity_rayleigh(config: SystemConfig, stage, mode="zf_sic", law="matched"):
    """Ergodic capacity (nats) of Rayleigh stream ``stage``: a finite sum."""
    _require_ideal_tx(config)
    if _check_stage(config, stage) == 1 and config.rician_k > 0:
        raise ValueError("stage 1 carries the LOS component; use capacity_rician")
    lw = stream_law(config, stage, mode, law)
    if lw.noncentrality:
        raise ValueError("stream is not Rayleigh-faded under this law")
    g = 0.5 * psi_approx(config) * lw.scale
    if g == 0:
        return math.inf
    return math.fsum(scaled_gamma_terms(g, lw.dof))


def _mixture_log_weights(law: StreamLaw, k):
    """Log of ``P[kappa = k]`` where ``kappa | beta ~ Poisson(c beta / 2)``."""
    k = np.asarray(k, dtype=float)
    lam = 0.5 * law.noncentrality
    base = k * math.log(lam) - special.gammaln(k + 1.0)
    if law.beta_b == 0:
        return base - lam
    n, b = law.dof, law.beta_b
    ratio = special.betaln(n + k, b) - special.betaln(n, b)
    # E[beta^k e^{-lam beta}] via Kummer's transformation.
    return base + ratio - lam + _log_kummer_many(b, n + k + b, lam, _FINE_CONTROL)


def capacity_partial_sums(config: SystemConfig, terms, law="matched", stage=1, mode="zf_sic"):
    """Partial sums ``P_1 .. P_terms`` of the LOS-stream capacity series (nats).

    ``P_T`` keeps outer terms ``k = 0 .. T-1``. Every term is positive, so the
    sequence is strictly increasing.
    """
    _require_ideal_tx(config)
    lw = stream_law(config, stage, mode, law)
    g = 0.5 * psi_approx(config) * lw.scale
    if not g > 0:
        raise ValueError("capacity diverges when psi == 0")
    inner = np.cumsum(scaled_gamma_terms(g, lw.dof + terms))
    if lw.is_central:
        contrib = np.zeros(terms)
        contrib[0] = inner[lw.dof - 1]
        return np.cumsum(contrib)
    k = np.arange(terms)
    weights = np.exp(_mixture_log_weights(lw, k))
    return np.cumsum(weights * inner[lw.dof - 1 + k])


def capacity_rician(config: SystemConfig, ctrl: SeriesControl = DEFAULT_CONTROL, law="matched",
                    stage=1, mode="zf_sic"):
    """Ergodic capacity (nats) of the LOS stream as a Poisson-mixture series.

    Outer term ``k`` weights the capacity of a central stream with
    ``n + k`` degrees of freedom by the probability of ``k`` under the
    Beta-mixed Poisson law of the non-centrality.

    Returns
    -------
    SeriesResult
        ``value`` in nats, ``terms_used`` outer terms, and whether ``ctrl``
        was met. Raises :class:`ConvergenceError` when it was not.
    """
    _require_ideal_tx(config)
    lw = stream_law(config, stage, mode, law)
    g = 0.5 * psi_approx(config) * lw.scale
    if not g > 0:
        raise ValueError("capacity diverges when psi == 0")
    if lw.is_central:
        return SeriesResult(math.fsum(scaled_gamma_terms(g, lw.dof)), 1, True)
    lam = 0.5 * lw.noncentrality
    block = int(lam + 10.0 * math.sqrt(lam) + 32)
    while True:
        terms = min(block, ctrl.max_terms)
        inner = np.cumsum(scaled_gamma_terms(g, lw.dof + terms))
        k = np.arange(terms)
        weights = np.exp(_mixture_log_weights(lw, k))
        contrib = weights * inner[lw.dof - 1 + k]
        partial = np.cumsum(contrib)
        mass = np.cumsum(weights)
        # Tail bound: remaining Poisson mass times a Jensen bound on the
        # inner capacity, ln(1 + (n + k)/g) <= (n + k)/g, at the next index.
        tail = np.clip(1.0 - mass, 0.0, None) * np.log1p((lw.dof + k + 1 + lam + 10.0 * math.sqrt(lam + 1.0)) / g)
        ok = np.nonzero((tail <= np.maximum(ctrl.abs_tol, ctrl.rel_tol * partial)) & (k + 1 >= lam))[0]
        if ok.size:
            used = int(ok[0]) + 1
            return SeriesResult(float(partial[used - 1]), used, True)
        if terms >= ctrl.max_terms:
            raise ConvergenceError(f"capacity series not converged within {ctrl.max_terms} terms")
        block *= 2


def capacity_closed_form(config: SystemConfig, stage, mode="zf_sic", law="matched", ctrl=DEFAULT_CONTROL):
    """Closed-form capacity (nats) of any stream with ``kappa_t == 0``."""
    lw = stream_law(config, stage, mode, law)
    if lw.is_central:
        return capacity_rayleigh(config, stage, mode, law) if stage > 1 else capacity_rician(
            config, ctrl, law, stage, mode).value
    return capacity_rician(config, ctrl, law, stage, mode).value


def capacity_numeric(config: SystemConfig, stage, mode="zf_sic", law="matched"):
    """Ergodic capacity (nats) by quadrature of ``int (1 - F_SNR(x)) / (1 + x) dx``.

    The upper limit is the SNR ceiling ``1/kappa_t^2``; without transmit
    distortion the half-line is mapped to ``[0, 1)`` by ``x = t / (1 - t)``.
    """
    _check_stage(config, stage)
    psi = psi_approx(config)
    kt2 = config.kappa_t ** 2
    opts = dict(epsabs=1e-12, epsrel=1e-10, limit=400)
    if kt2 > 0:
        val, err = integrate.quad(lambda x: _snr_sf(config, stage, x, mode, law, psi) / (1.0 + x), 0.0, 1.0 / kt2, **opts)
    else:
        def f(t):
            if t >= 1.0:
                return 0.0
            x = t / (1.0 - t)
            return _snr_sf(config, stage, x, mode, law, psi) / (1.0 - t)

        # Most of the mass sits near the median SNR; split there.
        lw = stream_law(config, stage, mode, law)
        mean_snr = (lw.dof + 0.5 * lw.noncentrality) / (0.5 * lw.scale * psi) if psi > 0 else 1.0
        t_mid = mean_snr / (1.0 + mean_snr)
        val, err = integrate.quad(f, 0.0, 1.0, points=[t_mid], **opts)
    if err > 1e-7 * max(abs(val), 1e-12):
        raise ConvergenceError(f"capacity quadrature did not converge (err={err:g})")
    return val


def sum_capacity(config: SystemConfig, mode="zf_sic", ctrl: SeriesControl = DEFAULT_CONTROL, law="matched"):
    """Sum of per-stream ergodic capacities (nats).

    Uses the closed forms when ``kappa_t == 0`` and quadrature otherwise.
    Under ``"zf"`` every stream keeps ``N - M + 1`` degrees of freedom.
    """
    _check_mode(mode)
    total = 0.0
    for stage in range(1, config.n_tx + 1):
        if config.kappa_t == 0:
            total += capacity_closed_form(config, stage, mode, law, ctrl)
        else:
            total += capacity_numeric(config, stage, mode, law)
    return total


def terms_to_three_decimals(config: SystemConfig, law="unit", lookahead=5, max_terms=2000):
    """Outer terms needed before the third decimal of the capacity settles.

    The count is the smallest ``T`` for which the partial sums with ``T``
    and ``T + lookahead`` terms agree in their first three decimals. With
    ``lookahead=None`` it is the smallest ``T`` after which the third
    decimal never changes again, which is robust to series whose leading
    terms are negligible.
    """
    extra = max_terms if lookahead is None else lookahead
    partial = capacity_partial_sums(config, max_terms + extra, law)
    digits = np.floor(partial * 1000.0 + 1e-9)
    if lookahead is None:
        if partial[-1] - partial[max_terms - 1] >= 1e-3:
            raise ConvergenceError(f"third decimal not settled within {max_terms} terms")
        changed = np.nonzero(digits[:max_terms] != digits[-1])[0]
        return 1 if changed.size == 0 else int(changed[-1]) + 2
    for t in range(1, max_terms + 1):
        if digits[t - 1] == digits[t - 1 + lookahead]:
            return t
    raise ConvergenceError(f"third decimal not settled within {max_terms} terms")


def table_one(snr_db=10.0, k_db=6.0, rows=TABLE_ONE_ROWS, law="unit", lookahead=5, **overrides):
    """Terms-to-three-decimals for each ``(N, M)`` row."""
    out = []
    for n, m in rows:
        cfg = SystemConfig.symmetric(n, m, rician_k_db=k_db, snr_db=snr_db, **overrides)
        out.append((n, m, terms_to_three_decimals(cfg, law, lookahead)))
    return out


def sample_stream_law(config: SystemConfig, stage, rng, size, mode="zf_sic", law="matched"):
    """Draw ``Y_stage`` directly from its mixture law (for distribution tests)."""
    lw = stream_law(config, stage, mode, law)
    if lw.is_central:
        x = rng.chisquare(2 * lw.dof, size)
    else:
        beta = rng.beta(lw.dof, lw.beta_b, size) if lw.beta_b else np.ones(size)
        x = rng.noncentral_chisquare(2 * lw.dof, lw.noncentrality * beta)
    return x / lw.scale
