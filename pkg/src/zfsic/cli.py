"""Command-line sweep runner and validation harness.

Subcommands::

    zfsic sweep <config.ini> --out <dir>
    zfsic validate <config.ini> --trials T --seed S --out report.json
    zfsic convergence <config.ini> --out table.csv

Configuration is INI. ``[system]`` mirrors :class:`SystemConfig` with K,
SNR and the threshold in dB; ``[scenario:<name>]`` sections override any
``[system]`` key (and ``mode``) for one curve family; ``[sweep]``,
``[validate]`` and ``[convergence]`` hold the per-command settings.
Exit status: 0 success, 1 failed checks, 2 configuration error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from . import metrics, simulator, specfun
from .channel import SystemConfig, db_to_linear

__all__ = ["ConfigError", "SweepSpec", "MetricCurve", "load_config", "run_sweep", "run_validate",
           "run_convergence", "main"]

AXES = ("snr_db", "rician_k_db", "gamma_th_db")
OUTPUTS = ("outage", "capacity", "sum_capacity", "floor")
SYSTEM_KEYS = {
    "n_rx", "n_tx", "rician_k_db", "distance", "distances", "pathloss_exp", "pathloss_exps",
    "sigma_est", "kappa", "kappa_t", "kappa_r", "snr_db", "noise_power", "arrival_angle_deg",
    "antenna_spacing_wavelengths", "gamma_th_db", "mode",
}
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# Configuration parsing
# ---------------------------------------------------------------------------

def _parse_float(section, key, raw):
    text = raw.strip().lower()
    if text in ("-inf", "-infinity"):
        return -math.inf
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None


def _parse_int(section, key, raw):
    value = _parse_float(section, key, raw)
    if not value.is_integer():
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}")
    return int(value)


def _parse_list(section, key, raw, conv):
    items = [p for p in raw.replace(";", ",").split(",") if p.strip()]
    if not items:
        raise ConfigError(f"[{section}] {key}: empty list")
    return [conv(section, key, p) for p in items]


def _build_system(section, values):
    unknown = set(values) - SYSTEM_KEYS
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(sorted(unknown))}")
    for key in ("n_rx", "n_tx"):
        if key not in values:
            raise ConfigError(f"[{section}] {key}: required")
    n_rx = _parse_int(section, "n_rx", values["n_rx"])
    n_tx = _parse_int(section, "n_tx", values["n_tx"])

    def per_user(single, plural, default):
        if plural in values:
            out = _parse_list(section, plural, values[plural], _parse_float)
            if len(out) != n_tx:
                raise ConfigError(f"[{section}] {plural}: need {n_tx} values, got {len(out)}")
            return tuple(out)
        if single in values:
            return (_parse_float(section, single, values[single]),) * n_tx
        return (default,) * n_tx

    kappa = _parse_float(section, "kappa", values.get("kappa", "0"))
    fields = dict(
        n_rx=n_rx,
        n_tx=n_tx,
        rician_k=db_to_linear(_parse_float(section, "rician_k_db", values.get("rician_k_db", "-inf"))),
        distances=per_user("distance", "distances", 1.0),
        pathloss_exps=per_user("pathloss_exp", "pathloss_exps", 4.0),
        sigma_est=_parse_float(section, "sigma_est", values.get("sigma_est", "0")),
        kappa_t=_parse_float(section, "kappa_t", values["kappa_t"]) if "kappa_t" in values else kappa,
        kappa_r=_parse_float(section, "kappa_r", values["kappa_r"]) if "kappa_r" in values else kappa,
        snr_db=_parse_float(section, "snr_db", values.get("snr_db", "10")),
        noise_power=_parse_float(section, "noise_power", values.get("noise_power", "1")),
        arrival_angle_deg=_parse_float(section, "arrival_angle_deg", values.get("arrival_angle_deg", "20")),
        antenna_spacing_wavelengths=_parse_float(
            section, "antenna_spacing_wavelengths", values.get("antenna_spacing_wavelengths", "0.5")),
    )
    try:
        return SystemConfig(**fields)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


@dataclass
class Scenario:
    name: str
    config: SystemConfig
    gamma_th_db: float
    mode: str


def _read_ini(path):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parser


def _scenarios(parser, defaults):
    if not parser.has_section("system"):
        raise ConfigError("[system] section is required")
    base = dict(parser.items("system"))
    names = [s for s in parser.sections() if s.startswith("scenario:")]
    raw = [("default", base)] if not names else [(s.split(":", 1)[1].strip(), {**base, **dict(parser.items(s))}) for s in names]
    out = []
    for name, values in raw:
        section = "system" if name == "default" else f"scenario:{name}"
        if not name:
            raise ConfigError(f"[{section}] scenario name is empty")
        merged = {**defaults, **values}
        mode = merged.pop("mode", "zf_sic").strip()
        if mode not in metrics.MODES:
            raise ConfigError(f"[{section}] mode: expected one of {metrics.MODES}, got {mode!r}")
        gamma = _parse_float(section, "gamma_th_db", merged.pop("gamma_th_db", "6"))
        out.append(Scenario(name, _build_system(section, merged), gamma, mode))
    return out


@dataclass
class SweepSpec:
    """Sweep axis, scenarios and requested metrics."""

    axis: str
    start: float
    stop: float
    step: float
    scenarios: list
    stages: object = "all"
    outputs: tuple = ("outage",)
    law: str = "matched"
    monte_carlo_trials: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"[sweep] axis: expected one of {AXES}, got {self.axis!r}")
        if not self.step > 0:
            raise ConfigError(f"[sweep] step: must be positive, got {self.step}")
        if self.stop < self.start:
            raise ConfigError(f"[sweep] stop: must not be below start ({self.stop} < {self.start})")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad:
            raise ConfigError(f"[sweep] outputs: unknown metric(s) {bad}; expected a subset of {OUTPUTS}")
        if self.law not in metrics.LAWS:
            raise ConfigError(f"[sweep] law: expected one of {metrics.LAWS}, got {self.law!r}")
        if self.monte_carlo_trials < 0:
            raise ConfigError("[sweep] monte_carlo_trials: must be non-negative")
        for sc in self.scenarios:
            for st in self.stage_list(sc.config):
                if not 1 <= st <= sc.config.n_tx:
                    raise ConfigError(f"[sweep] stages: stage {st} outside 1..{sc.config.n_tx}")

    def axis_values(self):
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [self.start + i * self.step for i in range(count)]

    def stage_list(self, config):
        if self.stages == "all":
            return list(range(1, config.n_tx + 1))
        return list(self.stages)


@dataclass
class MetricCurve:
    """One metric along the sweep axis for one scenario."""

    metric: str
    scenario: str
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["axis", "stage", "provenance", "value", "std_error"]
        if self.metric in ("capacity", "sum_capacity"):
            header.append("value_bps_hz")
        writer.writerow(header)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row[: len(header)]])
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def load_sweep(path):
    parser = _read_ini(path)
    if not parser.has_section("sweep"):
        raise ConfigError("[sweep] section is required for the sweep command")
    sw = dict(parser.items("sweep"))
    for key in ("axis", "start", "stop"):
        if key not in sw:
            raise ConfigError(f"[sweep] {key}: required")
    known = {"axis", "start", "stop", "step", "stages", "outputs", "law", "monte_carlo_trials", "seed",
             "gamma_th_db", "mode"}
    unknown = set(sw) - known
    if unknown:
        raise ConfigError(f"[sweep] unknown key(s): {', '.join(sorted(unknown))}")
    defaults = {k: sw[k] for k in ("gamma_th_db", "mode") if k in sw}
    stages_raw = sw.get("stages", "all").strip()
    stages = "all" if stages_raw == "all" else _parse_list("sweep", "stages", stages_raw, _parse_int)
    return SweepSpec(
        axis=sw["axis"].strip(),
        start=_parse_float("sweep", "start", sw["start"]),
        stop=_parse_float("sweep", "stop", sw["stop"]),
        step=_parse_float("sweep", "step", sw.get("step", "1")),
        scenarios=_scenarios(parser, defaults),
        stages=stages,
        outputs=tuple(o.strip() for o in sw.get("outputs", "outage").split(",") if o.strip()),
        law=sw.get("law", "matched").strip(),
        monte_carlo_trials=_parse_int("sweep", "monte_carlo_trials", sw.get("monte_carlo_trials", "0")),
        seed=_parse_int("sweep", "seed", sw.get("seed", "0")),
    )


def load_config(path):
    """Scenarios defined by a config file (``[system]`` plus overrides)."""
    return _scenarios(_read_ini(path), {})


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _point(sc: Scenario, axis, value):
    cfg, gamma_db = sc.config, sc.gamma_th_db
    if axis == "snr_db":
        cfg = cfg.with_(snr_db=value)
    elif axis == "rician_k_db":
        cfg = cfg.with_(rician_k=db_to_linear(value))
    else:
        gamma_db = value
    return cfg, cfg.noise_power * db_to_linear(gamma_db)


def _capacity(cfg, stage, mode, law):
    if cfg.kappa_t == 0:
        return metrics.capacity_closed_form(cfg, stage, mode, law)
    return metrics.capacity_numeric(cfg, stage, mode, law)


def _evaluate_point(spec: SweepSpec, sc: Scenario, axis_value):
    cfg, gamma = _point(sc, spec.axis, axis_value)
    rows = {m: [] for m in spec.outputs}
    trials, seed = spec.monte_carlo_trials, spec.seed
    for stage in spec.stage_list(cfg):
        if "outage" in rows:
            rows["outage"].append((axis_value, stage, "analytic", metrics.outage(cfg, stage, gamma, sc.mode, spec.law), None))
            if trials:
                rep = simulator.estimate_outage(cfg, stage, gamma, sc.mode, trials, seed)
                rows["outage"].append((axis_value, stage, "monte_carlo", rep.estimate, rep.std_error))
        if "floor" in rows:
            rows["floor"].append((axis_value, stage, "floor", metrics.outage_floor(cfg, stage, gamma, sc.mode, spec.law), None))
        if "capacity" in rows:
            c = _capacity(cfg, stage, sc.mode, spec.law)
            rows["capacity"].append((axis_value, stage, "analytic", c, None, metrics.to_bps_hz(c)))
            if trials:
                rep = simulator.estimate_capacity(cfg, stage, sc.mode, trials, seed, units="nats")
                rows["capacity"].append((axis_value, stage, "monte_carlo", rep.estimate, rep.std_error,
                                         metrics.to_bps_hz(rep.estimate)))
    if "sum_capacity" in rows:
        c = metrics.sum_capacity(cfg, sc.mode, law=spec.law)
        rows["sum_capacity"].append((axis_value, "all", "analytic", c, None, metrics.to_bps_hz(c)))
    return rows


def run_sweep(spec: SweepSpec, out_dir, workers=1):
    """Evaluate every scenario on the sweep grid and write one CSV per metric and scenario."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(sc, v) for sc in spec.scenarios for v in spec.axis_values()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _evaluate_point(spec, *j), jobs))
    else:
        results = [_evaluate_point(spec, *j) for j in jobs]
    curves = []
    for sc in spec.scenarios:
        for metric in spec.outputs:
            curve = MetricCurve(metric, sc.name)
            for (jsc, _), res in zip(jobs, results):
                if jsc is sc:
                    curve.rows.extend(res[metric])
            path = out_dir / f"{metric}_{sc.name}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(curve.to_csv())
            curves.append(curve)
    return curves


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _check(check_id, measured, expected, tolerance, passed):
    return {
        "check_id": check_id,
        "status": "pass" if passed else "fail",
        "measured": _json_num(measured),
        "expected": _json_num(expected),
        "tolerance": _json_num(tolerance),
    }


def _json_num(v):
    if isinstance(v, (list, tuple)):
        return [_json_num(x) for x in v]
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def _specfun_checks():
    out = []
    a, m, b = 4.0, 5, 1.5
    ref, _ = integrate.quad(lambda u: u ** a * specfun.marcum_q(m, math.sqrt(u), b), 0, 1, epsabs=0, epsrel=1e-12)
    val = specfun.marcum_integral_j(a, m, b)
    out.append(_check("specfun.marcum_integral_j", val, ref, 1e-7, _rel(val, ref) <= 1e-7))
    val, ref = specfun.nuttall_q(12, 5, 1.0, 1.0), specfun.nuttall_q_quad(12, 5, 1.0, 1.0)
    out.append(_check("specfun.nuttall_q.recurrence", val, ref, 1e-7, _rel(val, ref) <= 1e-7))
    val, ref = specfun.nuttall_q(10, 5, 2.0, 0.0), specfun.nuttall_q_quad(10, 5, 2.0, 0.0)
    out.append(_check("specfun.nuttall_q.b0", val, ref, 1e-7, _rel(val, ref) <= 1e-7))
    ref, _ = integrate.quad(lambda x: x * math.exp(-(x * x + 1) / 2) * specfun.bessel_i(0, x), 1, 60, epsrel=1e-13)
    val = specfun.marcum_q(1, 1.0, 1.0)
    out.append(_check("specfun.marcum_q", val, ref, 1e-7, _rel(val, ref) <= 1e-7))
    ref, _ = integrate.quad(lambda t: t ** -3 * math.exp(-t), 0.5, np.inf, epsrel=1e-13)
    val = specfun.gamma_upper(-2, 0.5)
    out.append(_check("specfun.gamma_upper.negative_order", val, ref, 1e-7, _rel(val, ref) <= 1e-7))
    return out


def _ks_crit(n1, n2, alpha=0.01):
    return math.sqrt(-0.5 * math.log(alpha / 2)) * math.sqrt((n1 + n2) / (n1 * n2))


def run_validate(scenarios, trials, seed, law="matched", table_one=False, stages="all"):
    """Run the oracle battery on every scenario; returns a list of check dicts."""
    if trials < 10_000:
        raise ConfigError(f"--trials must be at least 10000, got {trials}")
    checks = _specfun_checks()
    for sc in scenarios:
        cfg = sc.config
        gamma = cfg.noise_power * db_to_linear(sc.gamma_th_db)
        stage_ids = range(1, cfg.n_tx + 1) if stages == "all" else stages
        exact = cfg.with_(sigma_est=0.0)
        for stage in stage_ids:
            tag = f"{sc.name}.stage{stage}"
            y_mc = simulator.sample_y_statistic(exact, stage, trials, seed, sc.mode)
            y_law = metrics.sample_stream_law(exact, stage, np.random.default_rng([seed, stage]), trials, sc.mode, law)
            d = stats.ks_2samp(y_mc, y_law).statistic
            crit = _ks_crit(trials, trials)
            checks.append(_check(f"{tag}.ks_y_law", d, 0.0, crit, d <= crit))
            ref = metrics.outage(exact, stage, gamma, sc.mode, law)
            rep = simulator.estimate_outage(exact, stage, gamma, sc.mode, trials, seed, analytic_ref=ref)
            tol = 3 * max(rep.std_error, math.sqrt(max(ref * (1 - ref), 1e-300) / trials))
            checks.append(_check(f"{tag}.outage_sigma0", rep.estimate, ref, tol, abs(rep.estimate - ref) <= tol))
            if cfg.sigma_est > 0:
                ref = metrics.outage(cfg, stage, gamma, sc.mode, law)
                rep = simulator.estimate_outage(cfg, stage, gamma, sc.mode, trials, seed, analytic_ref=ref)
                checks.append(_check(f"{tag}.outage_sigma_rel_gap", rep.estimate, ref, 0.10, rep.rel_delta <= 0.10))
            if cfg.kappa_t == 0:
                closed = metrics.capacity_closed_form(exact, stage, sc.mode, law)
                numeric = metrics.capacity_numeric(exact, stage, sc.mode, law)
                tol = 1e-3 if stage == 1 else 1e-6 * abs(numeric)
                checks.append(_check(f"{tag}.capacity_closed_vs_quad", closed, numeric, tol, abs(closed - numeric) <= tol))
                rep = simulator.estimate_capacity(exact, stage, sc.mode, trials, seed, units="nats")
                tol = 3 * rep.std_error
                checks.append(_check(f"{tag}.capacity_mc", rep.estimate, closed, tol, abs(rep.estimate - closed) <= tol))
        if cfg.n_rx > cfg.n_tx + 1:
            central = exact.with_(rician_k=0.0)
            mean_rep, var_rep = simulator.wishart_trace_stats(central, 1, trials, seed)
            lit_mean, lit_var = simulator.wishart_trace_reference(central, 1, literal=True)
            checks.append(_check(f"{sc.name}.wishart_mean", mean_rep.estimate, mean_rep.analytic_ref, 0.01,
                                 _rel(mean_rep.estimate, mean_rep.analytic_ref) <= 0.01))
            checks.append(_check(f"{sc.name}.wishart_var", var_rep.estimate, var_rep.analytic_ref, 0.03,
                                 _rel(var_rep.estimate, var_rep.analytic_ref) <= 0.03))
            if all(g == 1.0 for g in central.path_gains):
                checks.append(_check(f"{sc.name}.wishart_mean_literal", mean_rep.analytic_ref, lit_mean, 1e-12,
                                     _rel(mean_rep.analytic_ref, lit_mean) <= 1e-12))
    if table_one:
        reference = {(4, 4): 3, (8, 4): 9, (8, 8): 4, (16, 8): 13, (64, 8): 42, (128, 8): 76}
        for n, m, t in metrics.table_one(law="unit"):
            checks.append(_check(f"table_one.N{n}_M{m}", t, reference[(n, m)], 2, abs(t - reference[(n, m)]) <= 2))
    return sorted(checks, key=lambda c: c["check_id"])


def report_json(checks):
    return json.dumps(checks, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

def run_convergence(rows, k_db=6.0, snr_db=10.0, laws=("unit",), base=None, lookahead=5):
    """Terms-to-three-decimals table as a list of ``(N, M, law, T, capacity)``.

    ``lookahead=None`` counts terms until the third decimal is final.
    """
    out = []
    extra = {} if base is None else base
    for law in laws:
        for n, m in rows:
            cfg = SystemConfig.symmetric(n, m, rician_k_db=k_db, snr_db=snr_db, **extra)
            t = metrics.terms_to_three_decimals(cfg, law, lookahead)
            out.append((n, m, law, t, metrics.capacity_rician(cfg, law=law).value))
    return out


def _parse_rows(raw):
    rows = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            n, m = (int(p) for p in item.lower().split("x"))
        except ValueError:
            raise ConfigError(f"[convergence] rows: expected entries like 8x4, got {item!r}") from None
        rows.append((n, m))
    if not rows:
        raise ConfigError("[convergence] rows: empty list")
    return rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(prog="zfsic", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("sweep", help="evaluate metric curves and write CSV files")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, default=1)
    v = sub.add_parser("validate", help="run analytic-vs-simulation checks and write a JSON report")
    v.add_argument("config")
    v.add_argument("--trials", type=int, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", required=True, help="report path")
    c = sub.add_parser("convergence", help="terms needed for three stable decimals of the capacity series")
    c.add_argument("config")
    c.add_argument("--out", required=True, help="CSV path")
    return p


def _cmd_sweep(args):
    spec = load_sweep(args.config)
    run_sweep(spec, args.out, workers=max(1, args.workers))
    return EXIT_OK


def _cmd_validate(args):
    parser = _read_ini(args.config)
    section = dict(parser.items("validate")) if parser.has_section("validate") else {}
    known = {"trials", "seed", "law", "table_one", "stages", "gamma_th_db", "mode"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[validate] unknown key(s): {', '.join(sorted(unknown))}")
    defaults = {k: section[k] for k in ("gamma_th_db", "mode") if k in section}
    scenarios = _scenarios(parser, defaults)
    trials = args.trials if args.trials is not None else _parse_int("validate", "trials", section.get("trials", "100000"))
    seed = args.seed if args.seed is not None else _parse_int("validate", "seed", section.get("seed", "0"))
    law = section.get("law", "matched").strip()
    if law not in metrics.LAWS:
        raise ConfigError(f"[validate] law: expected one of {metrics.LAWS}, got {law!r}")
    flag = section.get("table_one", "false").strip().lower()
    if flag not in ("true", "false", "yes", "no", "1", "0"):
        raise ConfigError(f"[validate] table_one: expected a boolean, got {flag!r}")
    stages_raw = section.get("stages", "all").strip()
    stages = "all" if stages_raw == "all" else _parse_list("validate", "stages", stages_raw, _parse_int)
    checks = run_validate(scenarios, trials, seed, law, flag in ("true", "yes", "1"), stages)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_json(checks))
    failed = [c["check_id"] for c in checks if c["status"] != "pass"]
    for cid in failed:
        print(f"FAIL {cid}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _cmd_convergence(args):
    parser = _read_ini(args.config)
    sec = dict(parser.items("convergence")) if parser.has_section("convergence") else {}
    rows = _parse_rows(sec.get("rows", ",".join(f"{n}x{m}" for n, m in metrics.TABLE_ONE_ROWS)))
    k_db = _parse_float("convergence", "rician_k_db", sec.get("rician_k_db", "6"))
    snr_db = _parse_float("convergence", "snr_db", sec.get("snr_db", "10"))
    laws = [x.strip() for x in sec.get("laws", "unit").split(",") if x.strip()]
    unknown = set(sec) - {"rows", "rician_k_db", "snr_db", "laws", "lookahead"}
    if unknown:
        raise ConfigError(f"[convergence] unknown key(s): {', '.join(sorted(unknown))}")
    raw_la = sec.get("lookahead", "5").strip().lower()
    lookahead = None if raw_la == "final" else _parse_int("convergence", "lookahead", raw_la)
    if lookahead is not None and lookahead < 1:
        raise ConfigError("[convergence] lookahead: must be a positive integer or 'final'")
    bad = [x for x in laws if x not in metrics.LAWS]
    if bad:
        raise ConfigError(f"[convergence] laws: unknown law(s) {bad}")
    base = {}
    if parser.has_section("system"):
        for key in ("sigma_est", "kappa", "kappa_t", "kappa_r"):
            if parser.has_option("system", key):
                base[key] = _parse_float("system", key, parser.get("system", key))
    if base.get("kappa_t", base.get("kappa", 0.0)) != 0:
        raise ConfigError("[system] kappa_t: the capacity series needs kappa_t = 0")
    table = run_convergence(rows, k_db, snr_db, laws, base, lookahead)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_rx", "n_tx", "law", "terms", "capacity"])
    for n, m, law, t, cap in table:
        w.writerow([n, m, law, t, repr(cap)])
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {"sweep": _cmd_sweep, "validate": _cmd_validate, "convergence": _cmd_convergence}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
