"""
Experiment drivers behind the command line.

Each ``run_*`` function takes an ``ExperimentConfig`` and returns a list of
row dicts (or a report for ``verify``). Rows are produced in canonical order,
sorted by (N, k, t, ...), and carry ``seed`` and ``config_hash``; the hash is
that of the configuration restricted to the row's (N, k), so any row can be
regenerated by rerunning that single point.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from .config import ExperimentConfig, time_scale
from .dynamics import (PLAIN, WITH_BOUNDARIES, ShuffleVariant, boundary_rate, rate_table)
from .exact import (exact_mixing_time, identity_index, tv_curve, projection_mixing_lower)
from .perm import Permutation, uniform_perm
from .seeding import replica_generators, replica_seed
from .spectral import (GapNotConverged, StateSpaceTooLarge, boundary_identity_check,
                       build_sparse_generator, eigen_residual, exclusion_lumping_deviation,
                       generator_apply_phi, generator_apply_phi_bruteforce,
                       interior_identity_check, lambda_approx, lambda_leading, spectral_gap)

log = logging.getLogger(__name__)

SIX_OVER_PI2 = 6.0 / math.pi ** 2
FULL_CHAIN_MAX_N = 8
COUPLING_HORIZON_FACTOR = 4.0

HEADERS = {
    "spectrum": ["N", "k", "variant", "j", "lambda_approx", "lambda_leading", "gap_exact",
                 "residual_max"],
    "mixing-exact": ["N", "k", "variant", "eps", "t_mix", "method"],
    "mixing-mc": ["N", "k", "variant", "t", "estimator", "point", "ci_lo", "ci_hi", "replicas",
                  "seed"],
    "cutoff-sweep": ["N", "k", "variant", "estimator", "t_hat", "t_se", "c_hat", "c_se",
                     "exceeded_horizon", "replicas"],
    "no-precutoff": ["N", "k", "variant", "quantity", "eps", "value", "ci_lo", "ci_hi",
                     "replicas"],
    "decay": ["N", "k", "variant", "t", "mean_height", "se", "max_mean_height", "bound",
              "fitted_rate", "lambda_approx", "replicas"],
    "trajectories": ["N", "k", "replica", "seed", "t", "observable", "value"],
}


def header_for(experiment: str) -> list[str]:
    cols = list(HEADERS[experiment])
    if "seed" not in cols:
        cols.append("seed")
    cols.append("config_hash")
    return cols


class WorkTooLarge(RuntimeError):
    def __init__(self, events: float, limit: float):
        super().__init__(f"estimated {events:.3g} events exceeds the limit {limit:.3g}; "
                         "rerun with --force or raise --max-events")
        self.events = events
        self.limit = limit


# ---------------------------------------------------------------------------
# formatting and CSV
# ---------------------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return repr(float(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(rows: list[dict], columns: list[str], path: str | Path | None) -> str:
    text = rows_to_csv(rows, columns)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def read_csv(path: str | Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _stamp(rows: list[dict], cfg: ExperimentConfig, N: int, k: int) -> list[dict]:
    h = cfg.point(N, k).config_hash()
    for r in rows:
        r.setdefault("seed", cfg.master_seed)
        r["config_hash"] = h
    return rows


def _points(cfg: ExperimentConfig):
    return sorted(itertools.product(sorted(set(cfg.Ns)), sorted(set(cfg.ks))))


def _variant(cfg: ExperimentConfig, N: int, k: int, kind: str | None = None) -> ShuffleVariant:
    return ShuffleVariant(kind or cfg.variant, N, k, cfg.literal_range)


# ---------------------------------------------------------------------------
# work estimate
# ---------------------------------------------------------------------------

def estimate_events(cfg: ExperimentConfig) -> float:
    """Rough count of block updates an experiment will simulate."""
    exp = cfg.experiment
    total = 0.0
    if exp in ("verify", "spectrum", "mixing-exact"):
        return 0.0
    if exp == "no-precutoff":
        for N in cfg.Ns:
            k = int(math.floor(N ** cfg.delta))
            if k < 2 or k > N:
                continue
            v = ShuffleVariant(WITH_BOUNDARIES, N, k)
            total += float(rate_table(v).total_rate) * 4 * N * N * math.log(N) / k ** 3 * 1000
        return total
    cr = cfg.coupling_replicas or max(100, cfg.replicas // 5)
    for N, k in _points(cfg):
        if k > N:
            continue
        rate = float(rate_table(_variant(cfg, N, k)).total_rate)
        tmax = float(cfg.times_for(N, k).max())
        total += rate * tmax * cfg.replicas
        if exp == "mixing-mc":
            total += rate * tmax * cr
        elif exp == "cutoff-sweep":
            total += rate * COUPLING_HORIZON_FACTOR * time_scale(N, k) * cr
    return total


def check_work(cfg: ExperimentConfig) -> float:
    events = estimate_events(cfg)
    if events > cfg.max_events and not cfg.force:
        raise WorkTooLarge(events, cfg.max_events)
    return events


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    max_residual: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} max_residual={format_value(self.max_residual)} {self.detail}".rstrip()


def _check_boundary_rates() -> list[CheckResult]:
    expected = {(3, 2): Fraction(4, 3), (4, 2): Fraction(9, 5), (4, 3): Fraction(6, 5)}
    dev = max(abs(boundary_rate(k, i) - v) for (k, i), v in expected.items())
    out = [CheckResult("boundary_rate_values", dev == 0, float(dev), "k=3: 4/3; k=4: 9/5, 6/5")]
    worst = 0.0
    ok = True
    for k in range(3, 65):
        for i in range(2, k):
            d = boundary_rate(k, i)
            if not (1 <= d <= Fraction(7 * k * k, 4 * i * i - 1)):
                ok = False
            if 4 * i >= k and d > 8:
                ok = False
            worst = max(worst, float(d / Fraction(7 * k * k, 4 * i * i - 1)))
    out.append(CheckResult("boundary_rate_bounds", ok, worst,
                           "1 <= delta_i <= 7k^2/(4i^2-1), delta_i <= 8 for i >= k/4, 3 <= k <= 64"))
    return out


def _check_identities() -> list[CheckResult]:
    worst = 0.0
    for N in (10, 50, 200):
        for k in range(2, 9):
            for j in (1, 2, 3, N):
                for x in range(k, N - k + 1):
                    worst = max(worst, interior_identity_check(N, k, j, x))
    out = [CheckResult("interior_identity", worst <= 1e-12, worst,
                       "N in {10,50,200}, k in 2..8, j in {1,2,3,N}")]
    bad = [(k, x) for k in range(3, 17) for x in range(1, k) if boundary_identity_check(k, x) != 0]
    out.append(CheckResult("boundary_identity", not bad, float(len(bad)),
                           "exact rationals, 3 <= k <= 16" + (f" failures {bad[:5]}" if bad else "")))
    return out


def _all_or_sample(N: int, rng: np.random.Generator, n_sample: int = 300):
    if N <= 7:
        return [Permutation(p) for p in itertools.permutations(range(1, N + 1))]
    return [uniform_perm(rng, N) for _ in range(n_sample)]


def _check_point(cfg: ExperimentConfig, N: int, k: int) -> list[CheckResult]:
    out = []
    rng = np.random.default_rng(replica_seed(cfg.master_seed, "verify", N, k, 0))
    lr = cfg.literal_range
    if N <= 7:
        for kind in (PLAIN, WITH_BOUNDARIES):
            v = ShuffleVariant(kind, N, k, lr)
            dev = max(abs(generator_apply_phi(s, v) - generator_apply_phi_bruteforce(s, v))
                      for s in _all_or_sample(N, rng))
            out.append(CheckResult(f"generator_vs_enumeration N={N} k={k} {v.label}",
                                   dev <= 1e-10, dev))
        K = N // 2
        try:
            dev = exclusion_lumping_deviation(N, k, K, cfg.variant, literal_range=lr)
            out.append(CheckResult(f"exclusion_lumping N={N} k={k} K={K}", dev == 0, float(dev)))
        except ValueError as exc:
            out.append(CheckResult(f"exclusion_lumping N={N} k={k} K={K}", False, math.inf, str(exc)))
    if k == 2:
        v = ShuffleVariant(PLAIN, N, 2, lr)
        res = max(eigen_residual(s, v, 1) for s in _all_or_sample(N, rng))
        out.append(CheckResult(f"k2_eigen_residual N={N}", res <= 1e-10, res))
        if N <= FULL_CHAIN_MAX_N:
            target = 1 - math.cos(math.pi / N)
            try:
                gap = spectral_gap(build_sparse_generator(N, 2, v))
                dev = abs(gap - target)
            except GapNotConverged as exc:
                gap, dev = math.nan, math.inf
            out.append(CheckResult(f"k2_gap N={N}", dev <= 1e-9, dev,
                                   f"gap={format_value(gap)} target={format_value(target)}"))
    elif N <= FULL_CHAIN_MAX_N:
        v = ShuffleVariant(cfg.variant, N, k, lr)
        try:
            gap = spectral_gap(build_sparse_generator(N, k, v))
        except GapNotConverged:
            gap = math.nan
        lam = lambda_approx(N, k, 1)
        out.append(CheckResult(f"gap_positive N={N} k={k} {v.label}", gap > 1e-9,
                               abs(gap - lam) / gap if gap > 0 else math.inf,
                               f"gap={format_value(gap)} lambda_approx={format_value(lam)}"))
    return out


def run_verify(cfg: ExperimentConfig) -> list[CheckResult]:
    if not cfg.Ns or not cfg.ks:
        warnings.warn("verify grid is empty; nothing to check", stacklevel=2)
        return []
    results = _check_boundary_rates() + _check_identities()
    for N, k in _points(cfg):
        if 2 <= k <= N:
            results.extend(_check_point(cfg, N, k))
    return results


# ---------------------------------------------------------------------------
# spectrum and exact mixing
# ---------------------------------------------------------------------------

def run_spectrum(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for N, k in _points(cfg):
        if k > N:
            continue
        v = _variant(cfg, N, k)
        gap = None
        if N <= FULL_CHAIN_MAX_N:
            try:
                gap = spectral_gap(build_sparse_generator(N, k, v))
            except GapNotConverged as exc:
                log.warning("gap did not converge at N=%d k=%d: %s", N, k, exc)
                gap = math.nan
        gens = replica_generators(cfg.master_seed, "spectrum", N, k, cfg.replicas)
        states = [Permutation._trusted(g.permutation(N) + 1) for g in gens]
        point_rows = []
        for j in sorted(set(cfg.js)):
            if not (1 <= j <= N):
                continue
            res = max(eigen_residual(s, v, j) for s in states)
            point_rows.append({"N": N, "k": k, "variant": v.label, "j": j,
                               "lambda_approx": lambda_approx(N, k, j),
                               "lambda_leading": lambda_leading(N, k, j),
                               "gap_exact": gap if j == 1 else None, "residual_max": res})
        rows.extend(_stamp(point_rows, cfg, N, k))
    return rows


def run_mixing_exact(cfg: ExperimentConfig) -> list[dict]:
    rows = []
    for N, k in _points(cfg):
        if k > N:
            continue
        v = _variant(cfg, N, k)
        point_rows = []
        for eps in sorted(cfg.eps):
            if N <= FULL_CHAIN_MAX_N:
                gen = build_sparse_generator(N, k, v)
                t = exact_mixing_time(gen, identity_index(gen), eps).t_mix
                method = "full"
            else:
                K = cfg.K or N // 2
                t = projection_mixing_lower(N, k, K, eps, v).t_mix
                method = "projection"
            point_rows.append({"N": N, "k": k, "variant": v.label, "eps": eps, "t_mix": t,
                               "method": method})
        rows.extend(_stamp(point_rows, cfg, N, k))
    return rows


# ---------------------------------------------------------------------------
# Monte Carlo brackets and the cutoff sweep
# ---------------------------------------------------------------------------

def _coupling_replicas(cfg: ExperimentConfig) -> int:
    return cfg.coupling_replicas or max(100, cfg.replicas // 5)


def run_mixing_mc(cfg: ExperimentConfig) -> list[dict]:
    check_work(cfg)
    rows = []
    for N, k in _points(cfg):
        if k > N:
            continue
        v = _variant(cfg, N, k)
        times = cfg.times_for(N, k)
        curve = mc.statistic_tv_curve(v, times, cfg.replicas, cfg.master_seed, workers=cfg.workers)
        cr = _coupling_replicas(cfg)
        upper = mc.coupling_tv_upper(N, k, v, times, cr, cfg.master_seed, start=cfg.start,
                                     workers=cfg.workers)
        exact = None
        if N <= FULL_CHAIN_MAX_N:
            gen = build_sparse_generator(N, k, v)
            exact = tv_curve(gen, identity_index(gen), times)
        point_rows = []
        for i, t in enumerate(times):
            lo = curve.estimates()[i]
            point_rows.append({"N": N, "k": k, "variant": v.label, "t": float(t),
                               "estimator": "statistic_tv_lower", "point": lo.point,
                               "ci_lo": lo.ci_lo, "ci_hi": lo.ci_hi, "replicas": cfg.replicas})
            up = upper[i]
            point_rows.append({"N": N, "k": k, "variant": v.label, "t": float(t),
                               "estimator": "coupling_tv_upper", "point": up.point,
                               "ci_lo": up.ci_lo, "ci_hi": up.ci_hi, "replicas": cr})
            if exact is not None:
                e = float(exact[i])
                point_rows.append({"N": N, "k": k, "variant": v.label, "t": float(t),
                                   "estimator": "exact_tv", "point": e, "ci_lo": e, "ci_hi": e,
                                   "replicas": 0})
        point_rows.sort(key=lambda r: (r["t"], r["estimator"]))
        rows.extend(_stamp(point_rows, cfg, N, k))
    return rows


@dataclass
class SweepPoint:
    N: int
    k: int
    statistic_t: float
    statistic_se: float
    coupling_t: float
    coupling_se: float
    curve: mc.TVCurve

    @property
    def norm(self) -> float:
        return self.k * (self.k ** 2 - 1) / (self.N ** 2 * math.log(self.N))

    @property
    def c_hat(self) -> float:
        return self.statistic_t * self.norm

    @property
    def c_se(self) -> float:
        return self.statistic_se * self.norm


def fit_asymptote(Ns, c, se) -> tuple[float, float]:
    """Weighted fit c(N) = c_inf + b / log N; returns (c_inf, its standard error)."""
    Ns = np.asarray(Ns, dtype=float)
    c = np.asarray(c, dtype=float)
    se = np.asarray(se, dtype=float)
    if Ns.size < 2:
        return math.nan, math.nan
    X = np.column_stack([np.ones_like(Ns), 1.0 / np.log(Ns)])
    w = 1.0 / np.maximum(se, 1e-12) ** 2
    A = X.T @ (X * w[:, None])
    coef = np.linalg.solve(A, X.T @ (w * c))
    cov = np.linalg.inv(A)
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


def _median_with_se(taus: np.ndarray, seed: int, n_boot: int = 400) -> tuple[float, float]:
    med = float(np.median(taus))
    if not math.isfinite(med):
        return math.inf, math.nan
    g = np.random.default_rng(seed)
    boots = np.array([np.median(taus[g.integers(0, taus.size, taus.size)]) for _ in range(n_boot)])
    boots = boots[np.isfinite(boots)]
    return med, float(boots.std(ddof=1)) if boots.size > 1 else math.nan


def sweep_points(cfg: ExperimentConfig, rate_scale: float = 1.0) -> list[SweepPoint]:
    """Estimated t_mix(1/2) at every (N, k).

    The lower estimate is the crossing of 1/2 by the statistic TV; the upper
    one is the median coupling time (where P(tau > t) = 1/2). With
    ``rate_scale`` every rate is multiplied by that factor.
    """
    check_work(cfg)
    out = []
    for N, k in _points(cfg):
        if k > N:
            continue
        v = _variant(cfg, N, k)
        times = cfg.times_for(N, k) / rate_scale
        curve = mc.statistic_tv_curve(v, times, cfg.replicas, cfg.master_seed, level=0.5,
                                      workers=cfg.workers, time_scale=rate_scale)
        horizon = COUPLING_HORIZON_FACTOR * time_scale(N, k)
        _, taus = mc.coupling_tv_upper(N, k, v, [horizon], _coupling_replicas(cfg),
                                       cfg.master_seed, start=cfg.start, workers=cfg.workers,
                                       return_taus=True)
        med, med_se = _median_with_se(taus / rate_scale,
                                      replica_seed(cfg.master_seed, "median", N, k, 0))
        out.append(SweepPoint(N, k, curve.crossing, curve.crossing_se, med, med_se, curve))
    return out


def run_cutoff_sweep(cfg: ExperimentConfig, rate_scale: float = 1.0) -> list[dict]:
    points = sweep_points(cfg, rate_scale)
    rows = []
    cr = _coupling_replicas(cfg)
    for p in points:
        v = _variant(cfg, p.N, p.k)
        # an unfinished estimate is flagged and left blank rather than written as infinity
        stat_open = not math.isfinite(p.statistic_t)
        coup_open = not math.isfinite(p.coupling_t)
        pr = [{"N": p.N, "k": p.k, "variant": v.label, "estimator": "statistic",
               "t_hat": None if stat_open else p.statistic_t,
               "t_se": None if stat_open else p.statistic_se,
               "c_hat": None if stat_open else p.c_hat, "c_se": None if stat_open else p.c_se,
               "exceeded_horizon": stat_open, "replicas": cfg.replicas},
              {"N": p.N, "k": p.k, "variant": v.label, "estimator": "coupling",
               "t_hat": None if coup_open else p.coupling_t,
               "t_se": None if coup_open else p.coupling_se,
               "c_hat": None if coup_open else p.coupling_t * p.norm,
               "c_se": None if coup_open else p.coupling_se * p.norm,
               "exceeded_horizon": coup_open, "replicas": cr}]
        rows.extend(_stamp(pr, cfg, p.N, p.k))
    h = cfg.config_hash()
    for k in sorted({p.k for p in points}):
        sel = [p for p in points if p.k == k and math.isfinite(p.c_hat)]
        c_inf, c_inf_se = fit_asymptote([p.N for p in sel], [p.c_hat for p in sel],
                                        [p.c_se for p in sel])
        rows.append({"N": "asymptote", "k": k, "variant": cfg.variant, "estimator": "statistic_fit",
                     "c_hat": c_inf, "c_se": c_inf_se, "exceeded_horizon": False, "replicas": cfg.replicas,
                     "seed": cfg.master_seed, "config_hash": h})
    return rows


# ---------------------------------------------------------------------------
# no pre-cutoff, decay, trajectories
# ---------------------------------------------------------------------------

def run_no_precutoff(cfg: ExperimentConfig) -> list[dict]:
    check_work(cfg)
    rep = mc.no_precutoff_experiment(sorted(set(cfg.Ns)), cfg.delta, tuple(sorted(cfg.eps, reverse=True)),
                                     cfg.replicas, cfg.master_seed,
                                     control_replicas=_coupling_replicas(cfg) * 5,
                                     workers=cfg.workers)
    rows = []
    for i, (N, k) in enumerate(zip(rep.Ns, rep.ks)):
        pr = [{"N": N, "k": k, "variant": PLAIN, "quantity": "exit_median",
               "value": rep.medians[i], "replicas": cfg.replicas}]
        for eps, t in zip(rep.eps_grid, rep.proxy_times[N]):
            pr.append({"N": N, "k": k, "variant": PLAIN, "quantity": "proxy_time", "eps": eps,
                       "value": t, "replicas": cfg.replicas})
        if rep.control_times:
            pr.append({"N": N, "k": k, "variant": WITH_BOUNDARIES, "quantity": "control_crossing",
                       "eps": 0.5, "value": rep.control_times[i]})
            pr.append({"N": N, "k": k, "variant": WITH_BOUNDARIES, "quantity": "control_scale",
                       "value": rep.control_scale[i]})
        h = ExperimentConfig.from_record({**cfg.to_record(), "Ns": [N], "ks": []}).config_hash()
        for r in pr:
            r["seed"] = cfg.master_seed
            r["config_hash"] = h
        rows.extend(pr)
    rows.append({"N": "all", "k": "", "variant": PLAIN, "quantity": "exit_median_loglog_slope",
                 "value": rep.slope, "ci_lo": rep.slope_ci[0], "ci_hi": rep.slope_ci[1],
                 "replicas": cfg.replicas, "seed": cfg.master_seed, "config_hash": cfg.config_hash()})
    return rows


def run_decay(cfg: ExperimentConfig) -> list[dict]:
    check_work(cfg)
    rows = []
    for N, k in _points(cfg):
        if k > N:
            continue
        times = cfg.times_for(N, k)
        d = mc.height_decay_experiment(N, k, times, cfg.replicas, cfg.master_seed,
                                       variant=_variant(cfg, N, k), workers=cfg.workers)
        pr = [{"N": N, "k": k, "variant": cfg.variant, "t": float(t), "mean_height": m, "se": s,
               "max_mean_height": mm, "bound": b, "fitted_rate": d.rate,
               "lambda_approx": d.lambda_ref, "replicas": cfg.replicas}
              for t, m, s, mm, b in zip(times, d.mean, d.se, d.max_mean, d.bound)]
        rows.extend(_stamp(pr, cfg, N, k))
    return rows


def run_trajectories(cfg: ExperimentConfig) -> list[dict]:
    """Per-replica observables along a path from the identity."""
    check_work(cfg)
    rows = []
    for N, k in _points(cfg):
        if k > N:
            continue
        v = _variant(cfg, N, k)
        times = cfg.times_for(N, k)
        states = mc.simulate_replicas(v, times, cfg.replicas, cfg.master_seed, "trajectories",
                                      workers=cfg.workers)
        phi = mc.phi_batch(states)
        hmid = mc.heights_batch(states, N // 2)[..., N // 2]
        pr = []
        for r in range(cfg.replicas):
            seed = replica_seed(cfg.master_seed, "trajectories", N, k, r)
            for i, t in enumerate(times):
                pr.append({"N": N, "k": k, "replica": r, "seed": seed, "t": float(t),
                           "observable": "height_mid", "value": float(hmid[r, i])})
                pr.append({"N": N, "k": k, "replica": r, "seed": seed, "t": float(t),
                           "observable": "phi", "value": float(phi[r, i])})
        rows.extend(_stamp(pr, cfg, N, k))
    return rows


RUNNERS = {
    "spectrum": run_spectrum,
    "mixing-exact": run_mixing_exact,
    "mixing-mc": run_mixing_mc,
    "cutoff-sweep": run_cutoff_sweep,
    "no-precutoff": run_no_precutoff,
    "decay": run_decay,
    "trajectories": run_trajectories,
}


def run(cfg: ExperimentConfig) -> list[dict]:
    return RUNNERS[cfg.experiment](cfg)


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

PLOT_KINDS = ("tv-curve", "decay-curve", "constant-vs-N")


def _num(v):
    return float(v) if v not in ("", None) else math.nan


def emit_plotdata(results: list[dict], kind: str, path: str | Path | None = None) -> str:
    """Tidy CSV with '#' header lines describing its columns."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    header = [f"# kind: {kind}"]
    if kind == "tv-curve":
        by_key: dict = {}
        for r in results:
            key = (int(r["N"]), int(r["k"]), r["variant"], _num(r["t"]))
            by_key.setdefault(key, {})[r["estimator"]] = _num(r["point"])
        header.append("# columns: N, k, variant, t, lower (statistic TV), upper (coupling), "
                      "exact (blank when not computed)")
        cols = ["N", "k", "variant", "t", "lower", "upper", "exact"]
        rows = [{"N": N, "k": k, "variant": var, "t": t,
                 "lower": d.get("statistic_tv_lower"), "upper": d.get("coupling_tv_upper"),
                 "exact": d.get("exact_tv")}
                for (N, k, var, t), d in sorted(by_key.items())]
    elif kind == "decay-curve":
        header.append("# columns: N, k, t, mean_height, fitted (mean_height(t0) exp(-rate (t - t0))), "
                      "fitted_rate, lambda_approx")
        cols = ["N", "k", "t", "mean_height", "fitted", "fitted_rate", "lambda_approx"]
        rows = []
        groups: dict = {}
        for r in results:
            groups.setdefault((int(r["N"]), int(r["k"])), []).append(r)
        for (N, k), grp in sorted(groups.items()):
            grp.sort(key=lambda r: _num(r["t"]))
            t0, m0 = _num(grp[0]["t"]), _num(grp[0]["mean_height"])
            rate = _num(grp[0]["fitted_rate"])
            header.append(f"# N={N} k={k} fitted_rate={format_value(rate)} "
                          f"lambda_approx={format_value(_num(grp[0]['lambda_approx']))}")
            for r in grp:
                t = _num(r["t"])
                rows.append({"N": N, "k": k, "t": t, "mean_height": _num(r["mean_height"]),
                             "fitted": m0 * math.exp(-rate * (t - t0)), "fitted_rate": rate,
                             "lambda_approx": _num(r["lambda_approx"])})
    else:
        header.append("# columns: N, k, estimator, c_hat, c_se; the reference row holds 6/pi^2")
        cols = ["N", "k", "estimator", "c_hat", "c_se"]
        rows = [{"N": r["N"], "k": r["k"], "estimator": r["estimator"], "c_hat": _num(r["c_hat"]),
                 "c_se": _num(r["c_se"])} for r in results]
        rows.append({"N": "asymptote", "k": "", "estimator": "reference", "c_hat": SIX_OVER_PI2,
                     "c_se": 0.0})
    text = "\n".join(header) + "\n" + rows_to_csv(rows, cols)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def write_config_sidecar(cfg: ExperimentConfig, rows: list[dict], path: str | Path) -> None:
    """Map every config hash appearing in ``rows`` to its point configuration."""
    records = {}
    for r in rows:
        h = r.get("config_hash")
        if h in records:
            continue
        N, k = r.get("N"), r.get("k")
        if isinstance(N, int) and isinstance(k, int) and cfg.point(N, k).config_hash() == h:
            records[h] = cfg.point(N, k).to_record()
        elif h == cfg.config_hash():
            records[h] = cfg.to_record()
        elif isinstance(N, int):
            rec = {**cfg.to_record(), "Ns": [N], "ks": []}
            records[h] = rec
    Path(path).write_text(json.dumps(records, indent=1, sort_keys=True) + "\n", encoding="utf-8")
