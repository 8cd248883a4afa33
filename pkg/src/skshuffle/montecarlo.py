"""
Monte Carlo estimators: the second-moment lower bound, variance and negative
dependence checks, the censoring comparison, TV brackets, single-card exit
times and height decay.

Every estimator takes ``rng`` as either an int master seed or a
``numpy.random.Generator`` (one draw becomes the master seed). Replica r of an
estimator tagged ``tag`` always uses the stream
``replica_seed(master, tag, N, k, r)``, so results do not depend on the number
of worker threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import _kernels
from .dynamics import (CensoringSchedule, ShuffleVariant, rate_table, walk_table,
                       WITH_BOUNDARIES, PLAIN)
from .exact import dirac, evolve, identity_index
from .perm import anchors
from .seeding import master_from, replica_generators, run_replicas
from .spectral import (FourierMode, build_exclusion_generator, expected_height_decay_bound,
                       lambda_approx)

__all__ = [
    "Estimate",
    "TVBracket",
    "LowerBoundInputs",
    "second_moment_lower_bound",
    "scaled_lower_bound_inputs",
    "phi_batch",
    "heights_batch",
    "simulate_replicas",
    "VarianceReport",
    "phi_variance_estimate",
    "NegDepReport",
    "negative_dependence_check",
    "DominanceResult",
    "censoring_dominance_check",
    "statistic_tv_lower",
    "TVCurve",
    "statistic_tv_curve",
    "coupling_tv_upper",
    "card_exit_times",
    "ExitReport",
    "boundary_exit_experiment",
    "NoPrecutoffReport",
    "no_precutoff_experiment",
    "DecayReport",
    "height_decay_experiment",
]

Z95 = 1.959963984540054


def _variant(variant, N: int, k: int) -> ShuffleVariant:
    if isinstance(variant, ShuffleVariant):
        if (variant.N, variant.k) != (N, k):
            raise ValueError("variant does not match (N, k)")
        return variant
    return ShuffleVariant(variant, N, k)


@dataclass(frozen=True)
class Estimate:
    point: float
    ci_lo: float
    ci_hi: float
    n: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_hi - self.ci_lo)


@dataclass(frozen=True)
class TVBracket:
    t: float
    lower: Estimate
    upper: Estimate

    def consistent(self, slack: float = 0.0) -> bool:
        return self.lower.point <= self.upper.point + self.lower.half_width + self.upper.half_width + slack


# ---------------------------------------------------------------------------
# second-moment lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundInputs:
    lam: float
    c: float
    R: float
    psi_max: float
    eps: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.psi_max <= 0:
            raise ValueError("psi_max must be positive")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if not (0 < self.eps < 1):
            raise ValueError("eps must lie in (0, 1)")


def second_moment_lower_bound(inp: LowerBoundInputs) -> float:
    """Lower bound on t_mix(1 - eps) from a statistic with drift rate lam."""
    return (math.log(inp.psi_max) / inp.lam
            - math.log(4.0 * max(2.0 * inp.R, inp.c) / inp.eps) / (2.0 * inp.lam))


def scaled_lower_bound_inputs(N: int, k: int, eps: float) -> LowerBoundInputs:
    """Inputs with the orders psi_max ~ N^2, R ~ N^3, c ~ k^6 pi^3 / N^3 (unit constants)."""
    return LowerBoundInputs(lambda_approx(N, k, 1), k ** 6 * math.pi ** 3 / N ** 3,
                            float(N) ** 3, float(N) ** 2, eps)


# ---------------------------------------------------------------------------
# batch observables and replica simulation
# ---------------------------------------------------------------------------

def heights_batch(states: np.ndarray, y: int) -> np.ndarray:
    """Heights h(x, y), x = 0..N, for label arrays of shape (..., N)."""
    N = states.shape[-1]
    small = (states <= y).astype(np.float64)
    c = np.cumsum(small, axis=-1)
    h = np.zeros(states.shape[:-1] + (N + 1,))
    h[..., 1:] = c - np.arange(1, N + 1) * (y / N)
    return h


def phi_batch(states: np.ndarray, j: int = 1, y: int | None = None) -> np.ndarray:
    N = states.shape[-1]
    if y is None:
        y = N // 2
    h = heights_batch(states, y)
    return h[..., 1:N] @ FourierMode(N, j).values[1:N]


def _start_array(start, N: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(start, str):
        if start == "identity":
            return np.arange(1, N + 1, dtype=np.int64)
        if start == "reverse":
            return np.arange(N, 0, -1, dtype=np.int64)
        if start == "uniform":
            return rng.permutation(N).astype(np.int64) + 1
        raise ValueError(f"unknown start {start!r}")
    return np.asarray(start, dtype=np.int64).copy()


def simulate_replicas(variant: ShuffleVariant, times, replicas: int, rng, tag: str,
                      start="identity", schedule: CensoringSchedule | None = None,
                      workers: int | None = None, time_scale: float = 1.0) -> np.ndarray:
    """Label arrays at ``times`` for each replica, shape (replicas, len(times), N).

    ``time_scale`` runs the chain ``time_scale`` times faster, i.e. with all
    rates multiplied by it.
    """
    N, k = variant.N, variant.k
    times = np.asarray(times, dtype=np.float64) * time_scale
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    args = rate_table(variant).kernel_args()
    if schedule is None:
        sched = (_kernels.NO_SCHEDULE_TIMES, _kernels.no_schedule_masks(N))
    else:
        sched = schedule.kernel_args()
    gens = replica_generators(master_from(rng), tag, N, k, replicas)

    def one(g):
        arr0 = _start_array(start, N, g)
        return _kernels.sample_path(arr0, times, *args, *sched, g)

    return np.stack(run_replicas(one, gens, workers)) if replicas else np.zeros((0, len(times), N))


def uniform_samples(N: int, replicas: int, rng, tag: str, k: int = 0) -> np.ndarray:
    gens = replica_generators(master_from(rng), tag, N, k, replicas)
    return np.stack([g.permutation(N) + 1 for g in gens])


# ---------------------------------------------------------------------------
# variance of Phi
# ---------------------------------------------------------------------------

def _jackknife_variance(x: np.ndarray) -> tuple[float, float]:
    """Sample variance and its delete-one jackknife standard error."""
    n = x.size
    v = float(np.var(x, ddof=1))
    if n < 3:
        return v, float("inf")
    s1 = x.sum()
    s2 = (x * x).sum()
    m = (s1 - x) / (n - 1)
    loo = (s2 - x * x - (n - 1) * m * m) / (n - 2)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return v, se


@dataclass(frozen=True)
class VarianceReport:
    variance: float
    ci_lo: float
    ci_hi: float
    bound: float
    replicas: int

    @property
    def passed(self) -> bool:
        return self.ci_hi <= self.bound


def phi_variance_estimate(N: int, k: int, variant, t: float, replicas: int, rng,
                          start: str = "identity", workers: int | None = None) -> VarianceReport:
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    v = _variant(variant, N, k)
    states = simulate_replicas(v, [t], replicas, rng, f"phi_var:{start}", start=start,
                               workers=workers)[:, 0, :]
    x = phi_batch(states)
    var, se = _jackknife_variance(x)
    return VarianceReport(var, max(0.0, var - Z95 * se), var + Z95 * se, float(N) ** 3, replicas)


# ---------------------------------------------------------------------------
# negative dependence of the exclusion projection
# ---------------------------------------------------------------------------

@dataclass
class NegDepReport:
    mode: str
    t: float
    checked: int
    # (subset, E[prod] - prod E, standard error or 0 in exact mode)
    violations: list = field(default_factory=list)
    max_excess: float = -math.inf

    @property
    def passed(self) -> bool:
        return not self.violations


def negative_dependence_check(N: int, k: int, K: int, variant, t: float, mode: str = "exact",
                              rng=None, replicas: int = 50_000, sizes=(2, 3),
                              n_sigma: float = 3.0, atol: float = 1e-12,
                              workers: int | None = None) -> NegDepReport:
    """Check E[prod_{i in S} X_i] <= prod E[X_i] for occupation variables at time t.

    The start is the exclusion image of the identity (ones on positions 1..K).
    """
    v = _variant(variant, N, k)
    if mode == "exact":
        gen = build_exclusion_generator(N, k, K, v)
        p = evolve(gen, dirac(gen, identity_index(gen)), t)
        bits = gen.states.astype(np.float64)
        marg = p @ bits
        report = NegDepReport("exact", t, 0)
        for size in sizes:
            for S in itertools.combinations(range(N), size):
                joint = float(p @ np.prod(bits[:, S], axis=1))
                excess = joint - float(np.prod(marg[list(S)]))
                report.checked += 1
                report.max_excess = max(report.max_excess, excess)
                if excess > atol:
                    report.violations.append((tuple(s + 1 for s in S), excess, 0.0))
        return report
    if mode != "mc":
        raise ValueError("mode must be 'exact' or 'mc'")
    arr0 = np.zeros(N, dtype=np.int64)
    arr0[:K] = 1
    states = simulate_replicas(v, [t], replicas, rng, f"negdep:{K}", start=arr0,
                               workers=workers)[:, 0, :].astype(np.float64)
    n = states.shape[0]
    m = states.mean(axis=0)
    report = NegDepReport("mc", t, 0)
    for size in sizes:
        for S in itertools.combinations(range(N), size):
            cols = states[:, S]
            prod = np.prod(cols, axis=1)
            mS = m[list(S)]
            excess = float(prod.mean() - np.prod(mS))
            # delta-method influence of the plug-in estimator
            infl = prod.copy()
            for a in range(size):
                others = np.prod(np.delete(mS, a))
                infl -= others * cols[:, a]
            # the delta-method SE collapses when some joint cell is unobserved;
            # a one-count floor keeps rare-event subsets from looking significant
            se = math.hypot(float(infl.std(ddof=1) / math.sqrt(n)), 1.0 / n)
            report.checked += 1
            report.max_excess = max(report.max_excess, excess)
            if excess > n_sigma * se + atol:
                report.violations.append((tuple(s + 1 for s in S), excess, se))
    return report


# ---------------------------------------------------------------------------
# censoring comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DominanceResult:
    statistic: str
    mean_censored: float
    mean_uncensored: float
    diff: float
    se: float
    n_sigma: float = 3.0

    @property
    def passed(self) -> bool:
        return self.diff >= -self.n_sigma * self.se


def _dominance_statistics(states: np.ndarray, K: int) -> dict:
    N = states.shape[-1]
    y = N // 2
    xs = np.array(anchors(N, K)[1:])
    out = {"phi": phi_batch(states), "height_mid": heights_batch(states, y)[..., N // 2]}
    # sum over anchor pairs i <= j of h(x_i, x_j)
    sk = np.zeros(states.shape[:-1])
    for jj, xj in enumerate(xs):
        h = heights_batch(states, int(xj))
        sk += h[..., xs[:jj + 1]].sum(axis=-1)
    out["skeleton_sum"] = sk
    return out


def censoring_dominance_check(N: int, k: int, schedule: CensoringSchedule | None, t: float,
                              replicas: int, rng, variant=WITH_BOUNDARIES, K: int = 3,
                              share_blocks: bool = False, n_sigma: float = 3.0,
                              workers: int | None = None) -> list[DominanceResult]:
    """Paired censored/uncensored runs from the identity sharing clocks and windows."""
    v = _variant(variant, N, k)
    args = rate_table(v).kernel_args()
    if schedule is None:
        sched = (_kernels.NO_SCHEDULE_TIMES, _kernels.no_schedule_masks(N))
    else:
        sched = schedule.kernel_args()
    times = np.array([float(t)])
    gens = replica_generators(master_from(rng), "censor", N, k, replicas)

    def one(g):
        c, u = _kernels.paired_censored_path(np.arange(1, N + 1, dtype=np.int64), times, *args,
                                             *sched, share_blocks, g)
        return c[0], u[0]

    pairs = run_replicas(one, gens, workers)
    cens = np.stack([p[0] for p in pairs])
    unc = np.stack([p[1] for p in pairs])
    fc = _dominance_statistics(cens, K)
    fu = _dominance_statistics(unc, K)
    out = []
    for name in fc:
        d = fc[name] - fu[name]
        se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else float("inf")
        out.append(DominanceResult(name, float(fc[name].mean()), float(fu[name].mean()),
                                   float(d.mean()), se, n_sigma))
    return out


# ---------------------------------------------------------------------------
# TV of a statistic (lower) and coupling (upper)
# ---------------------------------------------------------------------------

def _bin_edges(pooled: np.ndarray, bins) -> np.ndarray:
    lo, hi = float(pooled.min()), float(pooled.max())
    if not hi > lo:
        raise ValueError("degenerate binning: all samples are equal")
    if bins is None:
        q75, q25 = np.percentile(pooled, [75, 25])
        width = 2.0 * (q75 - q25) * pooled.size ** (-1.0 / 3.0)
        n_bins = math.ceil((hi - lo) / width) if width > 0 else 16
        bins = min(max(16, n_bins), 1024)
    # widen slightly so the maximum lands inside the last bin
    pad = 1e-9 * (hi - lo)
    return np.linspace(lo - pad, hi + pad, int(bins) + 1)


def _binned_tv(a: np.ndarray, b: np.ndarray, edges: np.ndarray) -> float:
    pa = np.histogram(a, edges)[0] / a.size
    pb = np.histogram(b, edges)[0] / b.size
    return 0.5 * float(np.abs(pa - pb).sum())


def statistic_tv_lower(samples_dyn, samples_stat, bins=None, n_boot: int = 200, rng=0,
                       bias_correct: bool = True, level: float = 0.95) -> Estimate:
    """TV between the binned empirical laws of two samples, with a bootstrap CI.

    With ``bias_correct`` the point is 2 TV - mean(bootstrap TV), which removes
    the first-order upward bias of plug-in TV, and the CI is the basic
    bootstrap interval. Both are clipped to [0, 1].
    """
    a = np.asarray(samples_dyn, dtype=np.float64).ravel()
    b = np.asarray(samples_stat, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be nonempty")
    edges = _bin_edges(np.concatenate([a, b]), bins)
    tv = _binned_tv(a, b, edges)
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    boot = np.array([_binned_tv(a[g.integers(0, a.size, a.size)],
                                b[g.integers(0, b.size, b.size)], edges)
                     for _ in range(n_boot)])
    alpha = (1 - level) / 2
    q_lo, q_hi = np.quantile(boot, [alpha, 1 - alpha])
    if bias_correct:
        point = 2 * tv - boot.mean()
        lo, hi = 2 * tv - q_hi, 2 * tv - q_lo
    else:
        point, lo, hi = tv, q_lo, q_hi
    clip = lambda z: float(min(1.0, max(0.0, z)))
    return Estimate(clip(point), clip(lo), clip(hi), int(a.size))


@dataclass
class TVCurve:
    times: np.ndarray
    tv: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    crossing: float
    crossing_se: float
    level: float
    replicas: int

    def estimates(self) -> list[Estimate]:
        return [Estimate(float(p), float(l), float(h), self.replicas)
                for p, l, h in zip(self.tv, self.ci_lo, self.ci_hi)]


def _first_crossing(times: np.ndarray, curve: np.ndarray, level: float) -> float:
    below = np.nonzero(curve < level)[0]
    if below.size == 0:
        return math.nan
    i = int(below[0])
    if i == 0:
        return float(times[0])
    t0, t1 = times[i - 1], times[i]
    c0, c1 = curve[i - 1], curve[i]
    return float(t0 + (c0 - level) * (t1 - t0) / (c0 - c1))


def statistic_tv_curve(variant: ShuffleVariant, times, replicas: int, rng, level: float = 0.5,
                       n_boot: int = 100, workers: int | None = None,
                       time_scale: float = 1.0, stat_replicas: int | None = None) -> TVCurve:
    """Bias-corrected binned TV of Phi_N (identity start vs uniform) over a time grid.

    The crossing of ``level`` is interpolated linearly; its standard error
    comes from the same bootstrap (replicas resampled jointly across times).
    """
    N, k = variant.N, variant.k
    times = np.asarray(times, dtype=np.float64)
    master = master_from(rng)
    dyn = phi_batch(simulate_replicas(variant, times, replicas, master, "stat_tv_dyn",
                                      workers=workers, time_scale=time_scale))
    stat = phi_batch(uniform_samples(N, stat_replicas or replicas, master, "stat_tv_stat", k))
    edges = [_bin_edges(np.concatenate([dyn[:, i], stat]), None) for i in range(len(times))]
    raw = np.array([_binned_tv(dyn[:, i], stat, edges[i]) for i in range(len(times))])
    g = np.random.default_rng(master ^ 0x5EED)
    boot = np.empty((n_boot, len(times)))
    for bidx in range(n_boot):
        ra = g.integers(0, dyn.shape[0], dyn.shape[0])
        rb = g.integers(0, stat.size, stat.size)
        sb = stat[rb]
        for i in range(len(times)):
            boot[bidx, i] = _binned_tv(dyn[ra, i], sb, edges[i])
    bias = boot.mean(axis=0) - raw
    tv = np.clip(raw - bias, 0.0, 1.0)
    q_lo, q_hi = np.quantile(boot, [0.025, 0.975], axis=0)
    lo = np.clip(2 * raw - q_hi, 0.0, 1.0)
    hi = np.clip(2 * raw - q_lo, 0.0, 1.0)
    cross = _first_crossing(times, tv, level)
    bc = np.array([_first_crossing(times, boot[b] - bias, level) for b in range(n_boot)])
    bc = bc[np.isfinite(bc)]
    se = float(bc.std(ddof=1)) if bc.size > 1 else math.nan
    return TVCurve(times, tv, lo, hi, cross, se, level, replicas)


def wilson(successes: int, n: int, level: float = 0.95) -> Estimate:
    if n == 0:
        return Estimate(math.nan, 0.0, 1.0, 0)
    ci = binomtest(int(successes), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return Estimate(successes / n, float(ci.low), float(ci.high), int(n))


def coupling_tv_upper(N: int, k: int, variant, times, replicas: int, rng, start: str = "uniform",
                      workers: int | None = None, return_taus: bool = False):
    """P(tau > t) for the canonical coupling from (identity, ``start``), per t.

    ``start`` is 'uniform' (a fresh uniform permutation per replica, which
    bounds the distance to stationarity) or 'reverse'.
    """
    if replicas < 100:
        raise ValueError("need at least 100 replicas")
    v = _variant(variant, N, k)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    horizon = float(times.max()) if times.max() > 0 else 1.0
    args = rate_table(v).kernel_args()
    gens = replica_generators(master_from(rng), f"coupling:{start}", N, k, replicas)
    ident = np.arange(1, N + 1, dtype=np.int64)

    def one(g):
        other = _start_array(start, N, g)
        tau, finished, violated = _kernels.coalesce(ident, other, horizon, *args, g)
        if violated:
            raise RuntimeError("canonical coupling lost an agreement")
        return tau.max() if finished.all() else math.inf

    taus = np.array(run_replicas(one, gens, workers))
    est = [wilson(int(np.sum(taus > t)), replicas) for t in times]
    return (est, taus) if return_taus else est


# ---------------------------------------------------------------------------
# single-card exit times
# ---------------------------------------------------------------------------

def card_exit_times(variant: ShuffleVariant, thresholds, replicas: int, rng, start: int = 1,
                    horizon: float = math.inf, tag: str = "exit",
                    workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """First times the card starting at 1-based ``start`` sits beyond each threshold.

    Returns (times, done) of shape (replicas, len(thresholds)); unfinished
    entries hold ``horizon``.
    """
    N, k = variant.N, variant.k
    th = np.array([int(x) - 1 for x in thresholds], dtype=np.int64)
    if np.any(th < 0) or np.any(th >= N - 1):
        raise ValueError("thresholds must lie in [1, N - 1]")
    walk = walk_table(rate_table(variant))
    gens = replica_generators(master_from(rng), tag, N, k, replicas)
    res = run_replicas(lambda g: _kernels.card_walk(start - 1, th, float(horizon), *walk, g),
                       gens, workers)
    return np.stack([r[0] for r in res]), np.stack([r[1] for r in res])


def _quantiles(x: np.ndarray) -> dict:
    q = np.quantile(x, [0.1, 0.5, 0.9])
    return {"q10": float(q[0]), "median": float(q[1]), "q90": float(q[2])}


@dataclass
class ExitReport:
    N: int
    k: int
    variant: str
    replicas: int
    near: dict        # quantiles of the exit time beyond 4k
    far: dict         # quantiles of the exit time beyond floor(N/2)
    unfinished: float
    samples: np.ndarray = field(repr=False, default=None)


def boundary_exit_experiment(N: int, k: int, variant, replicas: int, rng,
                             horizon: float | None = None,
                             workers: int | None = None) -> ExitReport:
    """Card 1 from position 1: exit times beyond 4k and beyond floor(N/2)."""
    if 4 * k >= N:
        raise ValueError("the exit beyond 4k needs 4k < N")
    v = _variant(variant, N, k)
    if horizon is None:
        horizon = 200.0 * N * N / k ** 3 + 100.0
    t, done = card_exit_times(v, [4 * k, N // 2], replicas, rng, horizon=horizon,
                              tag=f"exit:{v.label}", workers=workers)
    return ExitReport(N, k, v.label, replicas, _quantiles(t[:, 0]), _quantiles(t[:, 1]),
                      float(1.0 - done.mean()), t)


# ---------------------------------------------------------------------------
# constant-order mixing without boundary rates
# ---------------------------------------------------------------------------

def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class NoPrecutoffReport:
    Ns: list
    ks: list
    exit_position: int
    medians: list
    slope: float
    slope_ci: tuple
    eps_grid: list
    proxy_times: dict          # N -> list of t(eps) aligned with eps_grid
    control_times: list = field(default_factory=list)
    control_scale: list = field(default_factory=list)

    @property
    def flat_in_N(self) -> bool:
        return self.slope_ci[0] <= 0.0 <= self.slope_ci[1]

    @property
    def grows_as_eps_shrinks(self) -> bool:
        order = np.argsort(self.eps_grid)[::-1]  # decreasing eps
        return all(np.all(np.diff(np.array(self.proxy_times[N])[order]) > 0) for N in self.Ns)

    @property
    def control_ratio(self) -> float:
        r = np.array(self.control_times) / np.array(self.control_scale)
        return float(r.max() / r.min()) if r.size else math.nan


def no_precutoff_experiment(Ns, delta: float = 0.75, eps_grid=(0.5, 0.25, 0.1, 0.05),
                            replicas: int = 4000, rng=0, exit_position: int = 1,
                            control: bool = True, control_replicas: int = 1000,
                            control_grid: int = 25, n_boot: int = 400,
                            workers: int | None = None) -> NoPrecutoffReport:
    """Plain variant with k = floor(N^delta): card-1 exit times and a boundary-rate control.

    The mixing proxy t(eps) is the time at which P(card 1 never left the first
    ``exit_position`` positions) drops to eps + exit_position / N; that
    probability minus exit_position / N lower-bounds the TV distance.
    """
    if not (2 / 3 < delta < 1):
        raise ValueError("delta must lie in (2/3, 1)")
    master = master_from(rng)
    Ns = [int(N) for N in Ns]
    ks = [int(math.floor(N ** delta)) for N in Ns]
    if min(ks) < 2:
        raise ValueError("k = floor(N^delta) must be at least 2")
    samples, medians, proxy = [], [], {}
    for N, k in zip(Ns, ks):
        v = ShuffleVariant(PLAIN, N, k)
        t, _ = card_exit_times(v, [exit_position], replicas, master, tag="noprecutoff",
                               workers=workers)
        s = t[:, 0]
        samples.append(s)
        medians.append(float(np.median(s)))
        proxy[N] = [float(np.quantile(s, max(0.0, 1.0 - eps - exit_position / N)))
                    for eps in eps_grid]
    g = np.random.default_rng(master ^ 0xB007)
    slopes = []
    for _ in range(n_boot):
        meds = [np.median(s[g.integers(0, s.size, s.size)]) for s in samples]
        slopes.append(_loglog_slope(Ns, meds))
    slope_ci = tuple(float(q) for q in np.quantile(slopes, [0.025, 0.975]))
    report = NoPrecutoffReport(Ns, ks, exit_position, medians, _loglog_slope(Ns, medians),
                               slope_ci, list(eps_grid), proxy)
    if control:
        for N, k in zip(Ns, ks):
            v = ShuffleVariant(WITH_BOUNDARIES, N, k)
            scale = N * N * math.log(N) / k ** 3
            curve = _adaptive_tv_curve(v, scale, control_replicas, master, control_grid, workers)
            report.control_times.append(curve.crossing)
            report.control_scale.append(scale)
    return report


def _adaptive_tv_curve(v: ShuffleVariant, scale: float, replicas: int, master: int,
                       n_grid: int, workers, level: float = 0.5) -> TVCurve:
    """TV curve on a grid that is widened until it brackets the crossing."""
    hi = 2.0 * scale
    for _ in range(8):
        times = np.linspace(hi / n_grid, hi, n_grid)
        curve = statistic_tv_curve(v, times, replicas, master, level, workers=workers)
        if math.isfinite(curve.crossing) and curve.crossing > times[0]:
            return curve
        hi = hi * 4 if not math.isfinite(curve.crossing) else hi / 4
    return curve


# ---------------------------------------------------------------------------
# decay of the mean height
# ---------------------------------------------------------------------------

@dataclass
class DecayReport:
    N: int
    k: int
    y: int
    x: int
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    max_mean: np.ndarray       # max over x of the mean height profile
    rate: float
    rate_se: float
    lambda_ref: float
    bound: np.ndarray          # decay bound with C = 0


def height_decay_experiment(N: int, k: int, times, replicas: int, rng, y: int | None = None,
                            x: int | None = None, variant=WITH_BOUNDARIES,
                            schedule: CensoringSchedule | None = None,
                            workers: int | None = None) -> DecayReport:
    """Mean height at ``x`` (default N/2) from the identity and its fitted exponential rate.

    The rate is a weighted least-squares slope of log(mean) on t over points
    whose mean exceeds three standard errors.
    """
    v = _variant(variant, N, k)
    y = N // 2 if y is None else y
    x = N // 2 if x is None else x
    times = np.asarray(times, dtype=np.float64)
    states = simulate_replicas(v, times, replicas, rng, "decay", schedule=schedule,
                               workers=workers)
    h = heights_batch(states, y)
    hx = h[..., x]
    mean = hx.mean(axis=0)
    se = hx.std(axis=0, ddof=1) / math.sqrt(replicas)
    ok = mean > 3 * se
    if ok.sum() >= 2:
        w = (mean[ok] / se[ok]) ** 2      # var(log m) ~ (se/m)^2
        coef, cov = np.polyfit(times[ok], np.log(mean[ok]), 1, w=np.sqrt(w), cov="unscaled")
        rate, rate_se = float(-coef[0]), float(math.sqrt(cov[0, 0]))
    else:
        rate, rate_se = math.nan, math.nan
    bound = np.array([expected_height_decay_bound(N, k, y, t) for t in times])
    return DecayReport(N, k, y, x, times, mean, se, h.mean(axis=0).max(axis=-1), rate, rate_se,
                       lambda_approx(N, k, 1), bound)
