"""
The S_k block shuffle: rate tables, Poisson-clock events, censoring and the
canonical two-copy coupling.

Two code paths realise the same law. The pure-Python functions
(``sample_next_event``, ``step``, ``coupled_step``) are the readable reference
and are used by the distributional tests; ``simulate`` and the batch helpers
run the JIT kernels in ``_kernels``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .perm import Permutation, anchors

__all__ = [
    "PLAIN",
    "WITH_BOUNDARIES",
    "UNIT_BOUNDARIES",
    "ShuffleVariant",
    "RateTable",
    "CensoringSchedule",
    "UpdateEvent",
    "CoalescenceResult",
    "boundary_rate",
    "boundary_rate_printed",
    "rate_table",
    "sample_next_event",
    "censored_partition",
    "step",
    "simulate",
    "sample_states",
    "coupled_step",
    "coalescence_times",
    "make_cutoff_censoring",
    "walk_table",
]

PLAIN = "plain"
WITH_BOUNDARIES = "with_boundaries"
# boundary windows present but every rate capped at 1 (the delta in [0, 1] regime)
UNIT_BOUNDARIES = "unit_boundaries"
KINDS = (PLAIN, WITH_BOUNDARIES, UNIT_BOUNDARIES)


@dataclass(frozen=True)
class ShuffleVariant:
    kind: str
    N: int
    k: int
    # bulk windows start at 1..N-k (as printed) instead of 1..N-k+1
    literal_range: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}; expected one of {KINDS}")
        if not (2 <= self.k <= self.N):
            raise ValueError(f"need 2 <= k <= N, got k={self.k}, N={self.N}")

    @property
    def label(self) -> str:
        return self.kind + ("-literal" if self.literal_range else "")


def boundary_rate_printed(k: int, i_printed: int) -> Fraction:
    """delta_{k - i_printed} evaluated verbatim from the printed weight formula."""
    num = 4 * k * k - 6 * i_printed * k + 3 * i_printed * i_printed - 1
    m = k - i_printed
    return Fraction(num, (2 * m + 1) * (2 * m - 1))


def boundary_rate(k: int, i: int) -> Fraction:
    """Rate delta_i^{(k)} of the windows [1, i] and [N - i + 1, N], 2 <= i <= k - 1."""
    if k < 3:
        raise ValueError("boundary rates exist only for k >= 3")
    if not (2 <= i <= k - 1):
        raise ValueError(f"block length i must lie in [2, {k - 1}]")
    return Fraction(k * k + 3 * i * i - 1, (2 * i + 1) * (2 * i - 1))


@dataclass(frozen=True)
class RateTable:
    """Update windows as 1-based inclusive (start, end, rate) triples.

    Bulk windows come first and all have rate 1.
    """

    N: int
    k: int
    intervals: tuple
    n_bulk: int

    @property
    def total_rate(self) -> Fraction:
        return sum((r for _, _, r in self.intervals), Fraction(0))

    @property
    def rates(self) -> np.ndarray:
        return np.array([float(r) for _, _, r in self.intervals])

    def kernel_args(self) -> tuple:
        """(n_bulk, k, extra_starts, extra_lens, extra_cum, total) for ``_kernels``."""
        extra = self.intervals[self.n_bulk:]
        starts = np.array([s - 1 for s, _, _ in extra], dtype=np.int64)
        lens = np.array([e - s + 1 for s, e, _ in extra], dtype=np.int64)
        cum = np.cumsum([float(r) for _, _, r in extra]).astype(np.float64)
        if cum.size == 0:
            cum = np.zeros(0, dtype=np.float64)
        return (self.n_bulk, self.k, starts, lens, cum, float(self.total_rate))


def rate_table(variant: ShuffleVariant) -> RateTable:
    N, k = variant.N, variant.k
    n_bulk = N - k if variant.literal_range else N - k + 1
    intervals = [(i, i + k - 1, Fraction(1)) for i in range(1, n_bulk + 1)]
    if variant.kind != PLAIN and k >= 3:
        for i in range(2, k):
            rate = boundary_rate(k, i) if variant.kind == WITH_BOUNDARIES else Fraction(1)
            intervals.append((1, i, rate))
            intervals.append((N - i + 1, N, rate))
    return RateTable(N, k, tuple(intervals), n_bulk)


@dataclass(frozen=True)
class CensoringSchedule:
    """Right-continuous piecewise-constant map from time to censored edges.

    Segment s covers [breakpoints[s], breakpoints[s + 1]); the last segment
    extends to infinity and nothing is censored before breakpoints[0]. Edge x
    stands for {x, x + 1}.
    """

    N: int
    breakpoints: tuple
    edge_sets: tuple

    def __post_init__(self):
        if len(self.breakpoints) != len(self.edge_sets):
            raise ValueError("one edge set per breakpoint is required")
        if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        for edges in self.edge_sets:
            if any(not (1 <= x <= self.N - 1) for x in edges):
                raise ValueError(f"edges must lie in [1, {self.N - 1}]")
        object.__setattr__(self, "edge_sets", tuple(frozenset(e) for e in self.edge_sets))

    @classmethod
    def constant(cls, N: int, edges: Iterable[int]) -> "CensoringSchedule":
        return cls(N, (0.0,), (frozenset(edges),))

    def at(self, t: float) -> frozenset:
        s = bisect.bisect_right(self.breakpoints, t) - 1
        return frozenset() if s < 0 else self.edge_sets[s]

    def kernel_args(self) -> tuple:
        times = np.array(self.breakpoints, dtype=np.float64)
        masks = np.zeros((len(self.breakpoints), max(self.N - 1, 1)), dtype=np.uint8)
        for s, edges in enumerate(self.edge_sets):
            for x in edges:
                masks[s, x - 1] = 1
        return times, masks


def _schedule_args(schedule: CensoringSchedule | None, N: int) -> tuple:
    if schedule is None:
        return _kernels.NO_SCHEDULE_TIMES, _kernels.no_schedule_masks(N)
    return schedule.kernel_args()


@dataclass(frozen=True)
class UpdateEvent:
    time: float
    interval: tuple  # 1-based inclusive (start, end)


def sample_next_event(rng: np.random.Generator, table: RateTable, t_now: float) -> UpdateEvent:
    total = float(table.total_rate)
    if total <= 0:
        raise ValueError("rate table has no windows")
    t = t_now + rng.exponential(1.0 / total)
    idx = rng.choice(len(table.intervals), p=table.rates / total)
    s, e, _ = table.intervals[idx]
    return UpdateEvent(t, (s, e))


def censored_partition(interval: tuple, edges: Iterable[int]) -> list[tuple]:
    """Maximal sub-windows of ``interval`` that straddle no censored edge."""
    s, e = interval
    cuts = sorted(x for x in set(edges) if s <= x < e)
    pieces = []
    start = s
    for x in cuts:
        pieces.append((start, x))
        start = x + 1
    pieces.append((start, e))
    return pieces


def step(eta: Permutation, ev: UpdateEvent, schedule: CensoringSchedule | None,
         rng: np.random.Generator) -> Permutation:
    s, e = ev.interval
    if not (1 <= s <= e <= eta.N):
        raise ValueError(f"interval {ev.interval} outside the deck")
    edges = schedule.at(ev.time) if schedule is not None else ()
    arr = eta.entries.copy()
    for a, b in censored_partition((s, e), edges):
        if b > a:
            arr[a - 1:b] = arr[a - 1:b][rng.permutation(b - a + 1)]
    return Permutation._trusted(arr)


def simulate(eta0: Permutation, T: float, variant: ShuffleVariant,
             schedule: CensoringSchedule | None = None,
             rng: np.random.Generator | None = None,
             observers: Sequence[Callable] = (),
             sample_times: Sequence[float] = ()) -> Permutation:
    """Run the chain from ``eta0`` up to time ``T``.

    Each observer is called as ``observer(t, state)`` at every sampling time
    in [0, T]. Clocks are memoryless, so the event loop restarts at each
    sampling time without changing the law.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if rng is None:
        rng = np.random.default_rng()
    if eta0.N != variant.N:
        raise ValueError("initial state and variant disagree on N")
    args = rate_table(variant).kernel_args()
    sched = _schedule_args(schedule, variant.N)
    arr = eta0.entries.copy()
    t = 0.0
    for ts in sorted(x for x in sample_times if 0 <= x <= T):
        _kernels.advance(arr, t, ts, *args, *sched, rng)
        t = ts
        state = Permutation._trusted(arr)
        for obs in observers:
            obs(ts, state)
    _kernels.advance(arr, t, T, *args, *sched, rng)
    return Permutation._trusted(arr)


def sample_states(eta0: Permutation, times: Sequence[float], variant: ShuffleVariant,
                  rng: np.random.Generator,
                  schedule: CensoringSchedule | None = None) -> np.ndarray:
    """Label arrays at each of ``times`` (sorted ascending), shape (len(times), N)."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    args = rate_table(variant).kernel_args()
    sched = _schedule_args(schedule, variant.N)
    return _kernels.sample_path(eta0.entries.copy(), times, *args, *sched, rng)


def coupled_step(eta: Permutation, eta2: Permutation, ev: UpdateEvent,
                 rng: np.random.Generator) -> tuple[Permutation, Permutation]:
    """One canonical-coupling update of both copies on ``ev.interval``.

    Labels sitting at the same position in both copies are placed at a
    uniformly chosen common set of positions in a uniform order; the other
    positions are filled independently in each copy.
    """
    if eta.N != eta2.N:
        raise ValueError("copies must have the same size")
    s, e = ev.interval
    a = eta.entries.copy()
    b = eta2.entries.copy()
    win_a = a[s - 1:e]
    win_b = b[s - 1:e]
    same = win_a == win_b
    agree = win_a[same]
    rest_a = rng.permutation(win_a[~same])
    rest_b = rng.permutation(win_b[~same])
    pos = rng.permutation(e - s + 1)
    n = agree.size
    new_a = np.empty_like(win_a)
    new_b = np.empty_like(win_b)
    new_a[pos[:n]] = agree
    new_b[pos[:n]] = agree
    new_a[pos[n:]] = rest_a
    new_b[pos[n:]] = rest_b
    a[s - 1:e] = new_a
    b[s - 1:e] = new_b
    return Permutation._trusted(a), Permutation._trusted(b)


@dataclass(frozen=True)
class CoalescenceResult:
    """Per-label first agreement times; ``finished[l - 1]`` is False when label l
    had not coalesced by ``horizon`` (its time is then recorded as ``horizon``)."""

    times: np.ndarray
    finished: np.ndarray
    horizon: float

    @property
    def all_finished(self) -> bool:
        return bool(self.finished.all())

    @property
    def tau(self) -> float:
        """max_i tau_i, or ``horizon`` when some label did not coalesce."""
        return float(self.times.max())


def coalescence_times(eta0: Permutation, eta02: Permutation, variant: ShuffleVariant,
                      rng: np.random.Generator, horizon: float) -> CoalescenceResult:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if eta0.N != eta02.N or eta0.N != variant.N:
        raise ValueError("size mismatch")
    args = rate_table(variant).kernel_args()
    tau, finished, violated = _kernels.coalesce(eta0.entries.copy(), eta02.entries.copy(),
                                                float(horizon), *args, rng)
    if violated:
        raise RuntimeError("canonical coupling lost an agreement; this is a bug")
    return CoalescenceResult(tau, finished, float(horizon))


def make_cutoff_censoring(N: int, k: int, K: int, delta: float):
    """Censoring used for the cutoff upper bound and its three times.

    Edges {x_i, x_i + 1}, x_i = ceil(iN/K), are censored on [0, t1) and
    [t2, t3) and free otherwise.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if K < 2:
        raise ValueError("K must be at least 2")
    scale = N * N * math.log(N) / k ** 3
    t1 = delta * scale / 3
    t2 = (2 * delta / 3 + 4 / math.pi ** 2) * scale
    t3 = (delta + 4 / math.pi ** 2) * scale
    edges = frozenset(x for x in anchors(N, K)[1:] if 1 <= x <= N - 1)
    sched = CensoringSchedule(N, (0.0, t1, t2, t3), (edges, frozenset(), edges, frozenset()))
    return sched, t1, t2, t3


def walk_table(table: RateTable) -> tuple:
    """Per-position window lists (CSR) for the single-card walk kernel."""
    N = table.N
    ptr = [0]
    starts, lens, cum = [], [], []
    for p in range(1, N + 1):
        acc = 0.0
        for s, e, r in table.intervals:
            if s <= p <= e:
                acc += float(r)
                starts.append(s - 1)
                lens.append(e - s + 1)
                cum.append(acc)
        if acc == 0.0:
            # position covered by no window; a zero-rate placeholder keeps the card put
            starts.append(p - 1)
            lens.append(1)
            cum.append(1e-300)
        ptr.append(len(starts))
    return (np.array(ptr, dtype=np.int64), np.array(starts, dtype=np.int64),
            np.array(lens, dtype=np.int64), np.array(cum, dtype=np.float64))
