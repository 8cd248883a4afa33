"""
Approximate spectral theory of the S_k shuffle.

Sine modes psi_j, the height statistics Phi^{(j)}_{N,y}, the approximate
eigenvalues lambda^{(j)}_{N,k}, the exact action of the generator on Phi,
exact sparse generators on enumerable state spaces and their spectral gaps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .dynamics import ShuffleVariant, boundary_rate, rate_table
from .perm import Permutation, height_numerators

__all__ = [
    "FourierMode",
    "SparseGenerator",
    "StateSpaceTooLarge",
    "GapNotConverged",
    "lambda_approx",
    "lambda_leading",
    "phi",
    "phi_from_heights",
    "expected_height_after_block",
    "height_drift_matrix",
    "generator_apply_phi",
    "phi_drift_coefficients",
    "eigen_residual",
    "interior_identity_check",
    "boundary_identity_check",
    "build_sparse_generator",
    "build_exclusion_generator",
    "lump_generator",
    "spectral_gap",
    "expected_height_decay_bound",
    "expected_heights_exact",
    "as_variant",
    "generator_apply_phi_bruteforce",
    "exclusion_lumping_deviation",
]

DEFAULT_STATE_CAP = 500_000
DEFAULT_TRANSITION_CAP = 60_000_000


class StateSpaceTooLarge(ValueError):
    pass


class GapNotConverged(RuntimeError):
    pass


def as_variant(variant, N: int, k: int) -> ShuffleVariant:
    if isinstance(variant, ShuffleVariant):
        if (variant.N, variant.k) != (N, k):
            raise ValueError("variant does not match (N, k)")
        return variant
    return ShuffleVariant(variant, N, k)


@dataclass(frozen=True)
class FourierMode:
    N: int
    j: int

    @property
    def values(self) -> np.ndarray:
        """psi_j(x) for x = 0..N, with both ends exactly zero."""
        x = np.arange(self.N + 1)
        v = np.sin(x * self.j * np.pi / self.N)
        v[0] = 0.0
        v[-1] = 0.0
        return v


def lambda_approx(N: int, k: int, j: int) -> float:
    i = np.arange(1, k + 1)
    terms = ((k - i) / k) * np.cos(i * j * np.pi / N)
    return float((k - 1) - 2.0 * np.sum(terms))


def lambda_leading(N: int, k: int, j: int) -> float:
    return k * j * j * math.pi ** 2 * (k * k - 1) / (12.0 * N * N)


def phi_from_heights(h: np.ndarray, j: int) -> float:
    """Phi for a height vector indexed x = 0..N."""
    N = h.shape[-1] - 1
    return float(np.dot(h[1:N], FourierMode(N, j).values[1:N]))


def phi(sigma: Permutation, j: int = 1, y: int | None = None) -> float:
    N = sigma.N
    if y is None:
        y = N // 2
    if not (1 <= j <= N and 1 <= y <= N):
        raise ValueError("need 1 <= j, y <= N")
    return phi_from_heights(height_numerators(sigma, y) / N, j)


def expected_height_after_block(hprofile, a: int, b: int, x: int) -> float:
    """Mean height at ``x`` after a uniform shuffle of positions a+1..b.

    ``hprofile`` is indexed by position 0..N; h(a) and h(b) are unchanged by
    the shuffle and the mean interpolates linearly between them.
    """
    if not (a <= x <= b):
        raise ValueError("x must lie between the block endpoints")
    if a == b:
        return float(hprofile[x])
    return ((b - x) * hprofile[a] + (x - a) * hprofile[b]) / (b - a)


def height_drift_matrix(variant: ShuffleVariant) -> np.ndarray:
    """Matrix A with (L h)(x) = sum_z A[x, z] h(z) for height vectors (x = 0..N)."""
    N = variant.N
    A = np.zeros((N + 1, N + 1))
    for s, e, r in rate_table(variant).intervals:
        a, b = s - 1, e
        r = float(r)
        for x in range(a + 1, b):
            A[x, a] += r * (b - x) / (b - a)
            A[x, b] += r * (x - a) / (b - a)
            A[x, x] -= r
    return A


def generator_apply_phi(sigma: Permutation, variant, j: int = 1, y: int | None = None) -> float:
    """(L Phi^{(j)}_{N,y})(sigma), summed window by window."""
    N = sigma.N
    if not isinstance(variant, ShuffleVariant) or variant.N != N:
        raise ValueError("need a ShuffleVariant matching the deck size")
    if y is None:
        y = N // 2
    h = height_numerators(sigma, y) / N
    psi = FourierMode(N, j).values
    total = 0.0
    for s, e, r in rate_table(variant).intervals:
        a, b = s - 1, e
        x = np.arange(a + 1, b)
        interp = ((b - x) * h[a] + (x - a) * h[b]) / (b - a)
        total += float(r) * float(np.dot(interp - h[x], psi[x]))
    return total


def phi_drift_coefficients(variant: ShuffleVariant, j: int = 1) -> np.ndarray:
    """a with (L Phi^{(j)})(sigma) = sum_x a[x] h_sigma(x) (x = 0..N)."""
    psi = FourierMode(variant.N, j).values
    return height_drift_matrix(variant).T @ psi


def eigen_residual(sigma: Permutation, variant, j: int = 1, y: int | None = None) -> float:
    N = sigma.N
    if y is None:
        y = N // 2
    lam = lambda_approx(N, variant.k, j)
    return abs(-generator_apply_phi(sigma, variant, j, y) - lam * phi(sigma, j, y))


def interior_identity_check(N: int, k: int, j: int, x: int) -> float:
    """|lambda psi(x) + sum_i ((k-i)/k)(psi(x-i) + psi(x+i)) - (k-1) psi(x)|.

    The bracket equals -lambda psi(x) in the bulk, so this is zero to rounding.
    """
    if not (k <= x <= N - k):
        raise ValueError(f"x must lie in [{k}, {N - k}]")
    lam = lambda_approx(N, k, j)

    def psi(z):
        return math.sin(z * j * math.pi / N)

    i = np.arange(1, k)
    w = (k - i) / k
    bracket = float(np.sum(w * (np.sin((x - i) * j * np.pi / N) + np.sin((x + i) * j * np.pi / N))))
    bracket -= (k - 1) * psi(x)
    return abs(lam * psi(x) + bracket)


def boundary_identity_check(k: int, x: int) -> Fraction:
    """LHS - RHS of the boundary balance relation for the delta weights, exactly."""
    if k < 3:
        raise ValueError("k must be at least 3")
    if not (1 <= x <= k - 1):
        raise ValueError(f"x must lie in [1, {k - 1}]")
    sq = sum(i * i for i in range(1, x))
    lhs = Fraction(0)
    if sq:
        lhs += boundary_rate(k, x) / x * sq
    lhs -= (x - k + 1 + sum((boundary_rate(k, i) for i in range(x + 1, k)), Fraction(0))) * x
    rhs = sum((Fraction(k - i, k) * (x - i) for i in range(1, k)), Fraction(0))
    return lhs - rhs


# ---------------------------------------------------------------------------
# exact generators on enumerable state spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseGenerator:
    """Off-diagonal rates ``numerators / denominator`` between enumerated states.

    ``states`` has one row per state (labels for the full chain, 0/1 bits for
    the exclusion projection). The matrix is symmetric because every window
    update is reversible with respect to the uniform measure.
    """

    N: int
    k: int
    variant: ShuffleVariant
    states: np.ndarray
    numerators: sp.csr_matrix
    denominator: int
    kind: str  # "full" or "exclusion"
    K: int | None = None

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def rates(self) -> sp.csr_matrix:
        return (self.numerators.astype(np.float64) / self.denominator).tocsr()

    @property
    def exit_rates(self) -> np.ndarray:
        return np.asarray(self.rates.sum(axis=1)).ravel()

    @property
    def theta(self) -> float:
        return float(self.exit_rates.max())

    def generator(self) -> sp.csr_matrix:
        R = self.rates
        return (R - sp.diags(np.asarray(R.sum(axis=1)).ravel())).tocsr()

    def kernel(self) -> sp.csr_matrix:
        """Uniformised stochastic matrix I + L / theta."""
        theta = self.theta
        return (sp.identity(self.size, format="csr") + self.generator() / theta).tocsr()

    def index_of(self, row) -> int:
        code = _encode(np.asarray(row, dtype=np.int64)[None, :], self._base)[0]
        i = int(np.searchsorted(self._codes, code))
        if i >= self.size or self._codes[i] != code:
            raise KeyError("state not in the enumeration")
        return int(self._order[i])

    @property
    def _base(self) -> int:
        return self.N + 1 if self.kind == "full" else 2

    @property
    def _codes(self):
        return self._sorted()[0]

    @property
    def _order(self):
        return self._sorted()[1]

    def _sorted(self):
        cache = self.__dict__.get("_sort_cache")
        if cache is None:
            codes = _encode(self.states, self._base)
            order = np.argsort(codes, kind="stable")
            cache = (codes[order], order)
            object.__setattr__(self, "_sort_cache", cache)
        return cache


def _encode(rows: np.ndarray, base: int) -> np.ndarray:
    weights = base ** np.arange(rows.shape[1], dtype=np.int64)
    return rows.astype(np.int64) @ weights


def _common_denominator(table, counts) -> int:
    d = 1
    for (s, e, r) in table.intervals:
        d = math.lcm(d, r.denominator * counts(e - s + 1))
    return d


def _assemble(states, base, contributions, n) -> sp.csr_matrix:
    codes = _encode(states, base)
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    rows, cols, vals = [], [], []
    for src, new_rows, w in contributions:
        pos = np.searchsorted(sorted_codes, _encode(new_rows, base))
        dst = order[pos]
        keep = dst != src
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(np.full(int(keep.sum()), w, dtype=np.int64))
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = v = np.zeros(0, dtype=np.int64)
    M = sp.coo_matrix((v, (r, c)), shape=(n, n), dtype=np.int64).tocsr()
    M.sum_duplicates()
    return M


def build_sparse_generator(N: int, k: int, variant="plain", *, literal_range: bool = False,
                           cap: int = DEFAULT_STATE_CAP,
                           transition_cap: int = DEFAULT_TRANSITION_CAP) -> SparseGenerator:
    if isinstance(variant, str):
        variant = ShuffleVariant(variant, N, k, literal_range)
    variant = as_variant(variant, N, k)
    n = math.factorial(N)
    if n > cap:
        raise StateSpaceTooLarge(f"{N}! = {n} states exceeds the cap {cap}")
    table = rate_table(variant)
    work = n * sum(math.factorial(e - s + 1) for s, e, _ in table.intervals)
    if work > transition_cap:
        raise StateSpaceTooLarge(f"about {work} transitions exceeds the cap {transition_cap}")
    states = np.array(list(itertools.permutations(range(1, N + 1))), dtype=np.int64)
    D = _common_denominator(table, math.factorial)
    src = np.arange(n)
    contributions = []
    for s, e, r in table.intervals:
        L = e - s + 1
        w = r.numerator * (D // (r.denominator * math.factorial(L)))
        for block in itertools.permutations(range(L)):
            new = states.copy()
            new[:, s - 1:e] = states[:, s - 1 + np.array(block)]
            contributions.append((src, new, w))
    M = _assemble(states, N + 1, contributions, n)
    return SparseGenerator(N, k, variant, states, M, D, "full")


def build_exclusion_generator(N: int, k: int, K: int, variant="plain", *,
                              literal_range: bool = False,
                              cap: int = DEFAULT_STATE_CAP) -> SparseGenerator:
    if isinstance(variant, str):
        variant = ShuffleVariant(variant, N, k, literal_range)
    variant = as_variant(variant, N, k)
    if not (1 <= K <= N - 1):
        raise ValueError("K must lie in [1, N-1]")
    n = math.comb(N, K)
    if n > cap:
        raise StateSpaceTooLarge(f"C({N},{K}) = {n} states exceeds the cap {cap}")
    states = np.zeros((n, N), dtype=np.int64)
    for row, ones in enumerate(itertools.combinations(range(N), K)):
        states[row, list(ones)] = 1
    table = rate_table(variant)
    D = _common_denominator(table, math.factorial)
    contributions = []
    for s, e, r in table.intervals:
        L = e - s + 1
        pop = states[:, s - 1:e].sum(axis=1)
        for m in range(L + 1):
            src = np.nonzero(pop == m)[0]
            if src.size == 0:
                continue
            w = r.numerator * (D // (r.denominator * math.comb(L, m)))
            for ones in itertools.combinations(range(L), m):
                pattern = np.zeros(L, dtype=np.int64)
                pattern[list(ones)] = 1
                new = states[src].copy()
                new[:, s - 1:e] = pattern
                contributions.append((src, new, w))
    M = _assemble(states, 2, contributions, n)
    return SparseGenerator(N, k, variant, states, M, D, "exclusion", K)


def lump_generator(gen: SparseGenerator, labels: np.ndarray, n_classes: int) -> sp.csr_matrix:
    """Aggregate rates into classes, checking strong lumpability exactly.

    ``labels[s]`` is the class of state s. Returns the integer numerator
    matrix between classes (same denominator as ``gen``); raises ValueError
    if two states of a class disagree on their aggregate rate to another
    class.
    """
    M = gen.numerators.tocoo()
    agg = sp.coo_matrix((M.data, (M.row, labels[M.col])), shape=(gen.size, n_classes)).tocsr()
    agg.sum_duplicates()
    dense = agg.toarray()
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    seen = np.zeros(n_classes, dtype=bool)
    for s in range(gen.size):
        c = labels[s]
        row = dense[s].copy()
        row[c] = 0
        if not seen[c]:
            out[c] = row
            seen[c] = True
        elif not np.array_equal(out[c], row):
            raise ValueError(f"not lumpable: class {c} has inconsistent outgoing rates")
    return sp.csr_matrix(out)


def _start_vector(gen: SparseGenerator) -> np.ndarray:
    N = gen.N
    if gen.kind == "full":
        y = N // 2
        small = (gen.states <= y).astype(np.float64)
    else:
        y = gen.K
        small = gen.states.astype(np.float64)
    h = np.cumsum(small, axis=1) - np.arange(1, N + 1) * y / N
    psi = FourierMode(N, 1).values[1:N]
    v = h[:, :N - 1] @ psi
    v = v - v.mean()
    jitter = np.random.default_rng(0).standard_normal(gen.size)
    jitter -= jitter.mean()
    scale = np.linalg.norm(v) or 1.0
    v = v + 1e-2 * scale * jitter / np.linalg.norm(jitter)
    return v / np.linalg.norm(v)


def spectral_gap(gen: SparseGenerator, tol: float = 1e-12, maxiter: int | None = None) -> float:
    """Smallest nonzero eigenvalue of -L.

    Lanczos (ARPACK) on the uniformised kernel with the constant vector
    projected out; the start vector is the Phi profile plus a fixed jitter.
    """
    n = gen.size
    if n < 2:
        raise ValueError("need at least two states")
    P = gen.kernel()
    theta = gen.theta
    if n <= 3:
        w = np.linalg.eigvalsh(P.toarray())
        return float(theta * (1.0 - w[-2]))

    def matvec(v):
        v = np.asarray(v).ravel()
        v = v - v.mean()
        out = P @ v
        return out - out.mean()

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    v0 = _start_vector(gen)
    ncv = min(n - 1, 40)
    try:
        vals = eigsh(op, k=1, which="LA", v0=v0, tol=tol, ncv=ncv,
                     maxiter=maxiter or 50 * n, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise GapNotConverged(f"Lanczos did not converge; partial eigenvalues {exc.eigenvalues}") from exc
    return float(theta * (1.0 - vals[0]))


def expected_height_decay_bound(N: int, k: int, y: int, t: float, C: float = 0.0) -> float:
    """8 min(y, N - y) exp(-t lambda_1) + C k^3."""
    return 8 * min(y, N - y) * math.exp(-t * lambda_approx(N, k, 1)) + C * k ** 3


def expected_heights_exact(variant: ShuffleVariant, h0: np.ndarray, times) -> np.ndarray:
    """E[h_t(x)] for x = 0..N by solving the linear height equation.

    Mean heights obey d/dt E h = A E h with A from ``height_drift_matrix``
    because a uniform window shuffle interpolates the height linearly.
    """
    from scipy.linalg import expm

    A = height_drift_matrix(variant)
    return np.array([expm(t * A) @ h0 for t in np.atleast_1d(times)])


def generator_apply_phi_bruteforce(sigma: Permutation, variant: ShuffleVariant, j: int = 1,
                                   y: int | None = None) -> float:
    """(L Phi)(sigma) by enumerating every block permutation of every window."""
    N = sigma.N
    if y is None:
        y = N // 2
    psi = FourierMode(N, j).values[1:N]
    base = sigma.entries

    def phis(arrs):
        c = np.cumsum(arrs <= y, axis=-1)[..., :N - 1]
        return (c - np.arange(1, N) * (y / N)) @ psi

    phi0 = float(phis(base[None, :])[0])
    total = 0.0
    for s, e, r in rate_table(variant).intervals:
        perms = np.array(list(itertools.permutations(range(s - 1, e))), dtype=np.int64)
        new = np.repeat(base[None, :], perms.shape[0], axis=0)
        new[:, s - 1:e] = base[perms]
        total += float(r) * (float(phis(new).mean()) - phi0)
    return total


def exclusion_lumping_deviation(N: int, k: int, K: int, variant="plain", **kwargs) -> int:
    """Max |lumped full-chain rate - exclusion rate| in units of the common denominator.

    Raises ValueError when the full generator is not lumpable under the projection.
    """
    full = build_sparse_generator(N, k, variant, **kwargs)
    excl = build_exclusion_generator(N, k, K, variant, **kwargs)
    codes = _encode((full.states <= K).astype(np.int64), 2)
    pos = np.searchsorted(excl._codes, codes)
    labels = excl._order[pos]
    lumped = lump_generator(full, labels, excl.size).toarray()
    ex = excl.numerators.toarray()
    if full.denominator != excl.denominator:
        g = math.lcm(full.denominator, excl.denominator)
        lumped = lumped * (g // full.denominator)
        ex = ex * (g // excl.denominator)
    return int(np.abs(lumped - ex).max())
