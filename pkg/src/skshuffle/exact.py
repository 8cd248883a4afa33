"""
Exact distribution evolution and mixing times on enumerable state spaces.

Distributions are float vectors indexed by a ``SparseGenerator``'s state
enumeration. Time evolution uses uniformisation: e^{tL} is a Poisson(theta t)
mixture of powers of P = I + L / theta. Long horizons are cut into chunks with
theta * dt <= ``CHUNK`` so Poisson weights never underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .perm import identity
from .spectral import SparseGenerator, build_exclusion_generator, build_sparse_generator

__all__ = [
    "tv_distance",
    "uniform_distribution",
    "dirac",
    "identity_index",
    "evolve",
    "MixingResult",
    "exact_mixing_time",
    "projection_mixing_lower",
    "full_mixing_time",
    "tv_curve",
]

CHUNK = 200.0


def tv_distance(mu: np.ndarray, nu: np.ndarray) -> float:
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if mu.shape != nu.shape:
        raise ValueError(f"distributions have different shapes {mu.shape} and {nu.shape}")
    return float(min(1.0, 0.5 * np.abs(mu - nu).sum()))


def uniform_distribution(gen: SparseGenerator) -> np.ndarray:
    return np.full(gen.size, 1.0 / gen.size)


def dirac(gen: SparseGenerator, index: int) -> np.ndarray:
    mu = np.zeros(gen.size)
    mu[index] = 1.0
    return mu


def identity_index(gen: SparseGenerator) -> int:
    """Index of the identity (full chain) or of its exclusion image."""
    if gen.kind == "full":
        return gen.index_of(identity(gen.N).entries)
    bits = np.zeros(gen.N, dtype=np.int64)
    bits[:gen.K] = 1
    return gen.index_of(bits)


def _poisson_weights(m: float, tol: float) -> np.ndarray:
    n_max = int(poisson.isf(tol / 2, m)) + 1 if m > 0 else 0
    w = poisson.pmf(np.arange(n_max + 1), m)
    return w


def _evolve_chunk(P, mu, m, tol):
    w = _poisson_weights(m, tol)
    out = w[0] * mu
    v = mu
    for wn in w[1:]:
        v = P @ v
        out += wn * v
    return out


def evolve(gen: SparseGenerator, mu0: np.ndarray, t: float, tol: float = 1e-12,
           _kernel=None) -> np.ndarray:
    """Law at time ``t`` of the chain started from ``mu0``.

    The truncated Poisson tail is below ``tol`` in total over all chunks; the
    result is clipped at 0 and renormalised.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    mu = np.asarray(mu0, dtype=np.float64).copy()
    if mu.shape != (gen.size,):
        raise ValueError("mu0 does not match the state enumeration")
    if t == 0:
        return mu
    P = _kernel if _kernel is not None else gen.kernel()
    # P is symmetric, so it is its own adjoint acting on row distributions
    m_total = gen.theta * t
    n_chunks = max(1, math.ceil(m_total / CHUNK))
    for _ in range(n_chunks):
        mu = _evolve_chunk(P, mu, m_total / n_chunks, tol / n_chunks)
    np.clip(mu, 0.0, None, out=mu)
    return mu / mu.sum()


def tv_curve(gen: SparseGenerator, start: int, times, tol: float = 1e-12) -> np.ndarray:
    """TV to uniform at each of the sorted ``times`` from the Dirac at ``start``."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    P = gen.kernel()
    pi = uniform_distribution(gen)
    mu = dirac(gen, start)
    t_prev = 0.0
    out = []
    for t in times:
        mu = evolve(gen, mu, t - t_prev, tol, _kernel=P)
        t_prev = t
        out.append(tv_distance(mu, pi))
    return np.array(out)


@dataclass
class MixingResult:
    t_mix: float
    eps: float
    # every (t, TV) pair evaluated during the bracket search, sorted by t
    curve: list = field(default_factory=list)

    def __float__(self) -> float:
        return self.t_mix


def exact_mixing_time(gen: SparseGenerator, start: int | None = None, eps: float = 0.25,
                      tol: float = 1e-3, evolve_tol: float = 1e-12) -> MixingResult:
    """Smallest t with TV(law at t, uniform) < eps, bisected to relative width ``tol``.

    ``start`` defaults to the identity. The full chain is transitive, so that
    start is as bad as any.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    if start is None:
        start = identity_index(gen)
    P = gen.kernel()
    pi = uniform_distribution(gen)
    mu0 = dirac(gen, start)
    curve = [(0.0, tv_distance(mu0, pi))]
    if curve[0][1] < eps:
        return MixingResult(0.0, eps, curve)

    def step(mu, dt):
        return evolve(gen, mu, dt, evolve_tol, _kernel=P)

    lo, mu_lo = 0.0, mu0
    hi = 1.0
    mu_hi = step(mu0, hi)
    curve.append((hi, tv_distance(mu_hi, pi)))
    while curve[-1][1] >= eps:
        lo, mu_lo = hi, mu_hi
        hi *= 2.0
        mu_hi = step(mu_lo, hi - lo)
        curve.append((hi, tv_distance(mu_hi, pi)))
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        mu_mid = step(mu_lo, mid - lo)
        d = tv_distance(mu_mid, pi)
        curve.append((mid, d))
        if d < eps:
            hi = mid
        else:
            lo, mu_lo = mid, mu_mid
    curve.sort()
    return MixingResult(hi, eps, curve)


def projection_mixing_lower(N: int, k: int, K: int, eps: float, variant="plain",
                            tol: float = 1e-3, **gen_kwargs) -> MixingResult:
    """Exact mixing time of the exclusion projection started from the identity's image.

    Projection cannot increase TV, so this lower-bounds the full chain's t_mix(eps).
    """
    gen = build_exclusion_generator(N, k, K, variant, **gen_kwargs)
    return exact_mixing_time(gen, identity_index(gen), eps, tol)


def full_mixing_time(N: int, k: int, eps: float, variant="plain", tol: float = 1e-3,
                     **gen_kwargs) -> MixingResult:
    gen = build_sparse_generator(N, k, variant, **gen_kwargs)
    return exact_mixing_time(gen, identity_index(gen), eps, tol)
