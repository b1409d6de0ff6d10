"""Quasi-Monte-Carlo standard normal draws from Halton sequences.

Each random coefficient dimension gets its own prime base, assigned in
declaration order starting at 2. Individual i receives the contiguous block
of points i*R+1 .. (i+1)*R of each dimension's sequence (after the burn-in
points are discarded), transformed to standard normals by the inverse CDF.
The tensor is a pure function of (plan, n_individuals): rebuilding it gives
bit-identical values, which keeps the simulated likelihood smooth across
optimizer iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, DomainError

DEFAULT_BURN_IN = 10
UNIFORM_CLAMP = 1e-12
CONTIGUOUS = "contiguous"


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def default_primes(k: int) -> tuple[int, ...]:
    """First k primes (2, 3, 5, ...)."""
    out: list[int] = []
    candidate = 2
    while len(out) < k:
        if _is_prime(candidate):
            out.append(candidate)
        candidate += 1
    return tuple(out)


@dataclass(frozen=True)
class DrawPlan:
    """Configuration of the draw tensor shared by all likelihood evaluations."""

    n_draws: int
    dimensions: int
    primes: tuple[int, ...]
    burn_in: int = DEFAULT_BURN_IN
    blocking: str = CONTIGUOUS
    permutation_seed: int | None = None

    def __post_init__(self):
        if self.n_draws < 1:
            raise ConfigurationError("n_draws must be >= 1")
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        if self.dimensions < 0:
            raise ConfigurationError("dimensions must be >= 0")
        if len(self.primes) < self.dimensions:
            raise ConfigurationError(
                f"{self.dimensions} random dimensions but only "
                f"{len(self.primes)} primes supplied")
        for p in self.primes:
            if not _is_prime(p):
                raise ConfigurationError(f"{p} is not prime")
        if list(self.primes) != sorted(set(self.primes)):
            raise ConfigurationError("primes must be distinct and ascending")
        if self.blocking != CONTIGUOUS:
            raise ConfigurationError(f"unknown blocking rule {self.blocking!r}")


def make_plan(n_draws: int, dimensions: int, burn_in: int = DEFAULT_BURN_IN,
              primes: tuple[int, ...] | None = None,
              permutation_seed: int | None = None) -> DrawPlan:
    if primes is None:
        primes = default_primes(dimensions)
    return DrawPlan(n_draws=n_draws, dimensions=dimensions, primes=tuple(primes),
                    burn_in=burn_in, permutation_seed=permutation_seed)


def radical_inverse_sequence(base: int, count: int, burn_in: int = 0) -> np.ndarray:
    """Elements burn_in+1 .. burn_in+count of the Halton sequence in `base`.

    The sequence is 1-indexed: element i is the radical inverse of i, i.e.
    the base-`base` digits of i mirrored around the radix point, so every
    value lies strictly inside (0, 1).
    """
    if not _is_prime(base):
        raise ConfigurationError(f"Halton base must be prime, got {base}")
    if count < 0:
        raise ConfigurationError("count must be >= 0")
    idx = np.arange(burn_in + 1, burn_in + count + 1, dtype=np.int64)
    out = np.zeros(count, dtype=float)
    f = 1.0
    while idx.size and idx.max() > 0:
        f /= base
        out += f * (idx % base)
        idx = idx // base
    return out


def standard_normal_from_uniform(u):
    """Inverse standard normal CDF, elementwise; u must lie in (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("uniform draws must lie strictly inside (0, 1)")
    z = ndtri(arr)
    return float(z) if np.isscalar(u) or arr.ndim == 0 else z


@dataclass(frozen=True)
class DrawTensor:
    """N x R x K standard normal draws; immutable and reusable across iterations."""

    values: np.ndarray
    plan: DrawPlan

    @property
    def n_individuals(self) -> int:
        return self.values.shape[0]

    @property
    def n_draws(self) -> int:
        return self.values.shape[1]

    @property
    def dimensions(self) -> int:
        return self.values.shape[2]


def build_draw_tensor(plan: DrawPlan, n_individuals: int) -> DrawTensor:
    """Materialize the draw tensor for `n_individuals` decision makers.

    Uniforms are clamped to [1e-12, 1 - 1e-12] before the inverse-CDF
    transform so no transformed value can be infinite.
    """
    if n_individuals < 1:
        raise ConfigurationError("need at least one individual")
    n, r, k = n_individuals, plan.n_draws, plan.dimensions
    values = np.empty((n, r, k), dtype=float)
    for dim in range(k):
        u = radical_inverse_sequence(plan.primes[dim], n * r, plan.burn_in)
        u = np.clip(u, UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
        values[:, :, dim] = ndtri(u).reshape(n, r)
    if plan.permutation_seed is not None and k > 0:
        rng = np.random.default_rng(plan.permutation_seed)
        values = rng.permuted(values, axis=1)
    values.flags.writeable = False
    return DrawTensor(values=values, plan=plan)
