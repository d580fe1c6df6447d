"""Local-field disorder: distributions, seeded sampling, phase vectors, and
the closed-form disorder-averaged phase-product matrix.

Conventions.  The z-basis index ``s`` in {0, 1} carries eigenvalue
``e(s) = +1, -1``.  A field ``h`` acting for one step of length ``tau``
multiplies basis state ``s`` by ``exp(-1j * tau * h * e(s))``, so the
per-step phase vector is ``[exp(-i tau h), exp(+i tau h)]``.  For a pair of
sign vectors the average of the conjugated phase product depends only on
``delta = sum_p (e(sp_p) - e(s_p))``; with symmetric distributions it is
``sinc(tau * alpha * delta)`` for uniform fields on [-alpha, alpha] and
``exp(-(sigma * tau * delta)**2 / 2)`` for centered Gaussian fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIFORM = "uniform"
GAUSSIAN = "gaussian"

# Fields entering a 2^n x 2^n dense matrix are guarded to keep memory sane.
MAX_DENSE_STEPS = 12


@dataclass(frozen=True)
class DisorderSpec:
    """Distribution of the on-site field.

    ``strength`` is the half-width alpha for ``uniform`` (h in [-alpha, alpha])
    and the standard deviation sigma for ``gaussian``.
    """

    kind: str = UNIFORM
    strength: float = 0.5

    def __post_init__(self):
        if self.kind not in (UNIFORM, GAUSSIAN):
            raise ValueError(f"unknown disorder kind {self.kind!r}")
        if not self.strength > 0.0:
            raise ValueError(f"strength must be > 0, got {self.strength}")


@dataclass(frozen=True)
class RealizationBatch:
    """A reproducible batch of i.i.d. field samples."""

    values: np.ndarray
    seed: int
    spec: DisorderSpec

    @property
    def m(self) -> int:
        return self.values.size


def sample(spec: DisorderSpec, m: int, seed: int) -> RealizationBatch:
    """Draw ``m`` i.i.d. fields from ``spec``; deterministic per ``seed``."""
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if spec.kind == UNIFORM:
        values = rng.uniform(-spec.strength, spec.strength, size=m)
    else:
        values = rng.normal(0.0, spec.strength, size=m)
    values.setflags(write=False)
    return RealizationBatch(values=values, seed=seed, spec=spec)


def task_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent child seed streams for parallel tasks, derived from ``seed``."""
    return np.random.SeedSequence(seed).spawn(count)


def phase_vector(h: float, tau: float) -> np.ndarray:
    """Length-2 unit-modulus phases picked up by the two z-basis states."""
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return np.array([np.exp(-1j * tau * h), np.exp(1j * tau * h)])


def sinc(x):
    """sin(x)/x with sinc(0) = 1; series 1 - x^2/6 below |x| = 1e-8."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)
    return out if out.ndim else float(out)


def _validate_signs(sv: np.ndarray) -> np.ndarray:
    sv = np.asarray(sv, dtype=int)
    if not np.all(np.abs(sv) == 1):
        raise ValueError("sign vectors must contain only +1/-1 entries")
    return sv


def averaged_phase_factor(delta, spec: DisorderSpec, tau: float):
    """Disorder average of exp(i h tau delta) for integer eigenvalue sums."""
    delta = np.asarray(delta, dtype=float)
    if spec.kind == UNIFORM:
        out = sinc(tau * spec.strength * delta)
    else:
        out = np.exp(-0.5 * (spec.strength * tau * delta) ** 2)
    return out if np.ndim(out) else float(out)


def analytic_o_entry(sp, s, spec: DisorderSpec, tau: float) -> float:
    """Closed-form entry of the averaged phase-product matrix for one sign pair."""
    sp = _validate_signs(sp)
    s = _validate_signs(s)
    if sp.shape != s.shape:
        raise ValueError(f"sign vectors differ in length: {sp.shape} vs {s.shape}")
    delta = int(np.sum(sp - s))
    return float(averaged_phase_factor(delta, spec, tau))


def _eigensum_per_index(n: int) -> np.ndarray:
    """sum_p e(s_p) for every n-bit basis index (bit 0 -> +1, bit 1 -> -1)."""
    idx = np.arange(2**n, dtype=np.uint32)
    pop = np.zeros(2**n, dtype=np.int64)
    for b in range(n):
        pop += (idx >> b) & 1
    return n - 2 * pop


def dense_o_matrix(n: int, spec: DisorderSpec, tau: float) -> np.ndarray:
    """Dense 2^n x 2^n averaged phase-product matrix (analytic).

    Entry (r, c) couples the sign vectors encoded by the bits of r and c;
    it depends only on the difference of their eigenvalue sums, so the
    matrix is real symmetric with unit diagonal and PSD.
    """
    if n > MAX_DENSE_STEPS:
        raise ValueError(f"dense matrix limited to n <= {MAX_DENSE_STEPS}, got {n}")
    es = _eigensum_per_index(n)
    delta = es[:, None] - es[None, :]
    return averaged_phase_factor(delta, spec, tau)


def monte_carlo_o(n: int, batch: RealizationBatch, tau: float) -> np.ndarray:
    """Empirical batch mean of the phase-product matrix.

    Exactly Hermitian PSD by construction; converges entrywise to
    :func:`dense_o_matrix` at the usual 1/sqrt(M) Monte-Carlo rate (the
    imaginary parts are pure sampling noise for symmetric distributions).
    """
    if n > MAX_DENSE_STEPS:
        raise ValueError(f"dense matrix limited to n <= {MAX_DENSE_STEPS}, got {n}")
    es = _eigensum_per_index(n)
    delta = es[:, None] - es[None, :]
    # Entry mean_j exp(i h_j tau delta) depends on delta in [-2n, 2n] only.
    dvals = np.arange(-2 * n, 2 * n + 1)
    mu = np.zeros(dvals.size, dtype=complex)
    for lo in range(0, batch.m, 262144):
        chunk = batch.values[lo : lo + 262144]
        mu += np.exp(1j * tau * np.outer(chunk, dvals)).sum(axis=0)
    mu /= batch.m
    return mu[delta + 2 * n]
