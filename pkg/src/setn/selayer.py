"""Build and compress the statistics layer.

Per realization j the layer is a rank-1 product over time steps of the
two-layer phase table ``u(j) = (1, z_j, conj(z_j), 1)`` with
``z_j = exp(2i h_j tau)``; the batch mean over M realizations is a matrix
product operator of bond dimension M.  Compression sweeps once left to
right: at step p the matrix ``T_p[(bond, table), j] = B_{p-1}[bond, j] *
u[table, j]`` is factorized, the left factor becomes the step-p core, and
``B_p = diag(S) V`` (size chi x M) carries the state.  Only ``B`` and the
phase table are ever held, so the auxiliary memory is O((chi + D) M).

The per-step factorization has two backends: exact QR-SVD on the tall
matrix (resolves singular values to machine precision relative to S0), and
a Gram backend that assembles ``T T^dag`` from five frequency-moment
matrices ``B diag(z^m) B^dag``, m in {-2..2}, at a third of the flops and
none of the tall-matrix traffic.  The Gram route cannot resolve singular
values below ~sqrt(eps) * S0; it is selected automatically for batches too
large for the exact route and is fine for spectra used in scaling fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderSpec, RealizationBatch
from .tensor import TruncationPolicy, clamp_spectrum, gram_spectrum, qr_svd

# (l', l) joint index order for the phase table: (0,0), (0,1), (1,0), (1,1)
# carrying frequency shifts (0, +1, -1, 0) in units of 2 h tau.
TABLE_SHIFTS = (0, 1, -1, 0)

# Batches at or below this size use the exact QR-SVD backend by default.
EXACT_SVD_MAX_BATCH = 30_000

# Gram eigenvalues below this multiple of the top one are eigensolver noise.
GRAM_FLOOR = 100.0 * np.finfo(float).eps


class DegenerateTruncationError(RuntimeError):
    """Raised when a truncation policy keeps no singular values at all."""


@dataclass(frozen=True)
class RawSeLayer:
    """Uncompressed statistics layer: batch mean of rank-1 phase products.

    The bond dimension equals the batch size and is kept implicit; the
    object just bundles the batch with the step geometry.
    """

    batch: RealizationBatch
    n: int
    tau: float

    def phase_table(self) -> np.ndarray:
        """(4, M) two-layer phase table, rows ordered per TABLE_SHIFTS."""
        z = np.exp(2j * self.tau * self.batch.values)
        return np.stack([np.ones_like(z), z, z.conj(), np.ones_like(z)])

    def contract_dense(self) -> np.ndarray:
        """Dense 2^n x 2^n batch mean; memory-guarded via the moment form."""
        from .disorder import monte_carlo_o

        return monte_carlo_o(self.n, self.batch, self.tau)


@dataclass
class SeLayerChain:
    """Compressed statistics layer with per-step spectra and closures.

    ``cores[p]`` has axes ``(bond_{p-1}, table, bond_p)`` with the table axis
    ordered per TABLE_SHIFTS.  ``closures[p]`` caps the chain after step p so
    every prefix of the sweep is usable: contracting cores[0..p] with
    closures[p] over the bonds reproduces the batch-mean tensor of the first
    p+1 steps up to the accumulated discarded weight.  ``spectra[p]`` holds
    the descending singular values seen at that step.
    """

    cores: list[np.ndarray]
    spectra: list[np.ndarray]
    closures: list[np.ndarray]
    discarded: list[float]
    tau: float
    spec: DisorderSpec
    m: int
    seed: int | None = None
    exact: bool = True

    @property
    def n(self) -> int:
        return len(self.cores)

    @property
    def bond_dims(self) -> list[int]:
        return [c.shape[2] for c in self.cores]

    def total_discarded(self) -> float:
        acc = 1.0
        for w in self.discarded:
            acc *= 1.0 - w
        return 1.0 - acc

    def network_cores(self, n: int | None = None) -> list[np.ndarray]:
        """Cores of the n-step prefix with the closure folded into the last one."""
        n = self.n if n is None else n
        if not 1 <= n <= self.n:
            raise ValueError(f"prefix length {n} outside 1..{self.n}")
        cores = list(self.cores[:n])
        cores[-1] = cores[-1] @ self.closures[n - 1]
        cores[-1] = cores[-1][:, :, None]
        return cores

    def contract_dense(self, n: int | None = None) -> np.ndarray:
        """Dense 2^n x 2^n matrix represented by the (prefix of the) chain."""
        n = self.n if n is None else n
        if n > 12:
            raise ValueError("dense contraction limited to n <= 12")
        acc = np.ones((1, 1), dtype=complex)
        for core in self.network_cores(n):
            acc = np.tensordot(acc, core, axes=[[1], [0]])  # (rows, table, bond)
            acc = acc.reshape(-1, core.shape[2])
        vec = acc[:, 0]
        # rows are (l'_1 l_1)(l'_2 l_2)...; regroup to (l'_1..l'_n),(l_1..l_n)
        t = vec.reshape((2,) * (2 * n))
        perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        return t.transpose(perm).reshape(2**n, 2**n)


def build_se_layer(batch: RealizationBatch, n: int, tau: float) -> RawSeLayer:
    """Uncompressed layer (bond dimension M, implicit) for ``n`` steps."""
    if n < 1:
        raise ValueError(f"step count must be >= 1, got {n}")
    if batch.m < 1:
        raise ValueError("batch must contain at least one realization")
    return RawSeLayer(batch=batch, n=n, tau=tau)


def _truncate_spectrum(s: np.ndarray, total: float, policy: TruncationPolicy,
                       floor: float = 0.0) -> tuple[int, float]:
    """Kept rank and discarded weight for a descending spectrum."""
    keep = policy.kept_rank(s)
    if floor > 0.0 and keep > 0:
        keep = min(keep, int(np.count_nonzero(s**2 >= floor * s[0] ** 2)))
    if keep == 0:
        raise DegenerateTruncationError(
            "truncation policy discarded every singular value")
    kept_weight = float(np.sum(s[:keep] ** 2))
    discarded = max(0.0, 1.0 - kept_weight / total) if total > 0 else 0.0
    return keep, discarded


def _step_exact(b: np.ndarray, table: np.ndarray, policy: TruncationPolicy):
    """One sweep step via QR-SVD of the materialized (4 chi) x M matrix."""
    chi = b.shape[0]
    t = (b[:, None, :] * table[None, :, :]).reshape(4 * chi, -1)
    s, u, total = qr_svd(t)
    keep, discarded = _truncate_spectrum(s, total, policy)
    u = u[:, :keep]
    b_next = u.conj().T @ t
    core = u.reshape(chi, 4, keep)
    return core, s, b_next, discarded


def _step_gram(b: np.ndarray, z: np.ndarray, policy: TruncationPolicy):
    """One sweep step via the five-moment Gram assembly (no tall SVD)."""
    chi, m = b.shape
    # C_k = B diag(z^k) B^dag for k = 0, 1, 2; C_{-k} = C_k^dag.
    bc = b.conj().T
    c = {0: b @ bc, 1: (b * z) @ bc, 2: (b * (z * z)) @ bc}
    c[-1] = c[1].conj().T
    c[-2] = c[2].conj().T
    g = np.empty((4, chi, 4, chi), dtype=complex)
    for a in range(4):
        for d in range(4):
            g[a, :, d, :] = c[TABLE_SHIFTS[a] - TABLE_SHIFTS[d]]
    # row index ordered (bond, table) to match the exact backend
    g = g.transpose(1, 0, 3, 2).reshape(4 * chi, 4 * chi)
    s, u, total = gram_spectrum(g)
    keep, discarded = _truncate_spectrum(s, total, policy, floor=GRAM_FLOOR)
    u = u[:, :keep]
    # B_next = U^dag T assembled row-block-wise, never materializing T
    ublk = u.reshape(chi, 4, keep)
    b_next = np.zeros((keep, m), dtype=complex)
    for a in range(4):
        contrib = ublk[:, a, :].conj().T @ b
        shift = TABLE_SHIFTS[a]
        if shift == 1:
            contrib = contrib * z
        elif shift == -1:
            contrib = contrib * z.conj()
        b_next += contrib
    core = u.reshape(chi, 4, keep)
    return core, s, b_next, discarded


def compress_streaming(batch: RealizationBatch, n: int, tau: float,
                       policy: TruncationPolicy,
                       exact_svd: bool | None = None) -> SeLayerChain:
    """Single left-to-right compression sweep holding O((chi + D) M) numbers.

    ``exact_svd=None`` picks the QR-SVD backend for batches up to
    EXACT_SVD_MAX_BATCH and the Gram backend above that.
    """
    raw = build_se_layer(batch, n, tau)
    if exact_svd is None:
        exact_svd = batch.m <= EXACT_SVD_MAX_BATCH
    z = np.exp(2j * tau * batch.values)
    table = raw.phase_table() if exact_svd else None
    m = batch.m
    chain = SeLayerChain(cores=[], spectra=[], closures=[], discarded=[],
                         tau=tau, spec=batch.spec, m=m, seed=batch.seed,
                         exact=exact_svd)
    b = np.full((1, m), 1.0 / m, dtype=complex)
    for _ in range(n):
        if exact_svd:
            core, s, b, disc = _step_exact(b, table, policy)
        else:
            core, s, b, disc = _step_gram(b, z, policy)
        chain.cores.append(core)
        chain.spectra.append(s)
        chain.discarded.append(disc)
        chain.closures.append(b.sum(axis=1))
    return chain


def compress_naive(batch: RealizationBatch, n: int, tau: float,
                   policy: TruncationPolicy) -> SeLayerChain:
    """Reference compression holding every bond-M step core in memory.

    Same sweep as :func:`compress_streaming` but with all per-step phase
    tables precomputed and each step factorized by a direct LAPACK SVD of
    the materialized matrix; serves as the streaming path's oracle.
    """
    if n > 64:
        raise ValueError("naive compression is a small-n oracle (n <= 64)")
    raw = build_se_layer(batch, n, tau)
    tables = [raw.phase_table() for _ in range(n)]  # identical cores, held anyway
    m = batch.m
    chain = SeLayerChain(cores=[], spectra=[], closures=[], discarded=[],
                         tau=tau, spec=batch.spec, m=m, seed=batch.seed,
                         exact=True)
    b = np.full((1, m), 1.0 / m, dtype=complex)
    for p in range(n):
        chi = b.shape[0]
        t = (b[:, None, :] * tables[p][None, :, :]).reshape(4 * chi, m)
        u, s, vh = np.linalg.svd(t, full_matrices=False)
        total = float(np.sum(s**2))
        keep, disc = _truncate_spectrum(s, total, policy)
        b = s[:keep, None] * vh[:keep]
        chain.cores.append(u[:, :keep].reshape(chi, 4, keep))
        chain.spectra.append(s)
        chain.discarded.append(disc)
        chain.closures.append(b.sum(axis=1))
    return chain


@dataclass
class SpectrumSeries:
    """Squared singular-value ratios (S_i/S_0)^2 per compression step."""

    times: np.ndarray
    ratios: list[np.ndarray]
    alpha: float
    tau: float
    meta: dict = field(default_factory=dict)


def spectrum_series(chain: SeLayerChain) -> SpectrumSeries:
    """Per-step squared ratios at t = p tau, roundoff-clamped and descending."""
    times = chain.tau * np.arange(1, chain.n + 1)
    ratios = []
    for s in chain.spectra:
        s = clamp_spectrum(np.asarray(s))
        s = s[s > 0]
        ratios.append((s / s[0]) ** 2)
    return SpectrumSeries(times=times, ratios=ratios, alpha=chain.spec.strength,
                          tau=chain.tau,
                          meta={"m": chain.m, "seed": chain.seed})


# Scaling fits -------------------------------------------------------------

PERTURBATIVE_WINDOW = 0.05  # fits restricted to alpha^2 tau t at or below this


def _fit_points(series: SpectrumSeries, i: int, floor: float = 1e-14):
    """(x, ratio_i) pairs inside the perturbative window, above roundoff."""
    xs, ys = [], []
    for t, r in zip(series.times, series.ratios):
        x = series.alpha**2 * series.tau * t
        if x <= 0 or x > PERTURBATIVE_WINDOW:
            continue
        if len(r) > i and r[i] > floor:
            xs.append(x)
            ys.append(r[i])
    return np.asarray(xs), np.asarray(ys)


def fit_scaling_coefficients(series: SpectrumSeries, imax: int = 7,
                             floor: float = 1e-14):
    """Least-squares coefficients c_i of ratio_i ~ c_i x^i, x = alpha^2 tau t.

    For each i the fit regresses log(ratio_i) against the fixed-slope
    regressor i*log(x): c_i is the exponentiated mean offset and the
    residual is the rms of the remaining log deviation.  Entries with
    fewer than two usable points are returned as NaN.
    """
    coeffs = np.full(imax, np.nan)
    residuals = np.full(imax, np.nan)
    for i in range(1, imax + 1):
        x, y = _fit_points(series, i, floor)
        if x.size < 2:
            continue
        logc = np.log(y) - i * np.log(x)
        coeffs[i - 1] = np.exp(np.mean(logc))
        residuals[i - 1] = float(np.std(logc))
    return coeffs, residuals


def loglog_slopes(series: SpectrumSeries, imax: int = 4, floor: float = 1e-14):
    """Free-slope log-log regression of ratio_i against x, per i."""
    slopes = np.full(imax, np.nan)
    for i in range(1, imax + 1):
        x, y = _fit_points(series, i, floor)
        if x.size < 3:
            continue
        slopes[i - 1] = np.polyfit(np.log(x), np.log(y), 1)[0]
    return slopes


def predicted_ratios(n: int, alpha: float, tau: float):
    """Perturbative (r2, r3) eigenvalue ratios after n+1 averaging steps.

    Closed forms from fourth-order perturbation theory in alpha*tau; outside
    the window alpha^2 tau (n+1) tau << 1 a warning flag is attached.
    """
    a2t2 = alpha**2 * tau**2
    e1 = 1.0 - (2.0 * (n + 1) / 3.0) * a2t2 \
        + ((38.0 * n**2 + 43.0 * n + 20.0) / 45.0) * a2t2**2
    e2 = (2.0 * (n + 1) / 3.0) * a2t2 \
        - (4.0 * (n + 1) * (3.0 * n + 2.0) / 15.0) * a2t2**2
    e3 = (4.0 * (n + 1) * (2.0 * n + 1.0) / 45.0) * a2t2**2
    in_window = alpha**2 * tau * (n + 1) * tau < 0.1
    return e2 / e1, e3 / e1, in_window


def encoding_criterion(n: int, alpha: float, t: float, margin: float = 100.0):
    """Temporal-resolution margin n / (alpha^2 t^2) with a pass flag."""
    denom = alpha**2 * t**2
    ratio = np.inf if denom == 0 else n / denom
    return ratio, bool(ratio >= margin)
