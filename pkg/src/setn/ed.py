"""Exact dense references: Hamiltonians, propagators, SFF, level statistics.

Basis convention: z-product states indexed with site 0 as the most
significant bit, bit value 0 carrying eigenvalue +1.  Open boundaries (the
coupling sum runs over neighboring pairs only).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderSpec, task_seeds
from .model import ModelParams, _site_eigs, trotter_step_dense
from .series import SffSeries

MAX_SITES = 16


@dataclass
class DenseHamiltonian:
    matrix: np.ndarray
    params: ModelParams
    fields: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_hamiltonian(params: ModelParams, h) -> DenseHamiltonian:
    """Dense H[h] = J sum sz sz + b sum sx + sum h_i sz_i, open chain."""
    el = params.sites
    if el > MAX_SITES:
        raise ValueError(f"dense Hamiltonian limited to {MAX_SITES} sites")
    h = np.asarray(h, dtype=float)
    if h.shape != (el,):
        raise ValueError(f"need {el} field values, got shape {h.shape}")
    dim = 2**el
    es = _site_eigs(el)
    diag = params.j * np.einsum("di,di->d", es[:, :-1], es[:, 1:]) + es @ h
    mat = np.zeros((dim, dim))
    mat[np.arange(dim), np.arange(dim)] = diag
    idx = np.arange(dim)
    for i in range(el):
        flipped = idx ^ (1 << (el - 1 - i))
        mat[idx, flipped] += params.b
    return DenseHamiltonian(matrix=mat, params=params, fields=h)


def spectrum(ham: DenseHamiltonian) -> np.ndarray:
    return np.linalg.eigvalsh(ham.matrix)


def sff_from_spectrum(energies: np.ndarray, times: np.ndarray) -> np.ndarray:
    """|sum_k exp(-i E_k t)|^2 on the grid; one diagonalization serves all t."""
    phases = np.exp(-1j * np.outer(times, energies))
    tr = phases.sum(axis=1)
    return np.abs(tr) ** 2


def sff_single(ham: DenseHamiltonian, times) -> np.ndarray:
    return sff_from_spectrum(spectrum(ham), np.asarray(times, dtype=float))


def _field_realization(spec: DisorderSpec, el: int, ss: np.random.SeedSequence):
    rng = np.random.default_rng(ss)
    if spec.kind == "uniform":
        return rng.uniform(-spec.strength, spec.strength, el)
    return rng.normal(0.0, spec.strength, el)


def sff_averaged(params: ModelParams, times, m: int, seed: int,
                 workers: int = 1) -> SffSeries:
    """Disorder-averaged SFF over ``m`` exact diagonalizations.

    Realization fields come from independent child streams of ``seed``, so
    the result is identical for any worker count; the mean accumulates in
    realization order.
    """
    times = np.asarray(times, dtype=float)
    seeds = task_seeds(seed, m)
    if workers > 1:
        values = _averaged_parallel(params, times, seeds, workers)
    else:
        values = np.empty((m, times.size))
        for i, ss in enumerate(seeds):
            h = _field_realization(params.spec, params.sites, ss)
            values[i] = sff_single(build_hamiltonian(params, h), times)
    mean = values.mean(axis=0)
    sem = values.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    return SffSeries(times=times, values=mean, sites=params.sites,
                     realizations=m, method="ed", stderr=sem,
                     meta={"seed": seed})


def _one_realization(args):
    params, times, ss = args
    h = _field_realization(params.spec, params.sites, ss)
    return sff_single(build_hamiltonian(params, h), times)


def _averaged_parallel(params, times, seeds, workers):
    import concurrent.futures

    jobs = [(params, times, ss) for ss in seeds]
    values = np.empty((len(seeds), times.size))
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
        for i, row in enumerate(ex.map(_one_realization, jobs, chunksize=8)):
            values[i] = row
    return values


def sff_quadrature_l4(params: ModelParams, times, nodes_per_dim: int = 24) -> SffSeries:
    """Tensor-product Gauss-Legendre average of the L=4 exact SFF.

    Integrates |Tr exp(-i H[h] t)|^2 over the uniform field cube
    [-alpha, alpha]^4 with one 16x16 diagonalization per node; convergence
    should be confirmed by doubling ``nodes_per_dim``.
    """
    if params.sites != 4:
        raise ValueError("quadrature oracle is specific to 4 sites")
    if params.spec.kind != "uniform":
        raise ValueError("quadrature oracle integrates the uniform cube")
    if nodes_per_dim < 2:
        raise ValueError("need at least 2 nodes per dimension")
    times = np.asarray(times, dtype=float)
    alpha = params.spec.strength
    x, w = np.polynomial.legendre.leggauss(nodes_per_dim)
    x = alpha * x
    w = w / 2.0  # normalized weight on [-alpha, alpha]
    nodes = np.stack(np.meshgrid(x, x, x, x, indexing="ij"), axis=-1).reshape(-1, 4)
    weights = (w[:, None, None, None] * w[None, :, None, None]
               * w[None, None, :, None] * w[None, None, None, :]).reshape(-1)
    el = 4
    dim = 2**el
    es = _site_eigs(el)
    zz = params.j * np.einsum("di,di->d", es[:, :-1], es[:, 1:])
    base = np.zeros((dim, dim))
    idx = np.arange(dim)
    for i in range(el):
        base[idx, idx ^ (1 << (el - 1 - i))] += params.b
    values = np.zeros(times.size)
    chunk = 4096
    for lo in range(0, nodes.shape[0], chunk):
        hs = nodes[lo : lo + chunk]
        ws = weights[lo : lo + chunk]
        mats = np.broadcast_to(base, (hs.shape[0], dim, dim)).copy()
        diags = zz[None, :] + hs @ es.T
        mats[:, idx, idx] += diags
        energies = np.linalg.eigvalsh(mats)
        phases = np.exp(-1j * energies[:, None, :] * times[None, :, None])
        tr2 = np.abs(phases.sum(axis=2)) ** 2
        values += ws @ tr2
    return SffSeries(times=times, values=values, sites=4, realizations=nodes.shape[0],
                     method="quadrature", stderr=None,
                     meta={"nodes_per_dim": nodes_per_dim})


def sff_trotter(params: ModelParams, h, steps) -> np.ndarray:
    """|Tr (U_step)^n|^2 for each step count in ``steps`` at fixed fields.

    The one-step propagator is unitary, so its eigenphases give every power
    from a single dense diagonalization.
    """
    if params.sites > 10:
        raise ValueError("dense Trotter propagator limited to 10 sites")
    u = trotter_step_dense(params, np.asarray(h, dtype=float))
    mu = np.linalg.eigvals(u)
    theta = np.angle(mu)  # unit modulus up to roundoff
    out = np.empty(len(steps))
    for k, n in enumerate(steps):
        out[k] = np.abs(np.exp(1j * theta * n).sum()) ** 2
    return out


def sff_trotter_product_average(params: ModelParams, batch_values: np.ndarray,
                                steps) -> np.ndarray:
    """Trotter SFF averaged over per-site-independent fields from a batch.

    Evaluates the product-measure average exactly (every site's field is
    averaged over the batch independently, matching the statistics-layer
    factorization) by composing per-site time columns: the single-layer
    column of site i at field h is a matrix over the spatial-bond path
    space, K is the doubled chain contraction of their batch means.
    Independent of the tensor-network code paths; serves as the same-batch
    oracle for the network SFF.
    """
    steps = list(steps)
    nmax = max(steps)
    if nmax > 8:
        raise ValueError("product-measure oracle limited to n <= 8")
    m = len(batch_values)
    dim = 2**nmax
    el = params.sites
    # per-realization traced columns for every prefix length
    w_first = {n: np.empty((m, 2**n), dtype=complex) for n in steps}
    w_last = {n: np.empty((m, 2**n), dtype=complex) for n in steps}
    g_bulk = {n: np.empty((m, 2**n, 2**n), dtype=complex) for n in steps} if el > 2 else {}
    for j, h in enumerate(batch_values):
        cols = _prefix_columns(params, float(h), nmax, steps)
        for n in steps:
            first, bulk, last = cols[n]
            w_first[n][j] = first
            w_last[n][j] = last
            if el > 2:
                g_bulk[n][j] = bulk
    out = np.empty(len(steps))
    for k, n in enumerate(steps):
        e1 = w_first[n].T @ w_first[n].conj() / m      # (c, c') mean outer
        el_mat = w_last[n].T @ w_last[n].conj() / m
        x = e1
        for _ in range(el - 2):
            g = g_bulk[n]
            acc = np.zeros_like(x)
            for lo in range(0, m, 64):
                gc = g[lo : lo + 64]
                acc += (gc.transpose(0, 2, 1) @ x @ gc.conj()).sum(axis=0)
            x = acc / m
        out[k] = float(np.einsum("ab,ab->", x, el_mat).real)
    return out


def _prefix_columns(params: ModelParams, h: float, nmax: int, steps):
    """Traced per-site columns (first/bulk/last variants) for each prefix."""
    from .disorder import phase_vector
    from .model import build_gates

    gates = build_gates(params)
    v = phase_vector(h, params.tau)
    # step tensors (j_in, j_out, bonds...): bulk (a, c), first (c,), last (a,)
    mb = np.zeros((2, 2, 2, 2), dtype=complex)
    mf = np.zeros((2, 2, 2), dtype=complex)
    ml = np.zeros((2, 2, 2), dtype=complex)
    for ji in range(2):
        for jo in range(2):
            amp = gates.u2[jo, ji] * v[ji]
            for a in range(2):
                mb[ji, jo, a, jo] = gates.u1[a, jo] * amp
                ml[ji, jo, a] = gates.u1[a, jo] * amp
            mf[ji, jo, jo] = amp
    out = {}
    accb, accf, accl = mb, mf, ml
    wanted = set(steps)
    for n in range(1, nmax + 1):
        if n in wanted:
            first = np.trace(accf.reshape(2, 2, -1), axis1=0, axis2=1)
            bulk = np.trace(accb, axis1=0, axis2=1)
            last = np.trace(accl.reshape(2, 2, -1), axis1=0, axis2=1)
            out[n] = (first, bulk, last)
        if n < nmax:
            accb = _compose(accb, mb)
            accf = _compose(accf, mf)
            accl = _compose(accl, ml)
    return out


def _compose(acc, step):
    """Chain two time-column tensors over the shared time index."""
    if acc.ndim == 3:
        new = np.einsum("ioa,oPc->iPac", acc, step)
        return new.reshape(2, 2, -1)
    new = np.einsum("ioab,oPcd->iPacbd", acc, step)
    return new.reshape(2, 2, acc.shape[2] * step.shape[2], acc.shape[3] * step.shape[3])


def level_spacing_ratio(energies: np.ndarray) -> tuple[float, int]:
    """Mean of min(r, 1/r) over consecutive gap ratios of a sorted spectrum.

    Returns ``(mean_ratio, skipped)`` where ``skipped`` counts degenerate
    consecutive gaps left out of the mean.
    """
    e = np.sort(np.asarray(energies, dtype=float))
    if e.size < 3:
        raise ValueError("need at least 3 levels")
    gaps = np.diff(e)
    num, den = gaps[1:], gaps[:-1]
    good = (num > 0) & (den > 0)
    r = num[good] / den[good]
    ratios = np.minimum(r, 1.0 / r)
    skipped = int(np.count_nonzero(~good))
    if ratios.size == 0:
        raise ValueError("all gaps degenerate")
    return float(ratios.mean()), skipped


def mean_level_spacing_ratio(params: ModelParams, m: int, seed: int) -> float:
    """Disorder-averaged level-spacing ratio over ``m`` realizations."""
    seeds = task_seeds(seed, m)
    acc = 0.0
    for ss in seeds:
        h = _field_realization(params.spec, params.sites, ss)
        acc += level_spacing_ratio(spectrum(build_hamiltonian(params, h)))[0]
    return acc / m


def goe_sff_reference(t: float, d: float) -> float:
    """Random-matrix ramp-plateau curve for Hilbert-space dimension ``d``."""
    if t < 0 or d < 1:
        raise ValueError("need t >= 0 and d >= 1")
    if t == 0:
        return 0.0
    if t <= d:
        return 2.0 * t - t * np.log1p(2.0 * t / d)
    x = 2.0 * t / d
    return 2.0 * d - t * np.log((x + 1.0) / (x - 1.0))
