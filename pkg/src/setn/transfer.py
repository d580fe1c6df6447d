"""Disorder-averaged spatial transfer matrix and finite-chain network SFF.

Structure of one folded column (forward layer x conjugate layer) after the
delta factorization of the diagonal coupling: with output pair index
``q = (c'_p, c_p)`` (the spatial bonds emitted to the right) and input pair
``(a'_p, a_p)``, the matrix element of the column operator is

    T[q-config; a-config] = prod_p u1[a_p,c_p] conj(u1)[a'_p,c'_p]
                            * u2[c_p,c_{p-1}] conj(u2)[c'_p,c'_{p-1}]
                            * Chain[(c'_0 c_0), ..., (c'_{n-1} c_{n-1})]

with the time trace closing ``c_0 = c_n``.  The per-step statistics core
couples to the *previous* step's output pair, so the column MPO carries a
(previous-pair, statistics-bond) composite bond of dimension ``4 chi_s``,
and the time trace appears as a 4-dimensional seam.  Applies sweep right to
left, which lets the previous-pair requirement be consumed locally; the
seam ends up as a pair of dangling boundary legs (``ring_dims``) that are
traced only in final scalar contractions (or folded back into the bonds by
``close_ring`` for short chains, e.g. Krylov vectors).

Dense-vector code paths recompute everything from the closed-form matrix
element above and serve as the independent oracle for the MPS paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg

from . import tmps
from .model import GateSet, ModelParams, build_gates
from .selayer import SeLayerChain
from .tensor import TruncationPolicy

DENSE_MATRIX_MAX_STEPS = 5   # full (4^n x 4^n) materialization guard
DENSE_VECTOR_MAX_STEPS = 9   # dense matvec guard (4^n workspace)


class KrylovConvergenceError(RuntimeError):
    """Raised when the restarted iteration stalls; carries the best result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class EigResult:
    """Eigenvalues sorted by descending magnitude with residual certificates."""

    eigenvalues: np.ndarray
    residuals: np.ndarray
    method: str
    converged: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def leading(self) -> complex:
        return complex(self.eigenvalues[0])


@dataclass
class TransferOperator:
    """Implicit transfer matrix of one folded bulk column.

    ``dim = 4^n`` is never materialized beyond ``n <= 5``; applies go
    through the structured column.  ``policy`` governs boundary-state
    truncation in MPS mode.
    """

    chain: SeLayerChain
    gates: GateSet
    n: int
    policy: TruncationPolicy = TruncationPolicy()

    def __post_init__(self):
        if self.n > self.chain.n:
            raise ValueError(f"chain holds {self.chain.n} steps, need {self.n}")
        self.net_cores = self.chain.network_cores(self.n)
        u1, u2 = self.gates.u1, self.gates.u2
        self.q_u1 = np.kron(u1.conj().T, u1.T)      # phys map (a-pair -> c-pair)
        self.u2pair = np.kron(u2.conj(), u2)        # rows c-pair, cols prev-pair
        # W[p][g, q, b, b']: shift factor times statistics core
        self.w = [np.einsum("qg,bgB->gqbB", self.u2pair, c) for c in self.net_cores]

    @property
    def dim(self) -> int:
        return 4**self.n


def make_transfer(params: ModelParams, chain: SeLayerChain,
                  policy: TruncationPolicy | None = None,
                  n: int | None = None) -> TransferOperator:
    return TransferOperator(chain=chain, gates=build_gates(params),
                            n=params.n if n is None else n,
                            policy=policy or TruncationPolicy())


# Dense oracle path ---------------------------------------------------------

def _digit_fields(n: int):
    """Base-4 digit arrays of every config index; site 1 is most significant."""
    idx = np.arange(4**n, dtype=np.int64)
    digits = [(idx >> (2 * (n - 1 - p))) & 3 for p in range(n)]
    return idx, digits


def _dense_shift_field(op: TransferOperator) -> np.ndarray:
    """D[q-config] = sum over the seam of the u2 chain times the statistics
    tensor evaluated on the shifted config (the diagonal part of T)."""
    n = op.n
    if n > 10:
        raise ValueError("dense shift field limited to n <= 10")
    _, digits = _digit_fields(n)
    c = [d & 1 for d in digits]
    cp = [d >> 1 for d in digits]
    u2 = op.gates.u2
    out = np.ones(4**n, dtype=complex)
    for p in range(n):
        prev = p - 1 if p > 0 else n - 1  # c_0 = c_n seam
        out = out * u2[c[p], c[prev]] * u2[cp[p], cp[prev]].conj()
    # statistics tensor at l_p = c_{p-1}: row bits primed, col bits unprimed
    o_dense = op.chain.contract_dense(op.n)
    row = np.zeros(4**n, dtype=np.int64)
    col = np.zeros(4**n, dtype=np.int64)
    for p in range(n):
        prev = p - 1 if p > 0 else n - 1
        row |= cp[prev].astype(np.int64) << (n - 1 - p)
        col |= c[prev].astype(np.int64) << (n - 1 - p)
    return out * o_dense[row, col]


def apply_transfer_dense(op: TransferOperator, x: np.ndarray) -> np.ndarray:
    """Dense matvec y = T x on a 4^n vector (oracle path)."""
    n = op.n
    if n > DENSE_VECTOR_MAX_STEPS:
        raise ValueError(f"dense apply limited to n <= {DENSE_VECTOR_MAX_STEPS}")
    x = np.asarray(x, dtype=complex)
    if x.size != 4**n:
        raise ValueError(f"vector has size {x.size}, expected {4**n}")
    t = x.reshape((4,) * n)
    for p in range(n):
        t = np.tensordot(op.q_u1, t, axes=[[1], [p]])
        t = np.moveaxis(t, 0, p)
    y = t.reshape(-1)
    if not hasattr(op, "_shift_field"):
        op._shift_field = _dense_shift_field(op)
    return op._shift_field * y


def dense_transfer(op: TransferOperator) -> np.ndarray:
    """Full transfer matrix for n <= 5 (oracle for the eigensolvers)."""
    n = op.n
    if n > DENSE_MATRIX_MAX_STEPS:
        raise ValueError(f"dense transfer limited to n <= {DENSE_MATRIX_MAX_STEPS}")
    big = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        big = np.kron(big, op.q_u1)
    if not hasattr(op, "_shift_field"):
        op._shift_field = _dense_shift_field(op)
    return op._shift_field[:, None] * big


# MPS path ------------------------------------------------------------------

def _apply_u1_stage(op: TransferOperator, x: tmps.Mps) -> list[np.ndarray]:
    return [np.moveaxis(np.tensordot(op.q_u1, c, axes=[[1], [1]]), 0, 1)
            for c in x.cores]


def apply_transfer_mps(op: TransferOperator, x: tmps.Mps,
                       close: bool = True,
                       exact_svd: bool = False) -> tuple[tmps.Mps, float]:
    """y = T x by a right-to-left zip sweep with on-the-fly truncation.

    Returns ``(y, discarded_weight)``.  With ``close=False`` the time-trace
    seam is left as a dangling boundary pair recorded in ``ring_dims``
    (cheap for long chains; trace it in the final contraction).  With
    ``close=True`` the seam is folded back into the bonds and the state is
    recompressed, leaving an ordinary MPS.
    """
    n = op.n
    if x.n != n:
        raise ValueError(f"state has {x.n} sites, operator expects {n}")
    xt = _apply_u1_stage(op, x)
    bl, br = x.cores[0].shape[0], x.cores[-1].shape[2]
    policy = op.policy
    # carried matrix C[k, (xbond, g, b)]; init pairs the seam dangler with g_n
    c = np.einsum("ts,xy,bB->txysB", np.eye(4), np.eye(br),
                  np.ones((1, 1))).astype(complex)
    c = c.reshape(4 * br, br * 4 * 1)
    out_cores: list[np.ndarray] = [None] * n
    dropped = 0.0
    total0 = None
    for p in range(n - 1, -1, -1):
        w = op.w[p]  # (g_new, q, b, b_old)
        xc = xt[p]   # (xa, q, xb)
        kdim = c.shape[0]
        xb = xc.shape[2]
        bold = w.shape[3]
        cr = c.reshape(kdim, xb, 4, bold)
        m = np.einsum("aqx,gqbB,kxqB->qkagb", xc, w, cr, optimize=True)
        qd, kd, xa, gd, bd = m.shape
        m = m.reshape(qd * kd, xa * gd * bd)
        if p == 0:
            # fold the leftover boundary (xa, g0) into the output's first core
            core = m.reshape(qd, kd, xa, gd)
            core = core.transpose(3, 2, 0, 1).reshape(gd * xa, qd, kd)
            out_cores[0] = core
            if total0 is None:
                total0 = float(np.sum(np.abs(m) ** 2))
            break
        u, carried, drop, total = tmps._truncate_rows(m, policy, exact=exact_svd)
        if total0 is None:
            total0 = total
        dropped += drop
        k2 = u.shape[1]
        out_cores[p] = u.reshape(qd, kd, k2).transpose(2, 0, 1)
        c = carried
    y = tmps.Mps(out_cores, ring_dims=(4,) + x.ring_dims)
    rel = dropped / total0 if total0 and total0 > 0 else 0.0
    if close:
        y = tmps.close_ring(y)
        y, extra = tmps.compress(y, policy, exact=exact_svd)
        rel += extra
    return y, float(rel)


def edge_column_mps(op: TransferOperator, side: str) -> tmps.Mps:
    """Boundary column as a ring-open MPS.

    ``side='first'`` gives the column with no incoming bond (its state lives
    on the pairs it emits); ``side='last'`` gives the final column as a
    functional on incoming pairs (u1 factors included, outgoing bonds
    absent).
    """
    n = op.n
    cores = []
    for p in range(n):
        core = op.net_cores[p]
        chi_l, _, chi_r = core.shape
        w = np.einsum("qg,bgB->gbqB", op.u2pair, core)  # (g, b, q, B)
        if side == "last":
            # physical leg becomes the incoming a-pair via the u1 map; the
            # emitted pair q rides out on the bond (no delta needed)
            w = np.einsum("gbqB,qa->gbaqB", w, op.q_u1)
            cores.append(w.reshape(4 * chi_l, 4, 4 * chi_r))
        else:
            blk = np.zeros((4, chi_l, 4, 4, chi_r), dtype=complex)
            for q in range(4):
                blk[:, :, q, q, :] = w[:, :, q, :]
            cores.append(blk.reshape(4 * chi_l, 4, 4 * chi_r))
    return tmps.Mps(cores, ring_dims=(4,))


def sff_via_network(params: ModelParams, chain: SeLayerChain,
                    policy: TruncationPolicy | None = None,
                    times_steps: list[int] | None = None,
                    weight_warn: float = 1e-6,
                    exact_svd: bool = False):
    """Spectral form factor of the open chain from the folded network.

    Contracts column by column in the space direction, holding the boundary
    as a time-direction MPS; every number of Trotter steps in
    ``times_steps`` (default: every step up to ``params.n``) yields one
    K(t) value at t = steps * tau.  Returns ``(times, values, info)`` where
    ``info`` carries the accumulated discarded weight per point and an
    accuracy warning flag.
    """
    from .series import SffSeries

    policy = policy or TruncationPolicy()
    if params.sites < 2:
        raise ValueError("need at least 2 sites")
    steps_list = list(times_steps) if times_steps is not None else list(range(1, params.n + 1))
    times = np.array([s * params.tau for s in steps_list])
    values = np.zeros(len(steps_list))
    weights = np.zeros(len(steps_list))
    warned = False
    for i, n in enumerate(steps_list):
        op = make_transfer(params, chain, policy, n=n)
        e_first = edge_column_mps(op, "first")
        e_last = edge_column_mps(op, "last")
        e_first, w0 = tmps.compress(e_first, policy, exact=exact_svd)
        e_last, w1 = tmps.compress(e_last, policy, exact=exact_svd)
        acc = w0 + w1
        y = e_first
        for _ in range(params.sites - 2):
            y, w = apply_transfer_mps(op, y, close=False, exact_svd=exact_svd)
            y, wc = tmps.compress(y, policy, exact=exact_svd)
            acc += w + wc
        k = tmps.overlap(e_last, y, conj_x=False)
        if abs(k.imag) > 1e-6 * max(1.0, abs(k.real)):
            warned = True
        kv = k.real
        if kv < -1e-8:
            warned = True
        values[i] = max(kv, 0.0)
        weights[i] = acc
        if acc > weight_warn:
            warned = True
    info = {"discarded": weights, "warning": warned, "m": chain.m,
            "threshold": policy.rel_threshold}
    return SffSeries(times=times, values=values, sites=params.sites,
                     realizations=chain.m, method="setn", stderr=None,
                     meta=info)


# Eigensolvers ---------------------------------------------------------------

class _DenseWork:
    """Vector workspace for the Arnoldi driver: dense 4^n arrays."""

    def __init__(self, op: TransferOperator, seed: int):
        self.op = op
        self.rng = np.random.default_rng(np.random.SeedSequence(seed))

    def start(self):
        n = self.op.dim
        return self.rng.standard_normal(n) + 1j * self.rng.standard_normal(n)

    def matvec(self, x):
        return apply_transfer_dense(self.op, x)

    def inner(self, x, y):
        return complex(np.vdot(x, y))

    def norm(self, x):
        return float(np.linalg.norm(x))

    def combine(self, vecs, coeffs):
        out = coeffs[0] * vecs[0]
        for c, v in zip(coeffs[1:], vecs[1:]):
            out = out + c * v
        return out

    def scale(self, x, a):
        return a * x


class _MpsWork:
    """Vector workspace for the Arnoldi driver: compressed MPS vectors."""

    def __init__(self, op: TransferOperator, seed: int, chi_max: int,
                 exact_svd: bool = False):
        self.op = op
        self.seed = seed
        self.chi = chi_max
        self.exact = exact_svd
        self.policy = TruncationPolicy(rel_threshold=op.policy.rel_threshold,
                                       max_rank=chi_max)
        self._apply_op = TransferOperator(chain=op.chain, gates=op.gates,
                                          n=op.n, policy=self.policy)

    def start(self):
        return tmps.random_mps(self.op.n, 4, min(4, self.chi), self.seed)

    def matvec(self, x):
        y, _ = apply_transfer_mps(self._apply_op, x, close=True,
                                  exact_svd=self.exact)
        return y

    def inner(self, x, y):
        return tmps.overlap(x, y, conj_x=True)

    def norm(self, x):
        return tmps.norm(x)

    def combine(self, vecs, coeffs):
        return tmps.combine_compressed(list(vecs), list(coeffs), self.chi)

    def scale(self, x, a):
        return x.scale(a)


def _ritz_sorted(h):
    evals, evecs = np.linalg.eig(h)
    order = np.argsort(-np.abs(evals))
    return evals[order], evecs[:, order]


def leading_eigs_krylov(op: TransferOperator, k: int = 2, tol: float = 1e-8,
                        max_basis: int = 30, seed: int = 0,
                        max_restarts: int = 6, chi_max: int = 64,
                        mode: str | None = None) -> EigResult:
    """Dominant eigenvalues by restarted Arnoldi iteration.

    Boundary vectors are dense for small step counts and bond-capped MPS
    beyond that (``chi_max``).  Every reported eigenvalue carries a residual
    certified by one extra operator application; non-convergence raises
    :class:`KrylovConvergenceError` with the best result attached.
    """
    if mode is None:
        mode = "dense" if op.n <= DENSE_VECTOR_MAX_STEPS else "mps"
    work = _DenseWork(op, seed) if mode == "dense" else _MpsWork(op, seed, chi_max)
    v0 = work.start()
    nrm = work.norm(v0)
    basis = [work.scale(v0, 1.0 / nrm)]
    h = np.zeros((max_basis + 1, max_basis), dtype=complex)
    j = 0
    best: EigResult | None = None
    matvecs = 0
    for restart in range(max_restarts + 1):
        breakdown = False
        while j < max_basis:
            w = work.matvec(basis[j])
            matvecs += 1
            c1 = np.array([work.inner(vi, w) for vi in basis[: j + 1]])
            w = work.combine([w] + basis[: j + 1], [1.0] + list(-c1))
            c2 = np.array([work.inner(vi, w) for vi in basis[: j + 1]])
            w = work.combine([w] + basis[: j + 1], [1.0] + list(-c2))
            h[: j + 1, j] = c1 + c2
            beta = work.norm(w)
            h[j + 1, j] = beta
            j += 1
            scale = np.abs(np.diag(h[:j, :j])).max() + 1e-300
            if beta <= 1e-13 * scale:
                breakdown = True
                break
            basis.append(work.scale(w, 1.0 / beta))
            if j >= max(k + 2, 4) or j == max_basis:
                evals, evecs = _ritz_sorted(h[:j, :j])
                kk = min(k, j)
                est = np.abs(h[j, j - 1]) * np.abs(evecs[-1, :kk])
                if np.all(est <= tol * np.maximum(np.abs(evals[:kk]), 1e-300)):
                    break
        evals, evecs = _ritz_sorted(h[:j, :j])
        kk = min(k, j)
        lams = np.empty(kk, dtype=complex)
        residuals = np.empty(kk)
        for i in range(kk):
            x = work.combine(basis[:j], list(evecs[:j, i]))
            xn = work.norm(x)
            x = work.scale(x, 1.0 / xn)
            tx = work.matvec(x)
            matvecs += 1
            lam = work.inner(x, tx)
            nrm2 = work.inner(tx, tx).real - abs(lam) ** 2
            residuals[i] = float(np.sqrt(max(nrm2, 0.0)))
            lams[i] = lam
        order = np.argsort(-np.abs(lams))
        lams, residuals = lams[order], residuals[order]
        result = EigResult(eigenvalues=lams, residuals=residuals,
                           method=f"krylov-{mode}",
                           converged=bool(np.all(residuals <= tol * np.maximum(np.abs(lams), 1e-300))),
                           meta={"basis": j, "restarts": restart, "matvecs": matvecs,
                                 "seed": seed})
        if best is None or residuals.max() < best.residuals.max():
            best = result
        if result.converged or breakdown:
            return best
        # restart from a mix of the current top Ritz vectors
        mix = np.zeros(j, dtype=complex)
        for i in range(kk):
            mix += evecs[:j, i] / (i + 1.0)
        v0 = work.combine(basis[:j], list(mix))
        nrm = work.norm(v0)
        basis = [work.scale(v0, 1.0 / nrm)]
        h = np.zeros((max_basis + 1, max_basis), dtype=complex)
        j = 0
    raise KrylovConvergenceError(
        f"no convergence to tol={tol} after {max_restarts} restarts "
        f"(best residual {best.residuals.max():.3e})", result=best)


# Non-Hermitian DMRG with eigenvalue tracking --------------------------------

@dataclass
class DmrgState:
    """Variational MPS eigenstate with sweep history."""

    state: tmps.Mps
    chi_max: int
    eigenvalue: complex
    prev_eigenvalue: complex | None
    history: list = field(default_factory=list)


def _mpo_cores_full(op: TransferOperator) -> list[np.ndarray]:
    """Dense column-MPO cores (wl, phys_out, phys_in, wr), wl = 4 * chi_s."""
    cores = []
    for p in range(op.n):
        w = op.w[p]  # (g, q, b, B)
        g4, q4, b, bb = w.shape
        full = np.einsum("gqbB,qa->gbqaB", w, op.q_u1)
        core = np.zeros((4, b, 4, 4, 4, bb), dtype=complex)
        for q in range(4):
            core[:, :, q, :, q, :] = full[:, :, q, :, :]
        cores.append(core.reshape(4 * b, 4, 4, 4 * bb))
    return cores


def _track_candidate(cands: np.ndarray, lam_prev: complex | None) -> complex:
    """Tracking rule: nearest to the previous pick among candidates whose
    magnitude did not drop; ties broken by magnitude then real part."""
    cands = np.asarray(cands)
    if lam_prev is None:
        pool = cands
        dist = np.zeros(len(cands))
    else:
        ok = np.abs(cands) >= abs(lam_prev) * (1.0 - 1e-10)
        pool = cands[ok] if np.any(ok) else cands
        dist = np.abs(pool - lam_prev)
    dmin = dist.min()
    near = pool[dist <= dmin + 1e-12]
    order = sorted(range(len(near)),
                   key=lambda i: (-np.abs(near[i]), -near[i].real))
    return complex(near[order[0]])


def leading_eig_dmrg(op: TransferOperator, chi_d: int = 32, sweeps: int = 16,
                     tol: float = 1e-9, seed: int = 0,
                     k_candidates: int = 6) -> tuple[EigResult, DmrgState]:
    """Variational dominant eigenpair by two-site non-Hermitian sweeps.

    Each local update diagonalizes the effective operator by a dense solve
    (small blocks) or implicitly restarted Arnoldi, then keeps the candidate
    selected by the tracking rule, which stabilizes sweeping through nearly
    degenerate complex eigenvalues.  Non-convergence is reported in the
    result flag with the sweep history attached, not raised.
    """
    n = op.n
    if n == 1:
        t = dense_transfer(op) if n <= DENSE_MATRIX_MAX_STEPS else None
        evals, evecs = _ritz_sorted(t)
        x = tmps.Mps([evecs[:, 0].reshape(1, 4, 1)])
        res = EigResult(eigenvalues=evals[:1], residuals=np.zeros(1),
                        method="dmrg", converged=True, meta={"sweeps": 0})
        return res, DmrgState(x, chi_d, complex(evals[0]), None, [])
    policy = TruncationPolicy(rel_threshold=op.policy.rel_threshold, max_rank=chi_d)
    mpo = _mpo_cores_full(op)
    state, _ = tmps.compress(tmps.random_mps(n, 4, min(4, chi_d), seed), policy)
    cores = state.cores
    # right-canonicalize so the first left-to-right sweep sees a unit metric
    for p in range(n - 1, 0, -1):
        a, d, b = cores[p].shape
        q, r = np.linalg.qr(cores[p].reshape(a, d * b).conj().T, mode="reduced")
        cores[p] = q.conj().T.reshape(q.shape[1], d, b)
        cores[p - 1] = np.tensordot(cores[p - 1], r.conj().T, axes=[[2], [0]])
    cores[0] = cores[0] / np.linalg.norm(cores[0])
    wl0 = mpo[0].shape[0]
    wrn = mpo[-1].shape[3]
    lenv = [None] * (n + 1)
    renv = [None] * (n + 1)
    l0 = np.zeros((4, wl0, 1, 1), dtype=complex)
    for g in range(4):
        l0[g, g * (wl0 // 4)] = 1.0  # chain left bond is 1: (g, b=0)
    r0 = np.zeros((4, wrn, 1, 1), dtype=complex)
    for g in range(4):
        r0[g, g * (wrn // 4)] = 1.0
    lenv[0] = l0
    renv[n] = r0

    def _lstep(env, core, w):
        t = np.tensordot(env, core.conj(), axes=[[2], [0]])      # g,w,k, p,b'
        t = np.tensordot(t, w, axes=[[1, 3], [0, 1]])            # g,k,b', a,w'
        t = np.tensordot(t, core, axes=[[1, 3], [0, 1]])         # g,b',w', k'
        return t.transpose(0, 2, 1, 3)

    def _rstep(env, core, w):
        t = np.tensordot(core.conj(), env, axes=[[2], [2]])      # b,p, g,w,k
        t = np.tensordot(t, w, axes=[[1, 3], [1, 3]])            # b,g,k, w0,a
        t = np.tensordot(t, core, axes=[[4, 2], [1, 2]])         # b,g,w0, k0
        return t.transpose(1, 2, 0, 3)

    for p in range(n - 1, 1, -1):
        renv[p] = _rstep(renv[p + 1], cores[p], mpo[p])

    def _matvec(v, le, w1, w2, re, shape):
        v = v.reshape(shape)
        t = np.tensordot(v, le, axes=[[0], [3]])              # a1,a2,kr, g,w0,bl
        t = np.tensordot(t, w1, axes=[[0, 4], [2, 0]])        # a2,kr,g,bl, p1,w1
        t = np.tensordot(t, w2, axes=[[0, 5], [2, 0]])        # kr,g,bl,p1, p2,w2
        t = np.tensordot(t, re, axes=[[0, 1, 5], [3, 0, 1]])  # bl,p1,p2,br
        return t.reshape(-1)

    lam_prev: complex | None = None
    lam_sweep: complex | None = None
    history = []
    converged = False
    for sweep in range(sweeps):
        track = sweep > 0  # first sweep: always follow the largest magnitude
        for direction in (1, -1):
            sites = range(n - 1) if direction == 1 else range(n - 2, -1, -1)
            for p in sites:
                le, re = lenv[p], renv[p + 2]
                w1, w2 = mpo[p], mpo[p + 1]
                bl = cores[p].shape[0]
                br = cores[p + 1].shape[2]
                shape = (bl, 4, 4, br)
                dim = bl * 16 * br
                block = np.tensordot(cores[p], cores[p + 1], axes=[[2], [0]])
                v0 = block.reshape(-1)
                if dim <= 512 or dim <= k_candidates + 2:
                    dense = np.empty((dim, dim), dtype=complex)
                    eye = np.eye(dim, dtype=complex)
                    for col in range(dim):
                        dense[:, col] = _matvec(eye[:, col], le, w1, w2, re, shape)
                    evals, evecs = _ritz_sorted(dense)
                    kc = min(k_candidates, dim)
                    cands, vecs = evals[:kc], evecs[:, :kc]
                else:
                    lo = scipy.sparse.linalg.LinearOperator(
                        (dim, dim), matvec=lambda v: _matvec(v, le, w1, w2, re, shape),
                        dtype=complex)
                    kk = min(k_candidates, dim - 2)
                    cands, vecs = scipy.sparse.linalg.eigs(lo, k=kk, which="LM", v0=v0,
                                                           tol=min(1e-10, tol))
                lam = _track_candidate(cands, lam_prev if track else None)
                pick = int(np.argmin(np.abs(cands - lam)))
                lam_prev = lam
                vec = vecs[:, pick].reshape(bl * 4, 4 * br)
                vec /= np.linalg.norm(vec)
                res = svd_truncated_local(vec, policy)
                u, s, vh = res
                k = s.size
                if direction == 1:
                    cores[p] = u.reshape(bl, 4, k)
                    cores[p + 1] = (s[:, None] * vh).reshape(k, 4, br)
                    lenv[p + 1] = _lstep(lenv[p], cores[p], mpo[p])
                else:
                    cores[p] = (u * s[None, :]).reshape(bl, 4, k)
                    cores[p + 1] = vh.reshape(k, 4, br)
                    renv[p + 1] = _rstep(renv[p + 2], cores[p + 1], mpo[p + 1])
        history.append(lam_prev)
        if lam_sweep is not None and abs(lam_prev - lam_sweep) <= tol * abs(lam_prev):
            converged = True
            break
        lam_sweep = lam_prev
    # certify the residual with one full operator application
    x = tmps.Mps([c.copy() for c in cores])
    nx = tmps.norm(x)
    x = x.scale(1.0 / nx)
    tx, _ = apply_transfer_mps(op, x, close=True)
    lam = tmps.overlap(x, tx, conj_x=True)
    r2 = tmps.overlap(tx, tx, conj_x=True).real - abs(lam) ** 2
    residual = float(np.sqrt(max(r2, 0.0)))
    result = EigResult(eigenvalues=np.array([lam]), residuals=np.array([residual]),
                       method="dmrg", converged=converged,
                       meta={"sweeps": len(history), "history": history,
                             "chi": [c.shape[2] for c in cores[:-1]], "seed": seed})
    dstate = DmrgState(state=x, chi_max=chi_d, eigenvalue=complex(lam),
                       prev_eigenvalue=lam_sweep, history=history)
    return result, dstate


def svd_truncated_local(mat: np.ndarray, policy: TruncationPolicy):
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = max(policy.kept_rank(s), 1)
    return u[:, :keep], s[:keep], vh[:keep]
