"""Trotterized network of the disordered transverse-field Ising chain.

Hamiltonian: ``H[h] = J sum_i sz_i sz_{i+1} + b sum_i sx_i + sum_i h_i sz_i``
on an open chain (the zz sum runs over i = 1..L-1).

One Trotter step is the ordered product ``U_zz @ U_x @ U_h`` (the field layer
acts first), where ``U_zz = exp(-i tau J sum sz sz)`` and
``U_x = exp(-i tau b sum sx)`` are each exact products of commuting local
gates, so the step is first-order accurate in tau.  Inside a single-site
column of the network the same order appears as: disorder phase, on-site
x gate, then the diagonal zz half-gates attached to the two adjacent bonds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .disorder import DisorderSpec, phase_vector
from .tensor import TruncationPolicy, svd_truncated

SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
EIG = np.array([1.0, -1.0])  # z eigenvalue carried by basis index 0, 1


@dataclass(frozen=True)
class ModelParams:
    """Physical and discretization parameters of one network build."""

    j: float = 1.0
    b: float = 1.0
    spec: DisorderSpec = DisorderSpec()
    tau: float = 0.005
    n: int = 1
    sites: int = 2

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.n < 1:
            raise ValueError(f"step count must be >= 1, got {self.n}")
        if self.sites < 1:
            raise ValueError(f"site count must be >= 1, got {self.sites}")

    @property
    def t(self) -> float:
        return self.n * self.tau


@dataclass(frozen=True)
class GateSet:
    """Local gates of one Trotter step plus their network factorizations.

    ``vl @ vr`` (contracted over the rank index) reconstructs the two-site
    zz gate split across the spatial bond; ``u1`` is the same gate reduced
    to its time-direction form ``u1[k, k'] = exp(-i tau J e(k) e(k'))`` and
    ``u2`` is the on-site x gate.
    """

    two_site: np.ndarray  # (4, 4) zz gate, diagonal in the z basis
    one_site: np.ndarray  # (2, 2) x gate
    vl: np.ndarray        # (2, 2, chi_g): (j_in, j_out, bond)
    vr: np.ndarray        # (chi_g, 2, 2): (bond, j_in, j_out)
    u1: np.ndarray        # (2, 2) time-direction zz gate
    u2: np.ndarray        # (2, 2) alias of one_site
    chi_g: int
    j: float
    b: float
    tau: float


def zz_gate(j: float, tau: float) -> np.ndarray:
    """Two-site gate exp(-i tau J sz sz), diagonal in the z basis."""
    phases = np.exp(-1j * tau * j * np.outer(EIG, EIG).ravel())
    return np.diag(phases)


def x_gate(b: float, tau: float) -> np.ndarray:
    """On-site gate exp(-i tau b sx)."""
    c, s = np.cos(tau * b), np.sin(tau * b)
    return np.array([[c, -1j * s], [-1j * s, c]])


def split_two_site_gate(gate: np.ndarray, tol: float = 1e-12):
    """Split a 4x4 two-site gate across the spatial bond.

    The gate is regrouped so rows collect the left site's (in, out) pair and
    columns the right site's, then SVD'd; the bond dimension is the numerical
    rank at ``tol``.  Returns ``(vl, vr, chi_g)`` with
    ``vl[ji, jo, k] vr[k, mi, mo] = <jo mo|gate|ji mi>``.
    """
    g = np.asarray(gate, dtype=complex).reshape(2, 2, 2, 2)
    # axes: (jo, mo, ji, mi) -> rows (ji, jo), cols (mi, mo)
    m = g.transpose(2, 0, 3, 1).reshape(4, 4)
    res = svd_truncated(m, TruncationPolicy(rel_threshold=tol))
    chi = res.rank
    sq = np.sqrt(res.s)
    vl = (res.u * sq).reshape(2, 2, chi)
    vr = (sq[:, None] * res.vh).reshape(chi, 2, 2)
    return vl, vr, chi


def build_gates(params: ModelParams) -> GateSet:
    """Assemble the gate set of one Trotter step."""
    two = zz_gate(params.j, params.tau)
    one = x_gate(params.b, params.tau)
    vl, vr, chi = split_two_site_gate(two)
    u1 = np.exp(-1j * params.tau * params.j * np.outer(EIG, EIG))
    return GateSet(
        two_site=two, one_site=one, vl=vl, vr=vr, u1=u1, u2=one,
        chi_g=chi, j=params.j, b=params.b, tau=params.tau,
    )


def factor_general_disorder(hi: np.ndarray, h: float, tau: float):
    """Eigen-factorize exp(-i tau h Hi) for a general Hermitian local term.

    Returns ``(u, v)`` with ``u @ diag(v) @ u^dag`` equal to the exponential;
    for ``Hi = sz`` this reduces to ``u = I`` and the plain phase vector.
    """
    hi = np.asarray(hi, dtype=complex)
    if hi.shape != (2, 2) or not np.allclose(hi, hi.conj().T, atol=1e-12):
        raise ValueError("local disorder operator must be 2x2 Hermitian")
    if np.allclose(hi, SZ, atol=1e-14):
        return np.eye(2, dtype=complex), phase_vector(h, tau)
    w, u = np.linalg.eigh(hi)
    # eigh sorts ascending; order to match the sz convention (+1 first)
    order = np.argsort(-w)
    w, u = w[order], u[:, order]
    return u, np.exp(-1j * tau * h * w)


def build_w_tensor(gates: GateSet) -> np.ndarray:
    """Single-site, single-step column tensor of the Trotter network.

    Axes ``(j_in, j_out, k_left, k_right, l)`` of extents
    ``(2, 2, chi_g, chi_g, 2)``.  The disorder leg ``l`` is diagonal with the
    time input; contracting it with a per-step phase vector and chaining
    ``n`` copies over (j_out -> j_in) reproduces a bulk site's column, with
    the adjacent bond gates split as vr (left bond) and vl (right bond).
    """
    chi = gates.chi_g
    w = np.zeros((2, 2, chi, chi, 2), dtype=complex)
    # site operator: vl[q, j_out, k_right] . vr[k_left, p, q] . u2[p, j_in]
    # with the disorder leg locked to j_in.
    core = np.einsum("qok,apq,pi->ioak", gates.vl, gates.vr, gates.u2)
    for ji in range(2):
        w[ji, :, :, :, ji] = core[ji]
    return w


def w_column_dense(w: np.ndarray, h: float, tau: float, n: int) -> np.ndarray:
    """Contract n copies of ``w`` at field ``h`` into a dense column operator.

    Returns the map on the time edge, shape ``(2, 2, chi^n, chi^n)`` as
    ``(j_out_final, j_in_first, k_left_joint, k_right_joint)``.
    """
    v = phase_vector(h, tau)
    site = np.einsum("ioakl,l->ioak", w, v)  # (j_in, j_out, kl, kr)
    chi = site.shape[2]
    acc = site  # axes (j_in, j_out, KL, KR)
    for _ in range(n - 1):
        acc = np.einsum("ioab,oPcd->iPacbd", acc, site)
        acc = acc.reshape(2, 2, acc.shape[2] * acc.shape[3], acc.shape[4] * acc.shape[5])
    return acc.transpose(1, 0, 2, 3)


def build_fast_gates(params: ModelParams):
    """Delta-factorized form of the column tensor (diagonal zz coupling only).

    Returns ``(delta5, u1, u2)`` where ``delta5`` is the five-index Kronecker
    tensor tying (j_in, j_out, k_left, k_right, l) together; assembling
    ``delta5`` with the time-direction gate u1 and on-site gate u2 reproduces
    the generic W-column contraction identically.
    """
    gates = build_gates(params)
    delta5 = np.zeros((2, 2, 2, 2, 2))
    for s in range(2):
        delta5[s, s, s, s, s] = 1.0
    return delta5, gates.u1, gates.u2


def fast_column_dense(params: ModelParams, h: float, n: int) -> np.ndarray:
    """Dense single-site column via the u1/u2 delta structure.

    Independent of :func:`w_column_dense`; used to cross-check the generic
    path.  Site operator per step: ``M[a, c][jo, ji] = u1[a, jo] *
    delta(c, jo) * u2[jo, ji] * v[ji]``; bond axes are ordered
    ``(k_left_joint, k_right_joint)`` matching ``w_column_dense``.
    """
    gates = build_gates(params)
    v = phase_vector(h, params.tau)
    m = np.zeros((2, 2, 2, 2), dtype=complex)  # (j_in, j_out, a, c)
    for ji in range(2):
        for jo in range(2):
            for a in range(2):
                m[ji, jo, a, jo] = gates.u1[a, jo] * gates.u2[jo, ji] * v[ji]
    acc = m
    for _ in range(n - 1):
        acc = np.einsum("ioab,oPcd->iPacbd", acc, m)
        acc = acc.reshape(2, 2, acc.shape[2] * acc.shape[3], acc.shape[4] * acc.shape[5])
    return acc.transpose(1, 0, 2, 3)


def trotter_step_dense(params: ModelParams, h: np.ndarray) -> np.ndarray:
    """Dense one-step propagator U_zz @ U_x @ U_h on the full chain.

    The reference ordering for every Trotter-grid comparison in the package.
    """
    el = params.sites
    if el > 14:
        raise ValueError("dense step propagator limited to <= 14 sites")
    h = np.asarray(h, dtype=float)
    if h.shape != (el,):
        raise ValueError(f"need {el} field values, got shape {h.shape}")
    es = _site_eigs(el)  # (dim, L) of +-1
    zz = np.einsum("di,di->d", es[:, :-1], es[:, 1:])
    ux1 = x_gate(params.b, params.tau)
    ux = np.array([[1.0]], dtype=complex)
    for _ in range(el):
        ux = np.kron(ux, ux1)
    # U_zz diagonal: exp(-i tau J zz); U_h diagonal: exp(-i tau h.e)
    uzz = np.exp(-1j * params.tau * params.j * zz)
    uh = np.exp(-1j * params.tau * (es @ h))
    return (uzz[:, None] * ux) * uh[None, :]


def _site_eigs(el: int) -> np.ndarray:
    idx = np.arange(2**el, dtype=np.uint32)
    out = np.empty((2**el, el), dtype=float)
    for i in range(el):
        # site 0 is the most significant bit
        out[:, i] = 1.0 - 2.0 * ((idx >> (el - 1 - i)) & 1)
    return out


def hamiltonian_dense(params: ModelParams, h: np.ndarray) -> np.ndarray:
    """Dense Hamiltonian matrix for small chains (delegates to the ED module
    convention: open boundaries, site 0 = most significant bit)."""
    el = params.sites
    h = np.asarray(h, dtype=float)
    es = _site_eigs(el)
    zz = np.einsum("di,di->d", es[:, :-1], es[:, 1:])
    ham = np.diag(params.j * zz + es @ h).astype(complex)
    for i in range(el):
        ham += params.b * _sx_at(el, i)
    return ham


def _sx_at(el: int, i: int) -> np.ndarray:
    op = np.array([[1.0]], dtype=complex)
    for k in range(el):
        op = np.kron(op, SX if k == i else np.eye(2, dtype=complex))
    return op


def exact_step(params: ModelParams, h: np.ndarray) -> np.ndarray:
    """Dense exp(-i tau H[h]) for Trotter-error checks."""
    return scipy.linalg.expm(-1j * params.tau * hamiltonian_dense(params, h))
