"""Dense complex tensor kernels: contraction, truncated SVD, QR.

Tensors are plain ``numpy.ndarray`` objects with ``complex128`` entries in
row-major (C) order; the axis order of every tensor is documented at its
point of construction.  All functions here are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Singular values below SPECTRUM_CLAMP * S[0] are treated as exact zeros when
# forming spectral ratios; at double precision anything smaller is roundoff.
SPECTRUM_CLAMP = 1e2 * np.finfo(float).eps


class DimensionError(ValueError):
    """Raised when tensor extents are incompatible with the requested op."""


class NumericError(FloatingPointError):
    """Raised when an operation encounters non-finite input or output."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Relative singular-value cutoff plus an optional hard rank cap.

    ``rel_threshold`` discards singular values with S_i/S_0 below it.
    """

    rel_threshold: float = 1e-10
    max_rank: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.rel_threshold < 1.0:
            raise ValueError(f"rel_threshold must be in [0, 1), got {self.rel_threshold}")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError(f"max_rank must be >= 1, got {self.max_rank}")

    def kept_rank(self, s: np.ndarray) -> int:
        """Number of leading singular values kept under this policy."""
        if s.size == 0 or s[0] <= 0.0:
            return 0
        keep = int(np.count_nonzero(s >= self.rel_threshold * s[0]))
        if self.max_rank is not None:
            keep = min(keep, self.max_rank)
        return keep


@dataclass
class SvdResult:
    """Truncated SVD factors with discarded-weight bookkeeping.

    ``u @ diag(s) @ vh`` reconstructs the input up to a squared Frobenius
    error of ``discarded_weight`` times the input's squared norm.
    """

    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray
    discarded_weight: float

    @property
    def rank(self) -> int:
        return self.s.size


def contract(a: np.ndarray, b: np.ndarray, axis_pairs: list[tuple[int, int]]) -> np.ndarray:
    """Contract paired axes of ``a`` and ``b``.

    ``axis_pairs`` lists ``(axis_of_a, axis_of_b)`` pairs; the result carries
    the unpaired axes of ``a`` followed by those of ``b``, in original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if not axis_pairs:
        return np.tensordot(a, b, axes=0)
    ax_a = [p[0] for p in axis_pairs]
    ax_b = [p[1] for p in axis_pairs]
    for i, j in axis_pairs:
        if a.shape[i] != b.shape[j]:
            raise DimensionError(
                f"axis pair ({i},{j}) has extents {a.shape[i]} != {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def _fix_svd_gauge(u: np.ndarray, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Make the largest-magnitude entry of each left singular vector real
    # positive so repeated runs give bit-identical factors.
    if u.shape[1] == 0:
        return u, vh
    idx = np.argmax(np.abs(u), axis=0)
    piv = u[idx, np.arange(u.shape[1])]
    mag = np.abs(piv)
    phase = np.where(mag > 0, piv / np.where(mag > 0, mag, 1.0), 1.0)
    return u * phase.conj(), vh * phase[:, None]


def svd_truncated(m: np.ndarray, policy: TruncationPolicy) -> SvdResult:
    """Truncated SVD of a matrix under ``policy``, with gauge fixing.

    The kept singular values are returned in descending order; the weight of
    the dropped part (sum of squared dropped values over the total) is
    recorded in ``discarded_weight``.
    """
    m = np.ascontiguousarray(m)
    if m.ndim != 2:
        raise DimensionError(f"svd_truncated expects a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m.view(float) if m.dtype.kind == "c" else m)):
        raise NumericError("svd_truncated: non-finite entries in input")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    total = float(np.sum(s**2))
    keep = policy.kept_rank(s)
    if total == 0.0:
        return SvdResult(u[:, :0], s[:0], vh[:0], 0.0)
    discarded = float(np.sum(s[keep:] ** 2) / total)
    u, vh = _fix_svd_gauge(u[:, :keep], vh[:keep])
    return SvdResult(u, s[:keep].copy(), vh, discarded)


def qr(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization; Q has orthonormal columns, R is upper triangular."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"qr expects a matrix, got ndim={m.ndim}")
    return np.linalg.qr(m, mode="reduced")


def clamp_spectrum(s: np.ndarray) -> np.ndarray:
    """Zero out singular values below the roundoff floor relative to S[0]."""
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return s
    out = s.copy()
    out[out < SPECTRUM_CLAMP * out[0]] = 0.0
    return out


def gram_spectrum(g: np.ndarray, total: float | None = None):
    """Descending singular values and left vectors from the Gram matrix ``t t†``.

    Fast path used in large-batch compressions; values below roughly
    ``sqrt(eps) * S[0]`` are dominated by roundoff and are reported as the
    eigensolver returns them.  Returns ``(s, u, total_weight)``.
    """
    g = 0.5 * (g + g.conj().T)
    lam, u = np.linalg.eigh(g)
    lam = lam[::-1]
    u = u[:, ::-1]
    if total is None:
        total = float(np.sum(np.abs(np.diag(g))))
    s = np.sqrt(np.clip(lam, 0.0, None))
    return s, u, total


def qr_svd(t: np.ndarray):
    """Singular values and left vectors of a wide matrix via QR-SVD.

    Backward-stable alternative to :func:`gram_spectrum`; resolves singular
    values down to machine precision relative to S[0].  Returns
    ``(s, u, total_weight)``.
    """
    r = scipy.linalg.qr(t.conj().T, mode="r", check_finite=False)[0]
    u, s, _ = np.linalg.svd(r.conj().T, full_matrices=False)
    return s, u, float(np.sum(s**2))
