"""Estimation on SFF data: size scaling, ramp-onset time, toy spectrum.

The size fit treats log K as linear in the chain length L (an intercept is
included and reported; a pure power law K = lambda^L implies intercept 0).
Confidence bands come from the usual linear-regression covariance under
normal errors: 80% bands use z = 1.2816, the ramp fit uses z = 1.96.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import SffSeries

Z80 = 1.2816
Z95 = 1.9600


@dataclass
class LambdaFit:
    """Per-time effective eigenvalue from K(t) ~ lambda(t)^L across sizes."""

    times: np.ndarray
    lam: np.ndarray
    ci80_low: np.ndarray
    ci80_high: np.ndarray
    intercept: np.ndarray
    sizes: list[int]
    excluded: list = field(default_factory=list)


def extract_lambda(series_by_size: list[SffSeries]) -> LambdaFit:
    """Fit log K against L at every time; the slope exponentiates to lambda.

    Requires at least three sizes sharing one time grid; points with
    non-positive K are excluded (and recorded) per time.
    """
    if len(series_by_size) < 3:
        raise ValueError("need at least 3 sizes for the size fit")
    times = series_by_size[0].times
    for s in series_by_size[1:]:
        if not np.allclose(s.times, times):
            raise ValueError("size series must share one time grid")
    sizes = np.array([s.sites for s in series_by_size], dtype=float)
    kmat = np.stack([s.values for s in series_by_size])  # (sizes, times)
    nt = times.size
    lam = np.full(nt, np.nan)
    lo = np.full(nt, np.nan)
    hi = np.full(nt, np.nan)
    icept = np.full(nt, np.nan)
    excluded = []
    for it in range(nt):
        good = kmat[:, it] > 0
        if good.sum() < 3:
            excluded.append((it, int((~good).sum())))
            continue
        if not good.all():
            excluded.append((it, int((~good).sum())))
        x = sizes[good]
        y = np.log(kmat[good, it])
        (slope, b), cov = np.polyfit(x, y, 1, cov=True)
        se = np.sqrt(max(cov[0, 0], 0.0))
        lam[it] = np.exp(slope)
        lo[it] = np.exp(slope - Z80 * se)
        hi[it] = np.exp(slope + Z80 * se)
        icept[it] = b
    return LambdaFit(times=times, lam=lam, ci80_low=lo, ci80_high=hi,
                     intercept=icept, sizes=[int(s) for s in sizes],
                     excluded=excluded)


@dataclass
class ThoulessEstimate:
    t_th: float
    resolution: float
    slope: float
    intercept: float
    window: tuple[float, float]


def thouless_estimate(series: SffSeries,
                      fit_window: tuple[float, float] = (20.0, 90.0)) -> ThoulessEstimate:
    """Ramp-onset time from the linear-fit crossing rule.

    The SFF is fit linearly over ``fit_window``; the estimate is the first
    time after the pre-window peak at which K falls to or below the upper
    95% confidence line of the fit.  The grid spacing is returned as the
    resolution of the estimate.
    """
    t = np.asarray(series.times, dtype=float)
    k = np.asarray(series.values, dtype=float)
    wlo, whi = fit_window
    if t[0] > wlo or t[-1] < whi:
        raise ValueError("series does not cover the fit window")
    sel = (t >= wlo) & (t <= whi)
    if sel.sum() < 3:
        raise ValueError("too few points inside the fit window")
    x, y = t[sel], k[sel]
    (slope, icept), cov = np.polyfit(x, y, 1, cov=True)

    def upper(tq):
        var = cov[1, 1] + 2.0 * tq * cov[0, 1] + tq**2 * cov[0, 0]
        return icept + slope * tq + Z95 * np.sqrt(np.maximum(var, 0.0))

    pre = (t > 0) & (t <= wlo)
    if not np.any(pre):
        raise ValueError("no pre-window points to locate the peak")
    peak_idx = np.flatnonzero(pre)[np.argmax(k[pre])]
    scan = np.flatnonzero(t > t[peak_idx])
    if scan.size == 0:
        raise ValueError("no points after the peak")
    below = k[scan] <= upper(t[scan])
    if not np.any(below):
        raise ValueError("curve never meets the ramp band")
    hit = scan[np.argmax(below)]
    res = float(np.median(np.diff(t)))
    return ThoulessEstimate(t_th=float(t[hit]), resolution=res,
                            slope=float(slope), intercept=float(icept),
                            window=(wlo, whi))


def toy_eigenvalues(t: int) -> np.ndarray:
    """Effective spectrum {1} + {1 - 0.99^(t-i) : 0 < i <= t}."""
    if t < 0:
        raise ValueError("time must be a nonnegative integer")
    lams = [1.0]
    lams.extend(1.0 - 0.99 ** (t - i) for i in range(1, t + 1))
    return np.asarray(lams)


def toy_model_sff(t_max: int, sites: int) -> SffSeries:
    """K(t) = sum_i lambda_i(t)^L for the near-degeneracy toy spectrum."""
    times = np.arange(t_max + 1)
    values = np.array([float(np.sum(toy_eigenvalues(t) ** sites)) for t in times])
    return SffSeries(times=times.astype(float), values=values, sites=sites,
                     realizations=0, method="toy")


def toy_dominance_time(sites: int, threshold: float = 0.1, t_max: int = 10000) -> int:
    """First integer time at which the subleading toy weight passes
    ``threshold`` relative to the leading one."""
    if sites < 1:
        raise ValueError("need sites >= 1")
    for t in range(1, t_max + 1):
        sub = float(np.sum(toy_eigenvalues(t)[1:] ** sites))
        if sub >= threshold:
            return t
    raise RuntimeError(f"threshold never reached up to t={t_max}")
