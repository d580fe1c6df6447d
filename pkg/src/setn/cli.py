"""Command-line front end: deterministic experiment runs writing CSV files.

Configuration comes from ``key=value`` text files (``#`` comments allowed,
unknown keys rejected) with command-line flags taking precedence.  Every
output file echoes the resolved configuration in its header, so a result
file is reproducible from its own header plus the package version.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .analysis import extract_lambda, thouless_estimate, toy_model_sff
from .disorder import DisorderSpec, sample
from .ed import (build_hamiltonian, mean_level_spacing_ratio, sff_averaged,
                 sff_quadrature_l4)
from .model import ModelParams
from .selayer import (compress_streaming, fit_scaling_coefficients,
                      spectrum_series)
from .series import SffSeries, parse_header, write_csv
from .tensor import TruncationPolicy
from .transfer import (KrylovConvergenceError, leading_eig_dmrg,
                       leading_eigs_krylov, make_transfer, sff_via_network)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved run parameters; every field appears in output headers."""

    subcommand: str
    alpha: float = 0.5
    disorder: str = "uniform"
    coupling: float = 1.0
    fieldx: float = 1.0
    tau: float = 0.005
    steps: int = 1
    sites: int = 4
    realizations: int = 1000
    threshold: float = 1e-10
    max_bond: int = 0  # 0 means uncapped
    seed: int = 12345
    threads: int = 1
    t_max: float = 0.0
    t_step: float = 0.0
    nodes: int = 24
    alphas: str = ""
    inputs: str = ""
    window_lo: float = 20.0
    window_hi: float = 90.0
    sites_min: int = 9
    sites_max: int = 20
    method: str = "krylov"
    eig_k: int = 2
    out: str = "out.csv"

    def validate(self):
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.sites < 1:
            raise ConfigError(f"sites must be >= 1, got {self.sites}")
        if self.realizations < 1:
            raise ConfigError(f"realizations must be >= 1, got {self.realizations}")
        if not 0 <= self.threshold < 1:
            raise ConfigError(f"threshold must be in [0, 1), got {self.threshold}")
        if self.disorder not in ("uniform", "gaussian"):
            raise ConfigError(f"unknown disorder kind {self.disorder!r}")

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(rel_threshold=self.threshold,
                                max_rank=self.max_bond or None)

    def spec(self) -> DisorderSpec:
        return DisorderSpec(self.disorder, self.alpha)

    def params(self, sites=None, steps=None) -> ModelParams:
        return ModelParams(j=self.coupling, b=self.fieldx, spec=self.spec(),
                           tau=self.tau, n=steps or max(self.steps, 1),
                           sites=sites or self.sites)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_config_file(path: str) -> dict:
    out = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for ln, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in body.split("=", 1))
        if key == "subcommand" or key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        out[key] = val
    return out


def _coerce(key: str, val: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(val)
        if kind == "float":
            return float(val)
        return val
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc


def _time_grid(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.t_max <= 0 or cfg.t_step <= 0:
        raise ConfigError("this subcommand needs t_max > 0 and t_step > 0")
    npts = int(round(cfg.t_max / cfg.t_step))
    return cfg.t_step * np.arange(0, npts + 1)


def _trotter_steps(cfg: ExperimentConfig) -> list[int]:
    grid = _time_grid(cfg)
    steps = sorted({max(1, int(round(t / cfg.tau))) for t in grid if t > 0})
    return steps


def _run_spectrum(cfg: ExperimentConfig):
    batch = sample(cfg.spec(), cfg.realizations, cfg.seed)
    chain = compress_streaming(batch, cfg.steps, cfg.tau, cfg.policy())
    series = spectrum_series(chain)
    coeffs, residuals = fit_scaling_coefficients(series)
    rows_step, rows_t, rows_i, rows_r = [], [], [], []
    for p, (t, ratios) in enumerate(zip(series.times, series.ratios), start=1):
        for i, r in enumerate(ratios):
            rows_step.append(p)
            rows_t.append(t)
            rows_i.append(i)
            rows_r.append(r)
    hdr = cfg.echo()
    for i, (c, res) in enumerate(zip(coeffs, residuals), start=1):
        hdr[f"fit_c{i}"] = c
        hdr[f"fit_c{i}_residual"] = res
    write_csv(cfg.out, {"step": rows_step, "t": rows_t, "i": rows_i,
                        "ratio_sq": rows_r}, hdr)


def _run_sff_ed(cfg: ExperimentConfig):
    series = sff_averaged(cfg.params(), _time_grid(cfg), cfg.realizations,
                          cfg.seed, workers=cfg.threads)
    _write_sff(cfg, series)


def _run_sff_exact4(cfg: ExperimentConfig):
    series = sff_quadrature_l4(cfg.params(sites=4), _time_grid(cfg), cfg.nodes)
    _write_sff(cfg, series)


def _run_sff_setn(cfg: ExperimentConfig):
    steps = _trotter_steps(cfg)
    batch = sample(cfg.spec(), cfg.realizations, cfg.seed)
    chain = compress_streaming(batch, max(steps), cfg.tau, cfg.policy())
    series = sff_via_network(cfg.params(steps=max(steps)), chain, cfg.policy(),
                             times_steps=steps)
    _write_sff(cfg, series)


def _write_sff(cfg: ExperimentConfig, series: SffSeries):
    cols = {"t": series.times, "K": series.values}
    if series.stderr is not None:
        cols["stderr"] = series.stderr
    hdr = cfg.echo()
    hdr["method"] = series.method
    if "warning" in series.meta:
        hdr["accuracy_warning"] = series.meta["warning"]
    write_csv(cfg.out, cols, hdr)


def _run_transfer_eig(cfg: ExperimentConfig):
    steps = _trotter_steps(cfg)
    batch = sample(cfg.spec(), cfg.realizations, cfg.seed)
    chain = compress_streaming(batch, max(steps), cfg.tau, cfg.policy())
    cap = cfg.max_bond or 32
    rows = {k: [] for k in ("t", "n", "method", "k", "re", "im", "abs",
                            "residual", "bond")}
    for n in steps:
        op = make_transfer(cfg.params(steps=n), chain, cfg.policy(), n=n)
        if cfg.method in ("krylov", "both"):
            tol = 1e-8 if op.dim <= 4**9 else 2e-5
            res = leading_eigs_krylov(op, k=cfg.eig_k, tol=tol, seed=cfg.seed,
                                      chi_max=cap)
            for i, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals)):
                _eig_row(rows, n * cfg.tau, n, res.method, i, lam, r, cap)
        if cfg.method in ("dmrg", "both"):
            res, _state = leading_eig_dmrg(op, chi_d=cap, seed=cfg.seed)
            _eig_row(rows, n * cfg.tau, n, "dmrg", 0, res.eigenvalues[0],
                     res.residuals[0], cap)
    write_csv(cfg.out, rows, cfg.echo())


def _eig_row(rows, t, n, method, k, lam, residual, bond):
    rows["t"].append(t)
    rows["n"].append(n)
    rows["method"].append(method)
    rows["k"].append(k)
    rows["re"].append(lam.real)
    rows["im"].append(lam.imag)
    rows["abs"].append(abs(lam))
    rows["residual"].append(residual)
    rows["bond"].append(bond)


def _run_levels(cfg: ExperimentConfig):
    alphas = [float(a) for a in cfg.alphas.split(",")] if cfg.alphas else [cfg.alpha]
    rvals = []
    for a in alphas:
        params = ModelParams(j=cfg.coupling, b=cfg.fieldx,
                             spec=DisorderSpec(cfg.disorder, a), tau=cfg.tau,
                             n=1, sites=cfg.sites)
        rvals.append(mean_level_spacing_ratio(params, cfg.realizations, cfg.seed))
    write_csv(cfg.out, {"alpha": alphas, "r_mean": rvals,
                        "realizations": [cfg.realizations] * len(alphas)},
              cfg.echo())


def _read_sff_csv(path: str) -> SffSeries:
    hdr = parse_header(open(path).read())
    data = np.genfromtxt(path, delimiter=",", names=True, comments="#",
                         dtype=None, encoding=None)
    return SffSeries(times=np.atleast_1d(data["t"]).astype(float),
                     values=np.atleast_1d(data["K"]).astype(float),
                     sites=int(hdr.get("sites", 0)),
                     realizations=int(hdr.get("realizations", 0)),
                     method=hdr.get("method", "?"))


def _run_fit_lambda(cfg: ExperimentConfig):
    paths = [p for p in cfg.inputs.split(",") if p]
    if len(paths) < 3:
        raise ConfigError("fit-lambda needs >= 3 input files (inputs=a,b,c)")
    series = [_read_sff_csv(p) for p in paths]
    fit = extract_lambda(series)
    write_csv(cfg.out, {"t": fit.times, "lambda": fit.lam, "lo80": fit.ci80_low,
                        "hi80": fit.ci80_high, "n_sizes": [len(fit.sizes)] * fit.times.size},
              cfg.echo())


def _run_thouless(cfg: ExperimentConfig):
    if not cfg.inputs:
        raise ConfigError("thouless needs inputs=<sff csv>")
    series = _read_sff_csv(cfg.inputs.split(",")[0])
    est = thouless_estimate(series, (cfg.window_lo, cfg.window_hi))
    write_csv(cfg.out, {"t_th": [est.t_th], "resolution": [est.resolution],
                        "slope": [est.slope], "intercept": [est.intercept]},
              cfg.echo())


def _run_toy(cfg: ExperimentConfig):
    tmax = int(cfg.t_max) if cfg.t_max > 0 else 100
    rows_t, rows_l, rows_k = [], [], []
    for sites in range(cfg.sites_min, cfg.sites_max + 1):
        s = toy_model_sff(tmax, sites)
        rows_t.extend(int(t) for t in s.times)
        rows_l.extend([sites] * s.times.size)
        rows_k.extend(s.values)
    write_csv(cfg.out, {"t": rows_t, "L": rows_l, "K": rows_k}, cfg.echo())


_RUNNERS = {
    "spectrum": _run_spectrum,
    "sff-ed": _run_sff_ed,
    "sff-exact4": _run_sff_exact4,
    "sff-setn": _run_sff_setn,
    "transfer-eig": _run_transfer_eig,
    "levels": _run_levels,
    "fit-lambda": _run_fit_lambda,
    "thouless": _run_thouless,
    "toy": _run_toy,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="setn",
                                 description="disorder-averaged spin-chain dynamics")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--disorder", default=None)
        p.add_argument("--coupling", type=float, default=None)
        p.add_argument("--fieldx", type=float, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--sites", type=int, default=None)
        p.add_argument("--realizations", type=int, default=None)
        p.add_argument("--threshold", type=float, default=None)
        p.add_argument("--max-bond", dest="max_bond", type=int, default=None)
        p.add_argument("--t-max", dest="t_max", type=float, default=None)
        p.add_argument("--t-step", dest="t_step", type=float, default=None)
        p.add_argument("--nodes", type=int, default=None)
        p.add_argument("--alphas", default=None)
        p.add_argument("--inputs", default=None)
        p.add_argument("--window-lo", dest="window_lo", type=float, default=None)
        p.add_argument("--window-hi", dest="window_hi", type=float, default=None)
        p.add_argument("--sites-min", dest="sites_min", type=int, default=None)
        p.add_argument("--sites-max", dest="sites_max", type=int, default=None)
        p.add_argument("--method", default=None)
        p.add_argument("--eig-k", dest="eig_k", type=int, default=None)
    return ap


def load_config(argv) -> ExperimentConfig:
    ns = build_parser().parse_args(argv)
    values = {"subcommand": ns.subcommand}
    if ns.config:
        for key, raw in _parse_config_file(ns.config).items():
            values[key] = _coerce(key, raw)
    for key in _FIELD_TYPES:
        if key == "subcommand":
            continue
        flag = getattr(ns, key, None)
        if flag is not None:
            values[key] = flag
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = load_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _RUNNERS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (KrylovConvergenceError, np.linalg.LinAlgError, FloatingPointError,
            ValueError, RuntimeError) as exc:
        diag = cfg.out + ".diag.txt"
        with open(diag, "w") as fh:
            fh.write(f"setn {__version__} numerical failure\n")
            fh.write("".join(traceback.format_exception(exc)))
        print(f"numerical failure: {exc} (diagnostics in {diag})", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
