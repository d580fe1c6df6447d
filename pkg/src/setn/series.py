"""Shared result containers and CSV export.

Every output file starts with a ``#``-prefixed header block echoing the
producing configuration (key=value lines) so any result can be traced back
to its inputs; the body is plain CSV.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import __version__


@dataclass
class SffSeries:
    """Spectral form factor on a time grid with provenance metadata."""

    times: np.ndarray
    values: np.ndarray
    sites: int
    realizations: int
    method: str
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def format_header(config: dict) -> str:
    lines = [f"# setn_version = {__version__}"]
    for key in sorted(config):
        lines.append(f"# {key} = {config[key]}")
    return "\n".join(lines) + "\n"


def parse_header(text: str) -> dict:
    """Inverse of :func:`format_header`; returns the echoed key=value map."""
    out = {}
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" in body:
            key, val = body.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_csv(path, columns: dict, config: dict) -> None:
    """Write named columns with a config-echo header; deterministic bytes."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    buf = io.StringIO()
    buf.write(format_header(config))
    buf.write(",".join(names) + "\n")
    for row in range(len(cols[0])):
        cells = []
        for c in cols:
            v = c[row]
            if isinstance(v, (float, np.floating)):
                cells.append(repr(float(v)))
            elif isinstance(v, (complex, np.complexfloating)):
                cells.append(repr(complex(v)))
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def sff_csv(path, series: SffSeries, config: dict) -> None:
    cols = {"t": series.times, "K": series.values}
    if series.stderr is not None:
        cols["stderr"] = series.stderr
    cols["L"] = np.full(len(series.times), series.sites, dtype=int)
    cols["method"] = np.array([series.method] * len(series.times))
    cols["realizations"] = np.full(len(series.times), series.realizations, dtype=int)
    write_csv(path, cols, config)
