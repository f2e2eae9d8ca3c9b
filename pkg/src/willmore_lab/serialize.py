"""Structured-text (TOML) and CSV input/output.

Floats are written in shortest round-trip form, so a surface written and
read back has bitwise-identical coefficients.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import __version__
from . import sh
from .surface import SphereParam

SURFACE_FORMAT = "willmore-lab surface"
HARMONIC_CONVENTION = ("real orthonormal Y_lm, no Condon-Shortley phase, "
                       "index l*l+l+m; Y_lm ~ cos(m phi) for m > 0, sin(|m| phi) for m < 0")

# Column order of a FunctionalReport written as a CSV row (vectors expanded).
REPORT_COLUMNS = ["W", "U", "V", "area", "genus", "splitting_residual", "lambda_id",
                  "lambda_lsq", "el_residual", "hawking", "volE", "vol", "RE",
                  "aE_x", "aE_y", "aE_z", "roundness_H", "roundness_A", "ricci_avg",
                  "grad_log_H_sq", "min_H"]
HISTORY_COLUMNS = ["iter", "W", "area", "el_residual", "lambda"]


def read_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomli.load(fh)


def _plain(value):
    """Convert numpy scalars/arrays and None into TOML-representable values."""
    if value is None:
        return math.nan
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in np.asarray(value).tolist()] if isinstance(value, np.ndarray) \
            else [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def write_toml(path, data: dict) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(_plain(data), fh)


def dumps_toml(data: dict) -> str:
    return tomli_w.dumps(_plain(data))


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- surfaces ---------------------------------------------------------------

def surface_to_dict(param: SphereParam) -> dict:
    L = param.band_limit
    return {
        "format": SURFACE_FORMAT,
        "version": __version__,
        "convention": HARMONIC_CONVENTION,
        "band_limit": L,
        "n_theta": param.n_theta,
        "n_phi": param.n_phi,
        "lm": sh.lm_pairs(L).tolist(),
        "x": [float(v) for v in param.coeffs[0]],
        "y": [float(v) for v in param.coeffs[1]],
        "z": [float(v) for v in param.coeffs[2]],
    }


def surface_from_dict(d: dict) -> SphereParam:
    for key in ("band_limit", "n_theta", "n_phi", "x", "y", "z"):
        if key not in d:
            raise ValueError(f"surface.{key}: missing")
    if d.get("format", SURFACE_FORMAT) != SURFACE_FORMAT:
        raise ValueError(f"surface.format: expected {SURFACE_FORMAT!r}")
    coeffs = np.array([d["x"], d["y"], d["z"]], dtype=float)
    return SphereParam(int(d["band_limit"]), coeffs, int(d["n_theta"]), int(d["n_phi"]))


def save_surface(param: SphereParam, path) -> None:
    write_toml(path, surface_to_dict(param))


def load_surface(path) -> SphereParam:
    return surface_from_dict(read_toml(path))


# -- tables -----------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: list, rows: list, header: dict | None = None) -> None:
    """CSV with a ``#``-prefixed header block; missing cells are left empty."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# willmore-lab {__version__}\n")
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                w.writerow([_cell(row.get(c)) for c in columns])
            else:
                w.writerow([_cell(v) for v in row])


def read_csv(path) -> tuple[list, list]:
    """Columns and rows (as strings) of a CSV written by ``write_csv``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def report_row(report) -> dict:
    d = report.as_dict()
    ax, ay, az = d.pop("aE")
    d.update(aE_x=ax, aE_y=ay, aE_z=az)
    return d


def write_report(path, report, extra: dict | None = None) -> None:
    d = dict(extra or {})
    d.update(report.as_dict())
    write_toml(path, d)


def write_history(path, history: list, header: dict | None = None) -> None:
    write_csv(path, HISTORY_COLUMNS, history, header)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
