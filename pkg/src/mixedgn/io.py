"""Snapshots, sidecars and the sweep CSV.

A field snapshot is a JSON header plus a raw little-endian float64 file in
row-major order; the header records the binary file's SHA-256.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .functionals import FunctionalReport
from .params import ProblemParams
from .solvers import GroundState, SolverOptions
from .spectral import Field, SpectralGrid
from .verification import CSV_COLUMNS, Certificate

SNAPSHOT_FORMAT = "mixedgn-field"
SNAPSHOT_VERSION = 1
CSV_SCHEMA_LINE = "# schema=1"
# keys that may legitimately differ between identical reruns
VOLATILE_KEYS = ("created",)


class HashMismatchError(ValueError):
    """The binary sidecar does not match the hash stored in its header."""


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    Path(path).write_text(text + "\n")


def strip_volatile(d: dict) -> dict:
    return {k: v for k, v in d.items() if k not in VOLATILE_KEYS}


def save_field(path, u: Field, params: ProblemParams | None = None, extra: dict | None = None) -> dict:
    """Write ``path`` (JSON header) and ``path`` with suffix ``.bin``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_path = path.with_suffix(".bin")
    data = np.ascontiguousarray(u.values, dtype="<f8").tobytes(order="C")
    bin_path.write_bytes(data)
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "dim": u.grid.dim,
        "n_per_axis": u.grid.n,
        "half_length": u.grid.half_length,
        "byte_order": "little",
        "element": "float64",
        "layout": "row-major",
        "data_file": bin_path.name,
        "sha256": _sha256(data),
        "params": params.to_dict() if params is not None else None,
        "created": _timestamp(),
    }
    if extra:
        header.update(extra)
    dump_json(header, path)
    return header


def read_header(path) -> dict:
    header = json.loads(Path(path).read_text())
    if header.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path} is not a {SNAPSHOT_FORMAT} snapshot")
    return header


def load_field(path) -> tuple[Field, dict]:
    path = Path(path)
    header = read_header(path)
    data = (path.parent / header["data_file"]).read_bytes()
    if _sha256(data) != header["sha256"]:
        raise HashMismatchError(f"content hash mismatch for {header['data_file']}")
    grid = SpectralGrid.from_dict(header)
    vals = np.frombuffer(data, dtype="<f8")
    return Field(grid, vals), header


def save_ground_state(path, gs: GroundState, opts: SolverOptions, extra: dict | None = None) -> dict:
    meta = {
        "kind": "ground_state",
        "omega": gs.omega,
        "residual": gs.residual,
        "boundary_decay": gs.boundary_decay,
        "report": gs.report.to_dict(),
        "solver_options": opts.to_dict(),
        "iterations": gs.iterations,
        "stabilizer": gs.stabilizer,
        "flags": list(gs.flags),
    }
    if extra:
        meta.update(extra)
    return save_field(path, gs.field, gs.params, meta)


def load_ground_state(path) -> tuple[GroundState, dict]:
    u, header = load_field(path)
    if header.get("kind") != "ground_state":
        raise ValueError(f"{path} does not hold a ground state")
    params = ProblemParams.from_dict(header["params"])
    opts = SolverOptions.from_dict(header["solver_options"])
    gs = GroundState(field=u, omega=header["omega"],
                     report=FunctionalReport.from_dict(header["report"]),
                     residual=header["residual"], boundary_decay=header["boundary_decay"],
                     params=params, iterations=header["iterations"],
                     stabilizer=header.get("stabilizer", 1.0), flags=tuple(header["flags"]),
                     residual_tol=opts.residual_tol)
    return gs, header


def save_certificate(path, cert: Certificate, extra: dict | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    d = cert.to_dict()
    d["created"] = _timestamp()
    if extra:
        d.update(extra)
    dump_json(d, path)


def load_certificate(path) -> Certificate:
    d = json.loads(Path(path).read_text())
    d = {k: v for k, v in d.items() if k in Certificate.__dataclass_fields__ or k == "status"}
    return Certificate.from_dict(d)


# CSV ------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def ensure_csv(path) -> None:
    """Create the CSV with its schema line and header if it does not exist."""
    path = Path(path)
    if path.exists() and path.stat().st_size > 0:
        with path.open() as fh:
            first = fh.readline().strip()
        if first != CSV_SCHEMA_LINE:
            raise ValueError(f"{path} has unexpected schema line {first!r}")
        return
    with path.open("w", newline="") as fh:
        fh.write(CSV_SCHEMA_LINE + "\n")
        csv.writer(fh, lineterminator="\n").writerow(CSV_COLUMNS)


def append_csv_row(path, row) -> None:
    if len(row) != len(CSV_COLUMNS):
        raise ValueError(f"expected {len(CSV_COLUMNS)} columns, got {len(row)}")
    ensure_csv(path)
    with Path(path).open("a", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow([_fmt(v) for v in row])
        fh.flush()
        os.fsync(fh.fileno())


def read_csv_rows(path) -> list[dict]:
    """Rows as dicts; numeric columns parsed to float, ``N``/``violations`` to int."""
    path = Path(path)
    if not path.exists():
        return []
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        return []
    reader = csv.DictReader(lines)
    out = []
    for rec in reader:
        row = {}
        for k in CSV_COLUMNS:
            v = rec.get(k, "")
            if k == "status":
                row[k] = v
            elif k in ("N", "violations"):
                row[k] = int(float(v)) if v not in ("", "nan") else -1
            else:
                row[k] = float(v) if v != "" else math.nan
        out.append(row)
    return out


def row_key(N, s_low, s_high, p) -> tuple:
    return (int(N), float(s_low), float(s_high), float(p))


def completed_keys(path) -> set:
    return {row_key(r["N"], r["s_low"], r["s_high"], r["p"]) for r in read_csv_rows(path)}
