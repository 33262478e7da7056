"""Binary field snapshots, trajectory manifests and deterministic CSV/JSON output."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .spectral import ComplexField, Grid, InvalidFieldError, RealField

MAGIC = b"KGSF"
FORMAT_VERSION = 1


def write_snapshot(path, field: ComplexField, role: str, provenance: Optional[dict] = None) -> list[Path]:
    """Write ``path`` (binary) and ``path.json`` (sidecar); return both paths.

    Binary layout: b"KGSF", u16 version, u16 dim, u32 sizes[dim], then the
    coefficients as little-endian f64 (re, im) pairs in row-major FFT order.
    """
    path = Path(path)
    g = field.grid
    header = MAGIC + struct.pack("<HH", FORMAT_VERSION, g.dim) + struct.pack(f"<{g.dim}I", *g.shape)
    body = np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes()
    path.write_bytes(header + body)
    sidecar = path.with_name(path.name + ".json")
    meta = {
        "format": "KGSF",
        "version": FORMAT_VERSION,
        "length": g.length,
        "role": role,
        "kind": type(field).__name__,
        "ordering": "numpy-fft",
        "provenance": provenance or {},
    }
    write_json(sidecar, meta)
    return [path, sidecar]


def read_snapshot(path) -> tuple[ComplexField, dict]:
    """Inverse of write_snapshot; returns the field (RealField if so tagged) and the sidecar."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise InvalidFieldError(f"{path} is not a KGSF snapshot")
    version, dim = struct.unpack_from("<HH", raw, 4)
    if version != FORMAT_VERSION:
        raise InvalidFieldError(f"unsupported snapshot version {version}")
    shape = struct.unpack_from(f"<{dim}I", raw, 8)
    offset = 8 + 4 * dim
    coeffs = np.frombuffer(raw, dtype="<c16", offset=offset).astype(complex).reshape(shape)
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    length = meta.get("length", 2 * math.pi)
    if len(set(shape)) != 1:
        raise InvalidFieldError(f"non-cubic lattice {shape}")
    grid = Grid(dim=dim, n=shape[0], length=length)
    cls = RealField if meta.get("kind") == "RealField" else ComplexField
    return cls(grid, coeffs), meta


def write_trajectory(directory, times: Sequence[float], states, prefix: str = "state",
                     ledger: Optional[str] = None) -> list[Path]:
    """Dump first-order states as snapshots plus a manifest listing times and files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written, entries = [], []
    for j, (t, st) in enumerate(zip(times, states)):
        files = {}
        for role, f in (("psi", st.psi), ("phi_plus", st.phi_plus), ("phi_minus", st.phi_minus)):
            name = f"{prefix}_{j:05d}_{role}.kgsf"
            written += write_snapshot(directory / name, f, role, {"time": float(t), "sample": j})
            files[role] = name
        entries.append({"time": float(t), "files": files})
    manifest = directory / f"{prefix}_manifest.json"
    write_json(manifest, {"samples": entries, "ledger": ledger})
    written.append(manifest)
    return written


# -- tables ---------------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(path, rows: Iterable[Mapping], columns: Optional[Sequence[str]] = None) -> Path:
    """CSV with '.' decimals and 17 significant digits, LF line endings."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def config_hash(config: Mapping) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
