"""Binary checkpoints for fields and trajectories, with a text manifest.

Layout: the 8-byte magic ``Q2DCKPT1``, a little-endian uint64 header length,
a UTF-8 JSON header, then the arrays named in the header as raw little-endian
``complex128`` in C order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .solvers import Trajectory
from .spectral import Field, Grid, VectorField

MAGIC = b"Q2DCKPT1"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<c16")


class CheckpointError(ValueError):
    """The file is not a readable checkpoint."""


def _grid_dict(g: Grid) -> dict:
    return {"n_h": g.n_h, "n_v": g.n_v, "len_h": g.len_h, "len_v": g.len_v}


def _scalar_diagnostics(diag: dict) -> dict:
    out = {}
    for k, v in diag.items():
        if isinstance(v, (int, float, str, bool)):
            out[k] = v
        elif isinstance(v, np.ndarray) and v.ndim == 1 and v.dtype.kind == "f":
            out[k] = [float(x) for x in v]
    return out


def _write(path: Path, header: dict, arrays: dict[str, np.ndarray], manifest: dict):
    header = dict(header, format_version=FORMAT_VERSION, endianness="little", dtype="complex128",
                  arrays={k: list(arrays[k].shape) for k in sorted(arrays)})
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        # the header is written with sorted keys and read back in that order
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype=_DTYPE).tobytes())
    lines = [f"file: {path.name}", f"format_version: {FORMAT_VERSION}", "endianness: little",
             "dtype: complex128"]
    lines += [f"{k}: {v}" for k, v in manifest.items()]
    lines += [f"array {k}: {' x '.join(map(str, a.shape))}" for k, a in arrays.items()]
    path.with_name(path.name + ".manifest.txt").write_text("\n".join(lines) + "\n")


def _read(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
        arrays = {}
        for name, shape in header["arrays"].items():
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * _DTYPE.itemsize), dtype=_DTYPE)
            if data.size != count:
                raise CheckpointError(f"{path}: truncated array {name}")
            arrays[name] = data.reshape(shape).astype(complex)
    return header, arrays


def save_field(path: str | Path, f: Field | VectorField, **meta) -> Path:
    path = Path(path)
    kind = "vector" if isinstance(f, VectorField) else "scalar"
    header = {"kind": kind, "grid": _grid_dict(f.grid), "meta": meta}
    _write(path, header, {"coeffs": f.coeffs}, {"kind": kind, **_grid_dict(f.grid), **meta})
    return path


def save_trajectory(path: str | Path, traj: Trajectory, **meta) -> Path:
    path = Path(path)
    arrays = {"states": traj.states}
    if traj.pressures is not None:
        arrays["pressures"] = traj.pressures
    if traj.rates is not None:
        arrays["rates"] = traj.rates
    header = {"kind": "trajectory", "grid": _grid_dict(traj.grid), "layout": traj.layout,
              "times": [float(t) for t in traj.times], "diagnostics": _scalar_diagnostics(traj.diagnostics),
              "meta": meta}
    _write(path, header, arrays, {"kind": "trajectory", "layout": traj.layout, "samples": len(traj),
                                  **_grid_dict(traj.grid), **meta})
    return path


def load(path: str | Path) -> Field | VectorField | Trajectory:
    path = Path(path)
    header, arrays = _read(path)
    g = Grid(**header["grid"])
    kind = header["kind"]
    if kind == "scalar":
        c = arrays["coeffs"]
        return Field(g, c, meanfree=bool(c[0, 0, 0] == 0))
    if kind == "vector":
        return VectorField(g, arrays["coeffs"])
    if kind == "trajectory":
        diag = {k: np.asarray(v) if isinstance(v, list) else v for k, v in header["diagnostics"].items()}
        return Trajectory(g, np.asarray(header["times"]), arrays["states"], arrays.get("pressures"),
                          arrays.get("rates"), header["layout"], diag)
    raise CheckpointError(f"{path}: unknown kind {kind!r}")
