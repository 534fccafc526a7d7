"""Binary and CSV containers for lattice fields, path ensembles and report tables.

Binary layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
header, then float64 little-endian row-major columns in header order.
"""

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from critlab.grid import GridFunction, GridSpec

MAGIC = b"CRITLAB1"


class FormatError(ValueError):
    pass


def _write(path, header: dict, columns: dict):
    header = dict(header)
    header["columns"] = [{"name": k, "shape": list(np.shape(v))} for k, v in columns.items()]
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        for v in columns.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def _read(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise FormatError(f"{path}: not a critlab container")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        cols = {}
        for c in header["columns"]:
            shape = tuple(c["shape"])
            count = int(np.prod(shape)) if shape else 1
            cols[c["name"]] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
    return header, cols


def _grid_dict(g: GridSpec):
    return {"d": g.d, "L": g.L, "h": g.h, "t0": g.t0, "t1": g.t1, "tau": g.tau}


def save_field(path, f: GridFunction):
    _write(path, {"kind": "field", "grid": _grid_dict(f.grid), "rank": f.rank, "timed": f.timed,
                  "label": f.label}, {"values": f.values})


def load_field(path) -> GridFunction:
    h, c = _read(path)
    if h.get("kind") != "field":
        raise FormatError("container does not hold a field")
    return GridFunction(GridSpec(**h["grid"]), c["values"], h["rank"], h["timed"], h["label"])


def field_to_csv(path, f: GridFunction):
    """Long format: ``t`` (if timed), ``x1..xd``, then one column per component."""
    g = f.grid
    pts = g.mesh().reshape(-1, g.d)
    comp = f.values.reshape((g.nt if f.timed else 1, pts.shape[0], -1))
    names = (["t"] if f.timed else []) + [f"x{i + 1}" for i in range(g.d)] + [f"v{j}" for j in range(comp.shape[-1])]
    times = g.times() if f.timed else [None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for k, t in enumerate(times):
            for i, p in enumerate(pts):
                w.writerow(([repr(float(t))] if f.timed else []) + [repr(float(v)) for v in p]
                           + [repr(float(v)) for v in comp[k, i]])


def save_ensemble(path, ens):
    cols = {"x0": ens.x0, "X_T": ens.X_T, "diverged": ens.diverged.astype(float)}
    if ens.logw is not None:
        cols["logw"] = ens.logw
    if ens.paths is not None:
        cols["paths"] = ens.paths
    _write(path, dict(ens.header(), kind="ensemble"), cols)


def load_ensemble(path):
    from critlab.sde import PathEnsemble

    h, c = _read(path)
    if h.get("kind") != "ensemble":
        raise FormatError("container does not hold an ensemble")
    ens = PathEnsemble(h["n"], h["dt"], h["T"], h["d"], h["seed"], c["x0"], c["X_T"], t0=h["t0"],
                       substeps=h["substeps"], logw=c.get("logw"), diverged=c["diverged"].astype(bool),
                       paths=c.get("paths"))
    return ens


def ensemble_to_csv(path, ens):
    d = ens.d
    names = ["path"] + [f"X{i + 1}" for i in range(d)] + ["diverged"] + (["logw"] if ens.logw is not None else [])
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(ens.header(), sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(ens.n):
            row = [str(i)] + [repr(float(v)) for v in ens.X_T[i]] + [str(int(ens.diverged[i]))]
            if ens.logw is not None:
                row.append(repr(float(ens.logw[i])))
            w.writerow(row)


def plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _cell(v):
    if v is None:
        return None
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def canonical_rows(rows, columns=None):
    """Flat rows with an explicit, stable column order."""
    rows = [plain(r) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    return list(columns), [{c: _cell(r.get(c)) for c in columns} for r in rows]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(s):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_table_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_table_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        columns = next(rd, [])
        rows = [{c: _parse(v) for c, v in zip(columns, line)} for line in rd]
    return columns, rows


def dumps(obj) -> str:
    def default(o):
        raise TypeError(f"not serializable: {type(o)}")

    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return repr(o)
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, list):
            return [clean(v) for v in o]
        return o

    return json.dumps(clean(plain(obj)), indent=2, sort_keys=False, default=default) + "\n"


def sha256(path) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
