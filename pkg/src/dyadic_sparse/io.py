"""Plain-text serialization: grid functions, shifts, collections, zonotopes and reports.

Floats are written with 17 significant digits, so every file round-trips bit-exactly.
Headers are single ``#`` lines of ``key=value`` pairs.
"""
from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .convex import Zonotope
from .dyadic import DyadicCube, GridFunction
from .shift import A2Certificate, DyadicShift, ShiftKernel


def fmt(x) -> str:
    """17-significant-digit decimal for floats, plain ``str`` otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return format(x, ".17g")
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def _header(kind: str, **fields) -> str:
    return "# " + " ".join([kind] + [f"{k}={fmt(v)}" for k, v in fields.items()]) + "\n"


def _parse_header(line: str, kind: str) -> dict:
    parts = line.lstrip("#").split()
    if not parts or parts[0] != kind:
        raise ValueError(f"expected a {kind!r} header, got {line.strip()!r}")
    return dict(p.split("=", 1) for p in parts[1:])


def _rows(text: str) -> list[list[str]]:
    return [r for r in csv.reader(io.StringIO(text)) if r]


# -- grid functions ------------------------------------------------------------

def dumps_grid(f: GridFunction) -> str:
    out = [_header("grid", d=f.d, n=f.n, L=f.L)]
    out += [",".join(fmt(v) for v in row) + "\n" for row in f.flat()]
    return "".join(out)


def loads_grid(text: str) -> GridFunction:
    first, rest = text.split("\n", 1)
    h = _parse_header(first, "grid")
    d, n, L = int(h["d"]), int(h["n"]), int(h["L"])
    flat = np.array([[float(v) for v in r] for r in _rows(rest)], dtype=float).reshape(-1, n)
    if flat.shape[0] != 1 << (d * L):
        raise ValueError(f"expected {1 << (d * L)} cells, got {flat.shape[0]}")
    return GridFunction.from_flat(flat, d, L)


# -- shifts --------------------------------------------------------------------

def dumps_shift(S: DyadicShift) -> str:
    c = S.certificate
    out = [_header("shift", d=S.d, L=S.L, rho=S.rho, m1=S.m1, m2=S.m2, strategy=c.strategy,
                   factor=float(c.factor), bound=float(c.bound))]
    for Q, k in S.kernels.items():
        out.append(",".join([str(Q.depth)] + [str(i) for i in Q.index]
                            + [fmt(v) for v in k.block.ravel()]) + "\n")
    return "".join(out)


def loads_shift(text: str) -> DyadicShift:
    first, rest = text.split("\n", 1)
    h = _parse_header(first, "shift")
    d, L, m1, m2 = (int(h[k]) for k in ("d", "L", "m1", "m2"))
    shape = (1 << (d * m1), 1 << (d * m2))
    kernels = []
    for r in _rows(rest):
        Q = DyadicCube(int(r[0]), tuple(int(i) for i in r[1:1 + d]))
        block = np.array([float(v) for v in r[1 + d:]]).reshape(shape)
        kernels.append(ShiftKernel(Q, m1, m2, block))
    cert = A2Certificate(h["strategy"], float(h["factor"]), float(h["bound"]))
    return DyadicShift(d, L, m1, m2, kernels, cert)


# -- collections and bodies ------------------------------------------------------

def dumps_collection(S) -> str:
    """Rows ``depth, index..., witness cells |E_Q|, |E_Q| measure, layer``."""
    wit = S.witness_cells()
    cell = 2.0 ** (-S.d * S.L)
    out = [_header("collection", d=S.d, L=S.L)]
    for Q in S.cubes:
        out.append(",".join([str(Q.depth)] + [str(i) for i in Q.index]
                            + [str(wit[Q]), fmt(wit[Q] * cell), str(S.layer.get(Q, 0))]) + "\n")
    return "".join(out)


def load_collection_cubes(text: str) -> list[DyadicCube]:
    first, rest = text.split("\n", 1)
    d = int(_parse_header(first, "collection")["d"])
    return [DyadicCube(int(r[0]), tuple(int(i) for i in r[1:1 + d])) for r in _rows(rest)]


def dumps_zonotope(K: Zonotope) -> str:
    out = [_header("zonotope", n=K.n)]
    out += [",".join(fmt(v) for v in g) + "\n" for g in K.generators]
    return "".join(out)


def loads_zonotope(text: str) -> Zonotope:
    first, rest = text.split("\n", 1)
    n = int(_parse_header(first, "zonotope")["n"])
    G = np.array([[float(v) for v in r] for r in _rows(rest)], dtype=float).reshape(-1, n)
    return Zonotope.from_generators(G, n)


# -- reports -------------------------------------------------------------------

def write_csv(path: Path, rows: Iterable[dict], columns: list[str] | None = None) -> None:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])


def jsonable(x):
    """Plain JSON types for numpy scalars, cubes and non-finite floats."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (DyadicCube, Fraction)):
        return str(x)
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    return x


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_text(path) -> str:
    return Path(path).read_text()
