"""CSV reading and writing of experimental data.

Recognized columns: ``y``, ``d``, ``stratum``, ``pair``, ``cluster``,
``cluster_size`` and covariates ``x1 .. xk``; others are ignored. Files are
UTF-8 and comma separated with ``.`` as decimal point. Floats are written
with :func:`repr` so a write/read round trip is exact.
"""
from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .model import ClusterSample, Sample

COVARIATE = re.compile(r"^x([1-9][0-9]*)$")


def read_table(path) -> tuple[list[str], list[dict[str, str]]]:
    """Header and rows of a CSV file, values left as strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise DataError(f"{path}: missing header row")
        header = [h.strip() for h in reader.fieldnames]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        rows = []
        for r, raw in enumerate(reader, start=1):
            if None in raw:
                raise DataError(f"row {r}: more fields than header columns")
            rows.append({h.strip(): (v or "").strip() for h, v in raw.items()})
    return header, rows


def covariate_columns(header: Sequence[str]) -> list[str]:
    cols = [h for h in header if COVARIATE.match(h)]
    return sorted(cols, key=lambda h: int(COVARIATE.match(h).group(1)))


def _number(rows, col, kind=float, required=True):
    out = []
    for r, row in enumerate(rows, start=1):
        v = row.get(col, "")
        if v == "":
            if required:
                raise DataError(f"row {r}, column {col}: missing value")
            out.append(np.nan)
            continue
        try:
            x = float(v)
        except ValueError:
            raise DataError(f"row {r}, column {col}: not a number: {v!r}") from None
        if kind is int:
            if not np.isfinite(x) or x != round(x):
                raise DataError(f"row {r}, column {col}: not an integer: {v!r}")
            x = int(x)
        elif not np.isfinite(x):
            raise DataError(f"row {r}, column {col}: not a finite number: {v!r}")
        out.append(x)
    return out


def treatment_column(rows) -> np.ndarray:
    d = _number(rows, "d")
    for r, v in enumerate(d, start=1):
        if v not in (0.0, 1.0):
            raise DataError(f"row {r}, column d: treatment must be 0 or 1, got {rows[r - 1]['d']!r}")
    return np.array(d, dtype=np.int64)


def rows_to_sample(header, rows, require_y: bool = True):
    """Build a :class:`Sample`, or a :class:`ClusterSample` when a ``cluster`` column is present."""
    for col in (["y"] if require_y else []) + ["d"]:
        if col not in header:
            raise DataError(f"missing required column {col!r}")
    if not rows:
        raise DataError("no data rows")
    y = np.array(_number(rows, "y"), dtype=float) if "y" in header else np.full(len(rows), np.nan)
    d = treatment_column(rows)
    stratum = None
    if "stratum" in header:
        stratum = [row["stratum"] for row in rows]
        for r, s in enumerate(stratum, start=1):
            if s == "":
                raise DataError(f"row {r}, column stratum: missing value")
    if "cluster" in header:
        cluster = _number(rows, "cluster", int)
        size = _number(rows, "cluster_size", int) if "cluster_size" in header else None
        return ClusterSample.from_rows(cluster, y, d, size=size, stratum=stratum)
    xcols = covariate_columns(header)
    x = np.column_stack([_number(rows, c) for c in xcols]) if xcols else None
    pair = _number(rows, "pair", int) if "pair" in header else None
    return Sample(y, d, x, stratum=stratum, pair=pair)


def read_sample(path, require_y: bool = True):
    """Read a data file into a :class:`Sample` or, with a ``cluster`` column, a :class:`ClusterSample`.

    Raises
    ------
    DataError
        Missing required column, non-binary ``d``, or a non-numeric field
        (the message names the row, counted from 1 after the header, and the
        column).
    ValidationError
        Inconsistent per-cluster values; the message names the cluster.
    """
    header, rows = read_table(path)
    return rows_to_sample(header, rows, require_y)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path, header: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h, "")) for h in header])


def write_sample(path, data) -> None:
    """Write a :class:`Sample` or :class:`ClusterSample` in the format :func:`read_sample` reads."""
    if isinstance(data, ClusterSample):
        g = data.member_of
        cols = {"y": data.y, "d": data.d[g], "cluster": data.cluster_id[g]}
        if data.size is not None:
            cols["cluster_size"] = data.size[g].astype(np.int64)
        if data.stratum is not None:
            cols["stratum"] = data.stratum[g]
    else:
        cols = {"y": data.y, "d": data.d}
        for name in ("stratum", "pair", "cluster"):
            if getattr(data, name) is not None:
                cols[name] = getattr(data, name)
        for j in range(data.k):
            cols[f"x{j + 1}"] = data.x[:, j]
    header = list(cols)
    n = len(cols["y"])
    write_table(Path(path), header, [{h: cols[h][i] for h in header} for i in range(n)])
