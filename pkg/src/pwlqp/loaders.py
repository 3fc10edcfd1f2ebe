"""Dataset loaders and report serialization for the command line.

Formats: comma-separated returns (optional header, optional trailing
``index`` column holding the benchmark series) and svmlight/LIBSVM sparse
text with 1-based indices.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .models import LabeledDataset, ReturnsDataset
from .pmm import SolveReport

__all__ = [
    "DatasetError",
    "load_returns_csv",
    "load_svmlight",
    "save_svmlight",
    "report_to_json",
    "report_from_json",
]

INDEX_COLUMN = "index"


class DatasetError(ValueError):
    """A malformed input file; the message names the offending line."""


def _parse_float(cell: str, path, lineno: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DatasetError(f"{path}:{lineno}: column {col + 1}: non-numeric cell {cell!r}") from None


def _is_numeric_row(row: list[str]) -> bool:
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True


def load_returns_csv(path: str | Path) -> ReturnsDataset:
    """Read weekly returns, one row per time point and one column per asset.

    A first row that does not parse as numbers is taken as a header.  If
    the header's last column is named ``index`` that column is the
    benchmark series and the return floor is its mean.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [
            (i, [c.strip() for c in row])
            for i, row in enumerate(csv.reader(fh), start=1)
            if row and any(c.strip() for c in row)
        ]
    if not rows:
        raise DatasetError(f"{path}:1: empty file")
    header = None
    if not _is_numeric_row(rows[0][1]):
        header = rows[0][1]
        rows = rows[1:]
        if not rows:
            raise DatasetError(f"{path}:2: header but no data rows")
    width = len(header) if header is not None else len(rows[0][1])
    values = np.empty((len(rows), width))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
        for j, cell in enumerate(row):
            v = _parse_float(cell, path, lineno, j)
            if not math.isfinite(v):
                raise DatasetError(f"{path}:{lineno}: column {j + 1}: non-finite value {cell!r}")
            values[r, j] = v
    if header is not None and header[-1].lower() == INDEX_COLUMN:
        if width < 2:
            raise DatasetError(f"{path}:1: an index column needs at least one asset column")
        return ReturnsDataset(values[:, :-1], benchmark=float(values[:, -1].mean()))
    return ReturnsDataset(values)


def load_svmlight(path: str | Path, n_features: int | None = None, target: str = "regression") -> LabeledDataset:
    """Parse ``label idx:val ...`` lines; ``target="svm"`` requires labels in {-1, +1}.

    Comments after ``#`` and blank lines are ignored.  ``n_features``
    widens the matrix beyond the largest index seen.
    """
    path = Path(path)
    labels: list[float] = []
    indptr, indices, data = [0], [], []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            label = _parse_float(tokens[0], path, lineno, 0)
            if target == "svm" and label not in (-1.0, 1.0):
                raise DatasetError(f"{path}:{lineno}: SVM label must be -1 or +1, got {tokens[0]!r}")
            last = 0
            for pos, tok in enumerate(tokens[1:], start=1):
                idx_s, sep, val_s = tok.partition(":")
                if not sep or not idx_s or not val_s:
                    raise DatasetError(f"{path}:{lineno}: malformed pair {tok!r}")
                try:
                    idx = int(idx_s)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: malformed index in {tok!r}") from None
                if idx < 1:
                    raise DatasetError(f"{path}:{lineno}: indices are 1-based, got {idx}")
                if idx <= last:
                    raise DatasetError(f"{path}:{lineno}: indices must be strictly ascending ({idx} after {last})")
                last = idx
                indices.append(idx - 1)
                data.append(_parse_float(val_s, path, lineno, pos))
            labels.append(label)
            indptr.append(len(indices))
    if not labels:
        raise DatasetError(f"{path}:1: empty file")
    width = max(indices, default=-1) + 1
    if n_features is not None:
        if n_features < width:
            raise DatasetError(f"{path}: n_features={n_features} but index {width} present")
        width = n_features
    X = sp.csr_matrix((data, indices, indptr), shape=(len(labels), width), dtype=float)
    return LabeledDataset(X, np.array(labels))


def save_svmlight(ds: LabeledDataset, path: str | Path) -> None:
    X = ds.features.tocsr()
    X.sort_indices()
    with Path(path).open("w") as fh:
        for i, label in enumerate(ds.targets):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            pairs = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]) if v != 0)
            fh.write(f"{float(label)!r} {pairs}".rstrip() + "\n")


def _finite_or_none(v: float):
    return v if math.isfinite(v) else None


def report_to_json(report: SolveReport, **extra) -> str:
    """Serialize every report field; non-finite numbers become null."""
    out = report.to_dict()
    out["residuals"] = [_finite_or_none(r) for r in out["residuals"]]
    out["objective"] = _finite_or_none(out["objective"])
    out.update(extra)
    return json.dumps(out, indent=2, sort_keys=True)


def report_from_json(text: str) -> SolveReport:
    d = json.loads(text)
    fields = {f for f in SolveReport.__dataclass_fields__}
    kw = {k: v for k, v in d.items() if k in fields}
    kw["residuals"] = tuple(math.inf if r is None else float(r) for r in kw["residuals"])
    kw["active_set_sizes"] = tuple(kw["active_set_sizes"])
    if kw.get("objective") is None:
        kw["objective"] = math.nan
    return SolveReport(**kw)
