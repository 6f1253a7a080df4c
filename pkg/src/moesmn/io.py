"""Dataset CSV format.

Columns: ``y`` (blank allowed when censored), ``cens`` (0/1), ``c1``, ``c2``
(numbers or ``-inf``/``inf``, required when ``cens=1``), then ``x1..`` and
``r1..``. Intercepts are implicit. An optional ``label`` column carries true
component labels for simulated data.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Optional

import numpy as np

from .model import CensoredData


class DatasetFormatError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


_X = re.compile(r"^x(\d+)$")
_R = re.compile(r"^r(\d+)$")


def _number(text, line, col, allow_blank=False):
    t = text.strip()
    if t == "":
        if allow_blank:
            return np.nan
        raise DatasetFormatError(f"missing value in column {col!r}", line)
    low = t.lower()
    if low in ("inf", "+inf"):
        return np.inf
    if low == "-inf":
        return -np.inf
    try:
        v = float(t)
    except ValueError:
        raise DatasetFormatError(f"cannot parse {t!r} in column {col!r}", line) from None
    if np.isnan(v):
        raise DatasetFormatError(f"nan in column {col!r}", line)
    return v


def _indexed(header, pattern):
    cols = sorted(((int(m.group(1)), h) for h in header if (m := pattern.match(h))))
    if [k for k, _ in cols] != list(range(1, len(cols) + 1)):
        raise DatasetFormatError(f"columns {[h for _, h in cols]} are not numbered 1..k", 1)
    return [h for _, h in cols]


def read_dataset(path, with_labels: bool = False):
    """Parse a dataset CSV; returns ``CensoredData`` (and labels if requested)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError("empty file", 1) from None
        for req in ("y", "cens"):
            if req not in header:
                raise DatasetFormatError(f"missing required column {req!r}", 1)
        xcols, rcols = _indexed(header, _X), _indexed(header, _R)
        pos = {h: k for k, h in enumerate(header)}
        w, rho, c1, c2, X, R, lab = [], [], [], [], [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetFormatError(f"expected {len(header)} fields, got {len(row)}", line)
            cell = lambda h: row[pos[h]] if h in pos else ""
            flag = cell("cens").strip()
            if flag not in ("0", "1"):
                raise DatasetFormatError(f"cens must be 0 or 1, got {flag!r}", line)
            if flag == "1":
                a = _number(cell("c1"), line, "c1")
                b = _number(cell("c2"), line, "c2")
                if not a < b:
                    raise DatasetFormatError(f"censored row needs c1 < c2, got ({a}, {b})", line)
                w.append(_number(cell("y"), line, "y", allow_blank=True))
                rho.append(True)
                c1.append(a)
                c2.append(b)
            else:
                yv = _number(cell("y"), line, "y")
                if not np.isfinite(yv):
                    raise DatasetFormatError("uncensored y must be finite", line)
                w.append(yv)
                rho.append(False)
                c1.append(np.nan)
                c2.append(np.nan)
            X.append([1.0] + [_number(row[pos[h]], line, h) for h in xcols])
            R.append([1.0] + [_number(row[pos[h]], line, h) for h in rcols])
            if with_labels and "label" in pos:
                lab.append(int(row[pos["label"]]))
    if not w:
        raise DatasetFormatError("no data rows")
    rho = np.array(rho)
    w = np.where(rho, np.nan, np.array(w))
    data = CensoredData(w, rho, np.array(c1), np.array(c2), np.array(X), np.array(R))
    if with_labels:
        return data, (np.array(lab) if lab else None)
    return data


def _fmt(v):
    if np.isnan(v):
        return ""
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def write_dataset(path, data: CensoredData, labels: Optional[np.ndarray] = None):
    """Write ``data``; floats are written with ``repr`` so a re-read is bit-exact."""
    header = ["y", "cens", "c1", "c2"]
    header += [f"x{k}" for k in range(1, data.p)] + [f"r{k}" for k in range(1, data.q)]
    if labels is not None:
        header.append("label")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for i in range(data.n):
            row = [_fmt(data.w[i]), "1" if data.rho[i] else "0",
                   _fmt(data.c1[i]) if data.rho[i] else "", _fmt(data.c2[i]) if data.rho[i] else ""]
            row += [_fmt(v) for v in data.X[i, 1:]] + [_fmt(v) for v in data.R[i, 1:]]
            if labels is not None:
                row.append(str(int(labels[i])))
            wr.writerow(row)
