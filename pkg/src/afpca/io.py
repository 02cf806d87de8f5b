"""Long-format CSV reading/writing and bit-stable number formatting."""

import csv
import json
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .data import FunctionalDataset
from .exceptions import CsvParseError, DataValidationError, DuplicateAbscissaError, SchemaError
from .simulate import format_value, sanitize

NA = "NA"


def _read_rows(path, required: Sequence[str]):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(required)}") from None
        names = [h.strip().lower() for h in header]
        cols = {}
        for name in required:
            if name not in names:
                raise SchemaError(f"{path}: missing required column '{name}'")
            cols[name] = names.index(name)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise CsvParseError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            rows.append((lineno, {name: row[idx].strip() for name, idx in cols.items()}))
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    return rows


def _number(text: str, name: str, lineno: int, path) -> float:
    if text == "":
        raise CsvParseError(f"{path}: row {lineno}: missing value in column '{name}'")
    try:
        value = float(text)
    except ValueError:
        raise CsvParseError(f"{path}: row {lineno}: non-numeric value {text!r} in column '{name}'") from None
    if not np.isfinite(value):
        raise CsvParseError(f"{path}: row {lineno}: non-finite value {text!r} in column '{name}'")
    return value


def ingest_csv(path) -> FunctionalDataset:
    """Read a ``subject_id,t,y`` long-format table.

    Subjects keep the order of first appearance; each subject's rows are
    stably sorted by ``t``. The domain is the range of all abscissae.
    """
    groups: Dict[str, List] = {}
    for lineno, rec in _read_rows(path, ("subject_id", "t", "y")):
        sid = rec["subject_id"]
        if sid == "":
            raise CsvParseError(f"{path}: row {lineno}: missing subject_id")
        t = _number(rec["t"], "t", lineno, path)
        y = _number(rec["y"], "y", lineno, path)
        groups.setdefault(sid, []).append((t, y))
    ids, ts, ys = [], [], []
    for sid, pairs in groups.items():
        arr = np.array(pairs, dtype=float)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        if np.any(np.diff(arr[:, 0]) == 0):
            dup = arr[:-1, 0][np.diff(arr[:, 0]) == 0][0]
            raise DuplicateAbscissaError(f"{path}: subject {sid!r} has duplicate t={dup!r}")
        ids.append(sid)
        ts.append(arr[:, 0])
        ys.append(arr[:, 1])
    return FunctionalDataset(ts, ys, ids=ids)


def read_xy_csv(path):
    """Read a ``t,y`` table for scatterplot smoothing."""
    rows = _read_rows(path, ("t", "y"))
    t = np.array([_number(r["t"], "t", n, path) for n, r in rows])
    y = np.array([_number(r["y"], "y", n, path) for n, r in rows])
    return t, y


def write_table(path, header: Sequence[str], rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_csv(dataset: FunctionalDataset, path) -> None:
    """Write a dataset in the ``subject_id,t,y`` layout read by :func:`ingest_csv`."""
    write_table(
        path,
        ("subject_id", "t", "y"),
        ((sid, t, y) for sid, ts, ys in zip(dataset.ids, dataset.t, dataset.y) for t, y in zip(ts, ys)),
    )


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(sanitize(payload), indent=2, allow_nan=False) + "\n", encoding="utf-8")
