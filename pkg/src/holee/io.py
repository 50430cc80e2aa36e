"""CSV and JSON formats used by the command-line tools.

All CSVs are comma separated with a required header and dot decimals.
Floats are written with ``repr`` so files round-trip bit for bit.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .volstruct import CoarseVolMatrix


def fmt(x) -> str:
    return repr(float(x))


def read_table(path, required: list[str], prefix: str | None = None) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and ``(line number, fields)`` rows of a CSV file.

    ``required`` columns must appear in order at the start of the header;
    with ``prefix`` every further column must start with it.
    """
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError(f"{path}: empty file, expected header {','.join(required)}") from None
    for i, name in enumerate(required):
        if i >= len(header) or header[i] != name:
            raise ValidationError(f"{path}:1: missing column {name!r} (header is {','.join(header)})")
    if prefix is not None:
        for name in header[len(required) :]:
            if not name.startswith(prefix):
                raise ValidationError(f"{path}:1: unexpected column {name!r}, expected {prefix}<i>")
    elif len(header) != len(required):
        raise ValidationError(f"{path}:1: expected columns {','.join(required)}, got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append((lineno, [c.strip() for c in row]))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return header, rows


def _floats(path, lineno, fields) -> list[float]:
    out = []
    for f in fields:
        try:
            x = float(f)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: not a number: {f!r}") from None
        if not np.isfinite(x):
            raise ValidationError(f"{path}:{lineno}: non-finite value {f!r}")
        out.append(x)
    return out


def read_vol_csv(path) -> CoarseVolMatrix:
    """``tenor,mu,sigma1..sigman``; one row per tenor.

    Row ``i >= 2`` holds bucket ``(T_{i-1}, T_i]``.  The first row anchors
    ``T_1`` and must repeat the values of the first bucket.
    """
    header, rows = read_table(path, ["tenor", "mu"], prefix="sigma")
    if len(header) < 3:
        raise ValidationError(f"{path}:1: missing column 'sigma1'")
    for i, name in enumerate(header[2:], start=1):
        if name != f"sigma{i}":
            raise ValidationError(f"{path}:1: expected column 'sigma{i}', got {name!r}")
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least two tenor rows")
    data = np.array([_floats(path, ln, r) for ln, r in rows])
    if not np.array_equal(data[0, 1:], data[1, 1:]):
        raise ValidationError(f"{path}:{rows[0][0]}: anchor row must repeat the first bucket's values")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ValidationError(f"{path}: tenors must be strictly increasing")
    return CoarseVolMatrix(data[:, 0], data[1:, 2:], data[1:, 1])


def write_vol_csv(c: CoarseVolMatrix) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["tenor", "mu"] + [f"sigma{j + 1}" for j in range(c.n)])
    for i, T in enumerate(c.tenors):
        b = max(i - 1, 0)
        w.writerow([fmt(T), fmt(c.mu[b])] + [fmt(x) for x in c.sigma[b]])
    return out.getvalue()


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray]:
    _, rows = read_table(path, ["T", "F0"])
    data = np.array([_floats(path, ln, r) for ln, r in rows])
    return data[:, 0], data[:, 1]


def read_cashflow_csv(path) -> tuple[np.ndarray, np.ndarray]:
    _, rows = read_table(path, ["T", "amount"])
    data = np.array([_floats(path, ln, r) for ln, r in rows])
    return data[:, 0], data[:, 1]


def read_history_csv(path) -> tuple[list[_dt.date], np.ndarray]:
    """Dates and bucket-forward levels; observations must be equally spaced."""
    header, rows = read_table(path, ["date"], prefix="F_")
    if len(header) < 2:
        raise ValidationError(f"{path}:1: missing column 'F_1'")
    dates, levels = [], []
    for lineno, r in rows:
        try:
            dates.append(_dt.date.fromisoformat(r[0]))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: not an ISO-8601 date: {r[0]!r}") from None
        levels.append(_floats(path, lineno, r[1:]))
    gaps = {(b - a).days for a, b in zip(dates, dates[1:])}
    if len(gaps) > 1 or (gaps and min(gaps) <= 0):
        raise ValidationError(f"{path}: observations must be equally spaced and increasing, found gaps {sorted(gaps)} days")
    return dates, np.array(levels)


def write_history_csv(dates, levels) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["date"] + [f"F_{i + 1}" for i in range(levels.shape[1])])
    for d, row in zip(dates, levels):
        w.writerow([d.isoformat()] + [fmt(x) for x in row])
    return out.getvalue()


def write_rows(header: list[str], rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return out.getvalue()


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
