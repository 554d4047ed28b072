"""File formats: dataset CSV, flat key-value configs, atomic writes.

Datasets are plain CSV with a header row naming the input columns plus one
response column ``y``.  Configuration files are flat ``key = value`` lines
with ``#`` comments; input models use one line per variable, e.g.
``x1 = uniform(0, 2)``.
"""

from __future__ import annotations

import csv
import os
import re
import tempfile

import numpy as np

from .inputs import InputModel, Marginal

__all__ = [
    "atomic_write_text",
    "read_dataset_csv",
    "write_dataset_csv",
    "read_points_csv",
    "write_table_csv",
    "parse_flat_config",
    "parse_input_model",
    "format_input_model",
    "load_input_model",
]


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_float(token: str, path, line_no: int, column: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ValueError(
            f"{path}:{line_no}: column {column!r} has non-numeric value {token!r}"
        ) from None


def _read_csv_rows(path, required_columns):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a CSV header row") from None
        header = [h.strip() for h in header]
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise ValueError(f"{path}: missing required column(s) {missing}, have {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(
                [_parse_float(tok.strip(), path, line_no, header[j]) for j, tok in enumerate(row)]
            )
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def read_dataset_csv(path, input_model: InputModel):
    """(X, y) with columns reordered to the input-model convention."""
    header, data = _read_csv_rows(path, list(input_model.names) + ["y"])
    cols = [header.index(n) for n in input_model.names]
    return data[:, cols], data[:, header.index("y")]


def read_points_csv(path, input_model: InputModel) -> np.ndarray:
    header, data = _read_csv_rows(path, list(input_model.names))
    cols = [header.index(n) for n in input_model.names]
    return data[:, cols]


def _format_number(v) -> str:
    return repr(float(v))  # shortest string that round-trips


def write_table_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(_format_number(v) if isinstance(v, (int, float, np.floating)) else str(v) for v in row)
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_dataset_csv(path, names, X: np.ndarray, y: np.ndarray) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rows = [list(X[i]) + [float(y[i])] for i in range(X.shape[0])]
    write_table_csv(path, list(names) + ["y"], rows)


# ---------------------------------------------------------------------------
# flat key-value configuration
# ---------------------------------------------------------------------------


def parse_flat_config(text: str) -> dict[str, str]:
    """Ordered ``key = value`` pairs; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {line_no}: empty key")
        if key in out:
            raise ValueError(f"line {line_no}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


_MARGINAL_RE = re.compile(r"^(uniform|gaussian|lognormal)\s*\(\s*([^,]+)\s*,\s*([^)]+)\s*\)$")


def parse_marginal(spec: str) -> Marginal:
    m = _MARGINAL_RE.match(spec.strip())
    if not m:
        raise ValueError(
            f"cannot parse marginal {spec!r}; expected e.g. 'uniform(0, 2)', "
            "'gaussian(0.1, 0.016)' or 'lognormal(7.71, 1.0056)'"
        )
    kind, a, b = m.group(1), float(m.group(2)), float(m.group(3))
    return Marginal(kind, a, b)


def parse_input_model(text: str) -> InputModel:
    """One variable per line, in order: ``name = kind(par1, par2)``."""
    pairs = parse_flat_config(text)
    if not pairs:
        raise ValueError("input model file declares no variables")
    names = tuple(pairs.keys())
    marginals = tuple(parse_marginal(v) for v in pairs.values())
    return InputModel(marginals, names)


def format_input_model(input_model: InputModel) -> str:
    lines = [
        f"{name} = {m.kind}({_format_number(m.a)}, {_format_number(m.b)})"
        for name, m in zip(input_model.names, input_model.marginals)
    ]
    return "\n".join(lines) + "\n"


def load_input_model(path) -> InputModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_input_model(fh.read())
