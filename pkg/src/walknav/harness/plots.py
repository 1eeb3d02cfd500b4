"""Plot-ready text series from a metrics CSV; nothing is rendered here."""

import csv
import math
import os

from walknav.harness.config import ConfigError

SERIES = {"return": "return_mean", "length": "length_mean"}
X_COLUMN = "env_steps"


class MetricsError(ConfigError):
    pass


def read_metrics(path):
    """Rows of a metrics CSV as float dicts; any malformed line is reported by number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        missing = [c for c in (X_COLUMN, *SERIES.values()) if c not in header]
        if missing:
            raise MetricsError(f"line 1: missing column(s) {', '.join(missing)}")
        rows, prev = [], -math.inf
        for fields in reader:
            lineno = reader.line_num
            if not fields:
                continue
            if len(fields) != len(header):
                raise MetricsError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
            try:
                row = {k: float(v) for k, v in zip(header, fields)}
            except ValueError as exc:
                raise MetricsError(f"line {lineno}: {exc}") from None
            if not row[X_COLUMN] > prev:
                raise MetricsError(f"line {lineno}: {X_COLUMN} is not increasing")
            prev = row[X_COLUMN]
            rows.append(row)
    return rows


def downsample(xs, ys, factor):
    """Average consecutive blocks of ``factor`` points; NaN y values are skipped."""
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    pts = [(x, y) for x, y in zip(xs, ys) if not math.isnan(y)]
    out = []
    for i in range(0, len(pts), factor):
        block = pts[i:i + factor]
        out.append((sum(p[0] for p in block) / len(block), sum(p[1] for p in block) / len(block)))
    return out


def plot_data(metrics_path, out_dir=None, factor=10):
    """Write ``<name>.dat`` files (two whitespace-separated columns) per series.

    Returns {name: path}.  Files go next to the metrics CSV unless ``out_dir``
    is given.
    """
    rows = read_metrics(metrics_path)
    out_dir = out_dir if out_dir is not None else os.path.dirname(os.path.abspath(metrics_path))
    os.makedirs(out_dir, exist_ok=True)
    xs = [r[X_COLUMN] for r in rows]
    paths = {}
    for name, column in SERIES.items():
        path = os.path.join(out_dir, f"{name}.dat")
        with open(path, "w") as fh:
            for x, y in downsample(xs, [r[column] for r in rows], factor):
                fh.write(f"{x!r} {y!r}\n")
        paths[name] = path
    return paths
