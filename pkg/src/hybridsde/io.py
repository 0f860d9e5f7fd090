"""CSV / JSON serialization with locale-free, round-trip exact floats."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__


def fmt(v) -> str:
    """17 significant digits: enough to reproduce any double bit for bit."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8", newline="")


def path_rows(record):
    for t, x, k in zip(record.times, record.xs, record.ks):
        yield [t, *x, k]


def path_header(dim: int):
    return ["t"] + [f"x_{i + 1}" for i in range(dim)] + ["k"]


def path_csv_text(record) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(path_header(record.xs.shape[1]))
    for row in path_rows(record):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def path_sidecar(record, extra: dict | None = None) -> dict:
    doc = {
        "version": __version__,
        "termination": record.termination,
        "seed_lineage": record.seed_lineage,
        "config": record.config,
        "switches": [e.as_dict() for e in record.switches],
        "jumps": [{"time": j.time, "mark": list(j.mark), "displacement": list(j.displacement)}
                  for j in record.jumps],
    }
    if extra:
        doc.update(extra)
    return doc


def write_path_record(record, stem, extra: dict | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (t, x_1..x_d, k) and ``<stem>.json`` (events, seeds, config)."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    csv_path.write_text(path_csv_text(record), encoding="utf-8", newline="")
    write_json(json_path, path_sidecar(record, extra))
    return csv_path, json_path
