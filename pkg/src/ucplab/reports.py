"""Deterministic report serialisation: JSON, CSV and two-column gnuplot data.

JSON is emitted by a small recursive writer rather than :func:`json.dumps`
because floats must carry exactly 17 significant digits. Non-finite floats
become the strings ``"inf"``, ``"-inf"`` and ``"nan"``. Keys are sorted, so equal
reports give byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import InvalidParameter, ReportIOError

SCHEMA = "ucplab/1"
FORMATS = ("json", "csv", "gnuplot")


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_plain(obj):
    """Reduce reports, numpy values and containers to JSON-ready Python values."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if hasattr(obj, "to_dict"):
        return to_plain(obj.to_dict())
    if hasattr(obj, "describe") and callable(obj.describe):
        return to_plain(obj.describe())
    if dataclasses.is_dataclass(obj):
        return to_plain(dataclasses.asdict(obj))
    if hasattr(obj, "_asdict"):
        return to_plain(obj._asdict())
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    raise InvalidParameter(f"cannot serialise object of type {type(obj).__name__}")


def _emit(obj, indent: int, level: int, out: list):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        s = fmt_float(obj)
        out.append(s if math.isfinite(obj) else json.dumps(s))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, k in enumerate(sorted(obj)):
            out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
            _emit(obj[k], indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            # numeric arrays stay on one line
            out.append("[")
            for i, v in enumerate(obj):
                _emit(v, indent, level + 1, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise InvalidParameter(f"unexpected value {obj!r} in plain tree")


def dumps(obj, indent: int = 2) -> str:
    out: list = []
    _emit(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def _write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_json(path, payload) -> Path:
    path = Path(path)
    _write_text(path, dumps(payload))
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns: Iterable[str], rows: Iterable, comments: Optional[list] = None) -> Path:
    """CSV with a header row; ``comments`` become leading ``#`` lines."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for line in comments or []:
                fh.write(f"# {line}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(list(columns))
            for row in rows:
                wr.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_series(path, x, y, label: str = "") -> Path:
    """Two whitespace-separated columns, ready for gnuplot."""
    lines = [f"# {label}"] if label else []
    lines += [f"{fmt_float(a)} {fmt_float(b)}" for a, b in zip(x, y)]
    path = Path(path)
    _write_text(path, "\n".join(lines) + "\n")
    return path


def report_payload(report, experiment: str, extra: Optional[dict] = None) -> dict:
    body = to_plain(report)
    if not isinstance(body, dict):
        body = {"value": body}
    payload = {"schema": SCHEMA, "experiment": experiment, "report": body}
    if extra:
        payload.update(to_plain(extra))
    return payload


def emit_report(report, formats, out_dir, stem: str, experiment: str = "",
                extra: Optional[dict] = None) -> list:
    """Write ``report`` in the requested formats; JSON is always written.

    CSV goes out when the report exposes ``table()``; gnuplot files when it
    exposes ``series()`` and ``"gnuplot"`` is requested. Returns the paths.
    """
    formats = set(formats) | {"json"}
    bad = formats - set(FORMATS)
    if bad:
        raise InvalidParameter(f"unknown output formats {sorted(bad)}; expected a subset of {list(FORMATS)}")
    out_dir = Path(out_dir)
    paths = [write_json(out_dir / f"{stem}.json", report_payload(report, experiment or stem, extra))]
    if "csv" in formats and hasattr(report, "table"):
        tab = report.table()
        comments = tab[2] if len(tab) > 2 else None
        paths.append(write_csv(out_dir / f"{stem}.csv", tab[0], tab[1], comments))
    if "gnuplot" in formats and hasattr(report, "series"):
        for name, (x, y) in sorted(report.series().items()):
            paths.append(write_series(out_dir / f"{stem}_{name}.dat", x, y, name))
    return [str(p) for p in paths]


def output_root(default: str = ".") -> Path:
    """Output root, overridable with ``UCPLAB_OUTPUT_ROOT``."""
    return Path(os.environ.get("UCPLAB_OUTPUT_ROOT", default))
