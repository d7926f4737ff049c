"""File formats: dated sample CSVs, classifier-history JSON, scenario configs.

Samples CSV::

    # reference_date=2017-01-28
    date,label,f1,f2,...
    0,1,0.061,0.079,...

Dates are integer days after the reference date. One file may hold several
dates. Histories are JSON with every real written to 17 significant digits,
so a write/read cycle returns the same doubles.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import (
    ArgumentError,
    ClassifierParams,
    DimensionError,
    LabeledDataset,
    PairHistory,
    SctError,
    TimedClassifier,
    canonical_pair,
)
from .scenario import ClassDriftSpec, ScenarioConfig


class FormatError(SctError, ValueError):
    """Malformed input file."""


REFERENCE_PREFIX = "# reference_date="


# --- numbers ---

def _real(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise FormatError(f"cannot serialize non-finite value {x}")
    text = format(x, ".17g")
    # keep reals recognizable as reals in JSON
    if all(ch not in text for ch in ".eEn"):
        text += ".0"
    return text


def _dump(obj, indent: int = 0) -> str:
    """JSON text with fixed 17-digit reals; dict key order is preserved."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _real(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_dump(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + _dump(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return _dump(obj) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


# --- samples ---

def write_samples(path, datasets: Sequence[LabeledDataset], reference_date: str) -> None:
    if not datasets:
        raise ArgumentError("nothing to write")
    m = datasets[0].m
    if any(d.m != m for d in datasets):
        raise DimensionError("all datasets in one file must share the feature dimension")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{REFERENCE_PREFIX}{reference_date}\n")
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["date", "label"] + [f"f{j + 1}" for j in range(m)])
        for d in datasets:
            for x, label in zip(d.features, d.labels):
                out.writerow([d.date, int(label)] + [repr(float(v)) for v in x])


def read_samples(path) -> tuple[list, Optional[str]]:
    """Return ``(datasets sorted by date, reference date or None)``."""
    reference = None
    rows_by_date: dict = {}
    with open(path, encoding="utf-8", newline="") as fh:
        lines = iter(fh)
        header = None
        for line in lines:
            if line.startswith("#"):
                if line.startswith(REFERENCE_PREFIX):
                    reference = line[len(REFERENCE_PREFIX):].strip()
                continue
            if line.strip():
                header = next(csv.reader([line]))
                break
        if header is None:
            raise FormatError(f"{path}: no header row")
        if header[:2] != ["date", "label"] or len(header) < 3:
            raise FormatError(f"{path}: header must be date,label,f1,...,fm")
        m = len(header) - 2
        for lineno, rec in enumerate(csv.reader(lines), start=2):
            if not rec or rec[0].startswith("#"):
                continue
            if len(rec) != m + 2:
                raise FormatError(f"{path}:{lineno}: expected {m + 2} fields, got {len(rec)}")
            try:
                date, label = int(rec[0]), int(rec[1])
                x = [float(v) for v in rec[2:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            rows_by_date.setdefault(date, ([], []))
            rows_by_date[date][0].append(x)
            rows_by_date[date][1].append(label)
    if not rows_by_date:
        raise FormatError(f"{path}: no samples")
    data = [LabeledDataset(np.array(f), np.array(l), d) for d, (f, l) in sorted(rows_by_date.items())]
    return data, reference


def read_many(paths: Iterable) -> tuple[list, Optional[str]]:
    """Merge several sample files; rows of the same date are concatenated."""
    merged: dict = {}
    reference = None
    for path in paths:
        data, ref = read_samples(path)
        if ref is not None:
            if reference is not None and ref != reference:
                raise FormatError(f"{path}: reference date {ref} differs from {reference}")
            reference = ref
        for d in data:
            merged.setdefault(d.date, []).append(d)
    out = []
    for date, parts in sorted(merged.items()):
        if len({p.m for p in parts}) != 1:
            raise DimensionError(f"date {date}: files disagree on the feature dimension")
        out.append(LabeledDataset(np.vstack([p.features for p in parts]),
                                  np.concatenate([p.labels for p in parts]), date))
    return out, reference


# --- classifier histories ---

def histories_to_dict(histories: Mapping[tuple, PairHistory]) -> dict:
    pairs = [histories[k] for k in sorted(histories)]
    dims = {h.m for h in pairs if h.m is not None}
    if len(dims) > 1:
        raise DimensionError(f"histories mix feature dimensions {sorted(dims)}")
    return {
        "m": dims.pop() if dims else 0,
        "pairs": [
            {
                "pos": h.pos_class,
                "neg": h.neg_class,
                "entries": [
                    {"date": e.date, "w": [float(v) for v in e.params.w], "b": float(e.params.b),
                     "accuracy": e.accuracy}
                    for e in h.entries
                ],
            }
            for h in pairs
        ],
    }


def histories_from_dict(doc: Mapping, window: Optional[int] = None) -> dict:
    """Rebuild pair histories; ``window`` defaults to each pair's entry count."""
    try:
        m = int(doc["m"])
        out = {}
        for rec in doc["pairs"]:
            pos, neg = int(rec["pos"]), int(rec["neg"])
            if (pos, neg) != canonical_pair(pos, neg):
                raise FormatError(f"pair ({pos}, {neg}) must list the smaller id as pos")
            entries = []
            for e in rec["entries"]:
                w = [float(v) for v in e["w"]]
                if len(w) != m:
                    raise DimensionError(f"pair ({pos}, {neg}) date {e['date']}: w has {len(w)} values, m={m}")
                acc = e.get("accuracy")
                entries.append(TimedClassifier(ClassifierParams(w, float(e["b"])), int(e["date"]),
                                               None if acc is None else float(acc)))
            win = window if window is not None else max(1, len(entries))
            out[(pos, neg)] = PairHistory(pos, neg, tuple(entries[-win:]), win)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"history document is missing or mistypes {exc}") from exc
    return out


def write_histories(path, histories: Mapping[tuple, PairHistory]) -> None:
    write_json(path, histories_to_dict(histories))


def read_histories(path, window: Optional[int] = None) -> dict:
    return histories_from_dict(read_json(path), window)


# --- scenario configs ---

def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "classes": [
            {
                "class_id": c.class_id,
                "mean0": c.mean0.tolist(),
                "covariance": c.covariance.tolist(),
                "drift": {"kind": c.kind, "terms": [v.tolist() for v in c.drift]},
                "samples": c.samples,
            }
            for c in cfg.classes
        ],
        "dates": list(cfg.dates),
        "seed": cfg.seed,
        "reference_date": cfg.reference_date,
    }


def scenario_from_dict(doc: Mapping) -> ScenarioConfig:
    """``drift`` is ``{"kind": "none"|"linear"|"quadratic", "terms": [...]}``
    or just the list of terms."""
    try:
        classes = []
        for c in doc["classes"]:
            drift = c.get("drift", [])
            if isinstance(drift, Mapping):
                kind = drift.get("kind", "none")
                terms = drift.get("terms", [])
                expected = {"none": 0, "linear": 1, "quadratic": 2}.get(kind)
                if expected is None:
                    raise FormatError(f"class {c['class_id']}: unknown drift kind {kind!r}")
                if len(terms) != expected:
                    raise FormatError(f"class {c['class_id']}: {kind} drift needs {expected} terms, got {len(terms)}")
                drift = terms
            classes.append(ClassDriftSpec(int(c["class_id"]), c["mean0"], c["covariance"],
                                          tuple(drift), int(c.get("samples", 200))))
        return ScenarioConfig(tuple(classes), tuple(doc["dates"]), int(doc.get("seed", 0)),
                              str(doc.get("reference_date", "1970-01-01")))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"scenario config is missing or mistypes {exc}") from exc
