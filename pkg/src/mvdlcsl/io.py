"""Dataset manifests, model persistence and plain-text exports.

File formats
------------
manifest (JSON)
    ``{"name": ..., "num_classes": c, "views": [paths...], "labels": path}``;
    relative paths resolve against the manifest's directory.
view CSV
    ``n`` rows (instances) x ``m_v`` comma-separated non-negative numbers, no header.
labels
    ``n`` lines, each an integer in ``[0, c)`` or -1 for unlabeled.
model (JSON)
    ``format_version``, dims, hyperparameters, fit metadata and every block
    as ``{"shape": [rows, cols], "data": [row-major values]}``.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, FormatVersionError, ValidationError
from .inference import discriminative_features
from .model import ALL_BLOCKS, SHARED_BLOCKS, FactorModel, MultiViewDataset

FORMAT_VERSION = 1
TRACE_HEADER = ["iteration", "total", "reconstruction", "orthogonality", "sparsity", "label_loss"]


def fmt(x: float) -> str:
    """Shortest text that round-trips a float (at most 17 significant digits)."""
    return repr(float(x))


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    num_classes: int
    views: tuple
    labels: str

    def __post_init__(self):
        if not self.views:
            raise ValidationError("a manifest needs at least one view")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise DataFormatError("manifest not found", path)
        try:
            raw = json.loads(path.read_text())
            base = path.parent
            return cls(
                name=str(raw.get("name", path.stem)),
                num_classes=int(raw["num_classes"]),
                views=tuple(str(base / p) for p in raw["views"]),
                labels=str(base / raw["labels"]),
            )
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad manifest field: {exc}", path) from exc


def _read_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path)
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataFormatError(f"not a number: {exc}", path, lineno) from exc
            if rows and len(vals) != len(rows[0]):
                raise DataFormatError(f"expected {len(rows[0])} columns, got {len(vals)}", path, lineno)
            for col, x in enumerate(vals):
                if not math.isfinite(x):
                    raise DataFormatError(f"non-finite value in column {col}", path, lineno)
                if x < 0:
                    raise DataFormatError(f"negative entry {x} at row {lineno}, column {col}", path, lineno)
            rows.append(vals)
    if not rows:
        raise DataFormatError("no data rows", path)
    return np.array(rows, dtype=float)


def _read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("labels file not found", path)
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError as exc:
                raise DataFormatError(f"label is not an integer: {line!r}", path, lineno) from exc
    return np.array(out, dtype=int)


def load_dataset(manifest_path) -> MultiViewDataset:
    man = DatasetManifest.read(manifest_path)
    views = [_read_matrix(p).T for p in man.views]
    labels = _read_labels(man.labels)
    counts = {p: X.shape[1] for p, X in zip(man.views, views)}
    if len(set(counts.values())) > 1:
        raise DataFormatError(f"views disagree on the instance count: {counts}", manifest_path)
    try:
        return MultiViewDataset(views, labels, man.num_classes, man.name)
    except ValidationError as exc:
        raise DataFormatError(str(exc), manifest_path) from exc


def save_dataset(dataset: MultiViewDataset, directory, name: str | None = None) -> Path:
    """Write views, labels and a manifest into ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    view_files = []
    for v, X in enumerate(dataset.views):
        fname = f"view{v}.csv"
        with open(directory / fname, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in X.T:
                w.writerow([fmt(x) for x in row])
        view_files.append(fname)
    (directory / "labels.txt").write_text("".join(f"{int(y)}\n" for y in dataset.labels))
    manifest = {
        "name": name or dataset.name,
        "num_classes": int(dataset.num_classes),
        "views": view_files,
        "labels": "labels.txt",
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _decode(d: dict) -> np.ndarray:
    shape = tuple(int(s) for s in d["shape"])
    data = np.asarray(d["data"], dtype=float)
    if data.size != math.prod(shape):
        raise ValueError(f"{data.size} values for shape {shape}")
    return data.reshape(shape)


def save_model(model: FactorModel, path):
    blocks = {}
    for name in ALL_BLOCKS:
        val = getattr(model, name)
        blocks[name] = _encode(val) if name in SHARED_BLOCKS else [_encode(a) for a in val]
    doc = {
        "format_version": FORMAT_VERSION,
        "n_views": model.n_views,
        "num_classes": model.num_classes,
        "dims": list(model.dims.as_tuple()),
        "meta": model.meta,
        "blocks": blocks,
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1) + "\n")
    os.replace(tmp, path)


def load_model(path) -> FactorModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DataFormatError("model file not found", path) from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid model file: {exc.msg}", path, exc.lineno) from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise DataFormatError("missing format_version", path)
    if doc["format_version"] != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format version {doc['format_version']!r}", path)
    try:
        kw = {}
        for name in ALL_BLOCKS:
            raw = doc["blocks"][name]
            kw[name] = _decode(raw) if name in SHARED_BLOCKS else [_decode(r) for r in raw]
        model = FactorModel(**kw, meta=doc.get("meta", {}))
        if list(model.dims.as_tuple()) != list(doc["dims"]) or model.n_views != doc["n_views"]:
            raise ValueError("block shapes disagree with the recorded dims")
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise DataFormatError(f"malformed model: {exc}", path) from exc
    return model


def export_trace(trace, path):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for r in trace.records:
                w.writerow([r.iteration, fmt(r.total), fmt(r.reconstruction), fmt(r.orthogonality),
                            fmt(r.sparsity), fmt(r.label_loss)])
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_trace(path) -> np.ndarray:
    """Load an exported trace as a float array with the ``TRACE_HEADER`` columns."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def export_embeddings(model: FactorModel, dataset: MultiViewDataset, path, coefs=None):
    """Write ``instance,label,f0,...`` rows of the discriminative features."""
    F = discriminative_features(model, coefs)
    if F.shape[0] != dataset.n:
        raise ValidationError(f"{F.shape[0]} feature rows for {dataset.n} instances")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["instance", "label"] + [f"f{i}" for i in range(F.shape[1])])
            for j, row in enumerate(F):
                w.writerow([j, int(dataset.labels[j])] + [fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
