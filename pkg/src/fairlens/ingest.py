"""Loading and saving of manifests, detection files, and embedding files.

All files share one container format: UTF-8 text, one JSON object per line,
with a first header line ``{"format": "fairlens/1", "kind": ...}``. Loaders
are pure functions of file contents; everything they return is immutable.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import (
    ConfidenceOutOfRange,
    DanglingImageRef,
    DuplicateInstanceId,
    EmptySeed,
    InvalidBox,
    MalformedRecord,
    WrongDimension,
    ZeroVector,
)
from .types import DatasetManifest, DetectionRecord, FaceInstance, ImageEntry

FORMAT_VERSION = "fairlens/1"
EMBED_DIM = 128
NORM_TOL = 1e-6

PathLike = Union[str, Path]


def _read_lines(path: PathLike, kind: str):
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedRecord(1, "empty file, expected a format header")
    header = _parse_json(lines[0], 1)
    if header.get("format") != FORMAT_VERSION:
        raise MalformedRecord(1, f"expected format {FORMAT_VERSION!r}")
    if header.get("kind") != kind:
        raise MalformedRecord(1, f"expected kind {kind!r}, got {header.get('kind')!r}")
    return lines[1:]


def _parse_json(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise MalformedRecord(lineno, "record is not an object")
    return obj


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


# -- manifests ----------------------------------------------------------------

def load_manifest(path: PathLike) -> DatasetManifest:
    """Parse and validate a dataset manifest file."""
    lines = _read_lines(path, "manifest")
    dataset_id = ""
    provenance = ""
    taxonomy = None
    images: list[ImageEntry] = []
    instances: list[FaceInstance] = []
    seen_instance_ids: set[str] = set()
    for offset, line in enumerate(lines):
        lineno = offset + 2
        rec = _parse_json(line, lineno)
        kind = rec.get("record")
        try:
            if kind == "dataset":
                dataset_id = rec["dataset_id"]
                provenance = rec.get("provenance", "")
                taxonomy = rec.get("taxonomy")
            elif kind == "image":
                images.append(ImageEntry.from_dict(rec))
            elif kind == "instance":
                inst = FaceInstance.from_dict(rec)
                if inst.instance_id in seen_instance_ids:
                    raise DuplicateInstanceId(inst.instance_id)
                seen_instance_ids.add(inst.instance_id)
                inst.demographics.validate(taxonomy)
                instances.append(inst)
            else:
                raise MalformedRecord(lineno, f"unknown record kind {kind!r}")
        except (DuplicateInstanceId, MalformedRecord):
            raise
        except InvalidBox as exc:
            raise MalformedRecord(lineno, str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, f"{type(exc).__name__}: {exc}") from exc
    try:
        return DatasetManifest(dataset_id, tuple(images), tuple(instances),
                               provenance, taxonomy)
    except (DuplicateInstanceId, DanglingImageRef):
        raise


def manifest_to_lines(manifest: DatasetManifest) -> str:
    lines = [_dump({"format": FORMAT_VERSION, "kind": "manifest"})]
    dataset = {"record": "dataset", "dataset_id": manifest.dataset_id,
               "provenance": manifest.provenance}
    if manifest.taxonomy is not None:
        dataset["taxonomy"] = manifest.taxonomy
    lines.append(_dump(dataset))
    for img in manifest.images:
        lines.append(_dump({"record": "image", **img.as_dict()}))
    for inst in manifest.instances:
        lines.append(_dump({"record": "instance", **inst.as_dict()}))
    return "\n".join(lines) + "\n"


def save_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    Path(path).write_text(manifest_to_lines(manifest), encoding="utf-8")


# -- detections ---------------------------------------------------------------

def load_detections(path: PathLike) -> list[DetectionRecord]:
    """Parse a detection file, preserving file order."""
    lines = _read_lines(path, "detections")
    out: list[DetectionRecord] = []
    for offset, line in enumerate(lines):
        lineno = offset + 2
        rec = _parse_json(line, lineno)
        try:
            conf = float(rec["confidence"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, f"bad confidence: {exc}") from exc
        if not 0.0 <= conf <= 1.0:
            raise ConfidenceOutOfRange(lineno, conf)
        try:
            out.append(DetectionRecord.from_dict(rec))
        except InvalidBox as exc:
            raise MalformedRecord(lineno, str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, f"{type(exc).__name__}: {exc}") from exc
    return out


def save_detections(detections: Iterable[DetectionRecord], path: PathLike) -> None:
    lines = [_dump({"format": FORMAT_VERSION, "kind": "detections"})]
    for det in detections:
        lines.append(_dump(det.as_dict()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- embeddings ---------------------------------------------------------------

def normalize_embedding(values, instance_id: str = "") -> np.ndarray:
    """Validate one embedding vector and scale it to unit L2 norm."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != EMBED_DIM:
        raise WrongDimension(instance_id, int(arr.size))
    if not np.all(np.isfinite(arr)):
        raise WrongDimension(instance_id, int(arr.size))
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ZeroVector(instance_id)
    out = arr / norm
    out.flags.writeable = False
    return out


def load_embeddings(path: PathLike) -> dict[str, np.ndarray]:
    """Load an embedding file; every returned vector is unit-norm."""
    lines = _read_lines(path, "embeddings")
    out: dict[str, np.ndarray] = {}
    for offset, line in enumerate(lines):
        lineno = offset + 2
        rec = _parse_json(line, lineno)
        if "instance_id" not in rec or "values" not in rec:
            raise MalformedRecord(lineno, "embedding record needs instance_id and values")
        instance_id = rec["instance_id"]
        values = rec["values"]
        if not isinstance(values, list):
            raise MalformedRecord(lineno, "values must be a list")
        try:
            floats = [float(v) for v in values]
        except (TypeError, ValueError) as exc:
            raise MalformedRecord(lineno, f"non-numeric value: {exc}") from exc
        out[instance_id] = normalize_embedding(floats, instance_id)
    return out


def save_embeddings(embeddings: dict[str, np.ndarray], path: PathLike) -> None:
    lines = [_dump({"format": FORMAT_VERSION, "kind": "embeddings"})]
    for instance_id in sorted(embeddings):
        values = [float(v) for v in embeddings[instance_id]]
        lines.append(_dump({"instance_id": instance_id, "values": values}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- stub embedder ------------------------------------------------------------

def stub_embed(seed: str) -> np.ndarray:
    """Deterministic stand-in for a real face-embedding model.

    Expands SHA-256 digests of ``seed`` into 128 values in (-1, 1), then
    normalizes. Equal seeds give identical vectors, so analytics tests need
    no RNG state.
    """
    if not seed:
        raise EmptySeed()
    raw = bytearray()
    counter = 0
    while len(raw) < EMBED_DIM * 8:
        raw.extend(hashlib.sha256(f"{seed}\x00{counter}".encode("utf-8")).digest())
        counter += 1
    vals = np.empty(EMBED_DIM, dtype=np.float64)
    for i in range(EMBED_DIM):
        chunk = bytes(raw[i * 8:(i + 1) * 8])
        u = int.from_bytes(chunk, "big") / 2**64  # uniform in [0, 1)
        vals[i] = 2.0 * u - 1.0
    if not math.isfinite(float(np.linalg.norm(vals))) or np.all(vals == 0):
        raise ZeroVector(seed)  # astronomically unlikely
    return normalize_embedding(vals, seed)
