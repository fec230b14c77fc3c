"""Portable model snapshots.

A checkpoint is a directory holding ``manifest.json`` (UTF-8: format
version, encoder configuration, interval grid, vocabulary payload, training
metadata and one entry per array with name/shape/dtype/offset/crc32) plus
``params.bin``, a single little-endian float32 blob. The content hash
covers configuration, vocabulary and array bytes, not free-form metadata,
so it identifies the model a cohort cache was computed against.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig
from .model import ResponseModel
from .mtlr import IntervalGrid
from .tokenizer import GeneVocab, MutationVocab, build_vocabularies

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"
BLOB_DTYPE = "<f4"


class CheckpointError(Exception):
    code = "checkpoint"


class CheckpointFormatError(CheckpointError):
    code = "format"


class CheckpointVersionError(CheckpointError):
    code = "version"


class CheckpointShapeError(CheckpointError):
    code = "shape"


class CheckpointTruncatedError(CheckpointError):
    code = "truncated"


class CheckpointChecksumError(CheckpointError):
    code = "checksum"


@dataclass
class VocabPayload:
    genes: list[str]
    pairs: list[tuple[str, str]]
    pair_annotations: np.ndarray  # (n_pairs + 2, 23), rows as in MutationVocab

    def build(self) -> tuple[GeneVocab, MutationVocab]:
        known = [(g, m, tuple(int(v) for v in self.pair_annotations[i + 1]))
                 for i, (g, m) in enumerate(self.pairs)]
        return build_vocabularies(self.genes, known)

    @classmethod
    def from_vocabs(cls, gv: GeneVocab, mv: MutationVocab) -> "VocabPayload":
        return cls(list(gv.genes), [list(p) for p in mv.pairs], mv.annotations.copy())


@dataclass
class Checkpoint:
    encoder_config: EncoderConfig
    n_intervals: int
    grid: IntervalGrid | None
    vocab: VocabPayload
    arrays: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: ResponseModel, gv: GeneVocab, mv: MutationVocab,
                   grid: IntervalGrid | None, metadata: dict | None = None) -> "Checkpoint":
        arrays = {name: p.data.astype(BLOB_DTYPE) for name, p in model.params().items()}
        return cls(model.config, model.n_intervals, grid,
                   VocabPayload.from_vocabs(gv, mv), arrays, metadata or {})

    def build_model(self, dtype=np.float32) -> tuple[ResponseModel, GeneVocab, MutationVocab]:
        gv, mv = self.vocab.build()
        model = ResponseModel(self.encoder_config, len(gv), mv.size,
                              self.n_intervals, seed=0, dtype=dtype)
        try:
            model.load_arrays(self.arrays)
        except ValueError as exc:
            raise CheckpointShapeError(str(exc)) from exc
        return model, gv, mv


def _manifest_dict(ckpt: Checkpoint) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    named = [(name, np.ascontiguousarray(arr, dtype=BLOB_DTYPE))
             for name, arr in sorted(ckpt.arrays.items())]
    named.append(("vocab.pair_annotations",
                  np.ascontiguousarray(ckpt.vocab.pair_annotations, dtype=BLOB_DTYPE)))
    entries = []
    offset = 0
    for name, arr in named:
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": BLOB_DTYPE,
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw),
        })
        offset += len(raw)
    manifest = {
        "format_version": ckpt.format_version,
        "encoder_config": ckpt.encoder_config.to_dict(),
        "n_intervals": ckpt.n_intervals,
        "interval_grid": ckpt.grid.to_dict() if ckpt.grid is not None else None,
        "vocab": {"genes": ckpt.vocab.genes,
                  "pairs": [list(p) for p in ckpt.vocab.pairs]},
        "metadata": ckpt.metadata,
        "arrays": entries,
    }
    return manifest, named


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest, named = _manifest_dict(ckpt)
    with open(path / BLOB_NAME, "wb") as fh:
        for _, arr in named:
            fh.write(arr.tobytes())
    with open(path / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    blob_path = path / BLOB_NAME
    if not manifest_path.exists():
        raise CheckpointFormatError(f"{path}: no {MANIFEST_NAME}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: unsupported checkpoint format version {version!r}, expected {FORMAT_VERSION}")
    if not blob_path.exists():
        raise CheckpointTruncatedError(f"{path}: no {BLOB_NAME}")
    blob = blob_path.read_bytes()

    arrays: dict[str, np.ndarray] = {}
    pair_annotations = None
    for entry in manifest["arrays"]:
        name, shape = entry["name"], tuple(entry["shape"])
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise CheckpointTruncatedError(
                f"{path}: blob ends at {len(blob)} bytes but {name} needs {start + nbytes}")
        raw = blob[start:start + nbytes]
        if zlib.crc32(raw) != entry["crc32"]:
            raise CheckpointChecksumError(f"{path}: checksum failure on array {name}")
        expected = int(np.prod(shape)) * np.dtype(entry["dtype"]).itemsize
        if expected != nbytes:
            raise CheckpointShapeError(
                f"{path}: array {name} declares shape {shape} but holds {nbytes} bytes")
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(shape).copy()
        if name == "vocab.pair_annotations":
            pair_annotations = arr.astype(np.float64)
        else:
            arrays[name] = arr
    if pair_annotations is None:
        raise CheckpointFormatError(f"{path}: missing vocab.pair_annotations array")

    grid_dict = manifest.get("interval_grid")
    vocab = VocabPayload(
        genes=list(manifest["vocab"]["genes"]),
        pairs=[tuple(p) for p in manifest["vocab"]["pairs"]],
        pair_annotations=pair_annotations,
    )
    return Checkpoint(
        encoder_config=EncoderConfig.from_dict(manifest["encoder_config"]),
        n_intervals=int(manifest["n_intervals"]),
        grid=IntervalGrid.from_dict(grid_dict) if grid_dict else None,
        vocab=vocab,
        arrays=arrays,
        metadata=manifest.get("metadata", {}),
        format_version=version,
    )


def checkpoint_hash(ckpt: Checkpoint) -> str:
    """Content hash over configuration, vocabulary, grid and array bytes."""
    h = hashlib.sha256()
    ident = {
        "format_version": ckpt.format_version,
        "encoder_config": ckpt.encoder_config.to_dict(),
        "n_intervals": ckpt.n_intervals,
        "interval_grid": ckpt.grid.to_dict() if ckpt.grid is not None else None,
        "vocab": {"genes": ckpt.vocab.genes, "pairs": [list(p) for p in ckpt.vocab.pairs]},
    }
    h.update(json.dumps(ident, sort_keys=True).encode())
    for name in sorted(ckpt.arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(ckpt.arrays[name], dtype=BLOB_DTYPE).tobytes())
    h.update(np.ascontiguousarray(ckpt.vocab.pair_annotations, dtype=BLOB_DTYPE).tobytes())
    return h.hexdigest()
