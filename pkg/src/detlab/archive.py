"""Tensor archive file format.

An archive is a manifest JSON plus (optionally) a companion raw file:

* manifest: ``{"tensors": [{"name": str, "shape": [int, ...], "dtype":
  "f64", "offset": int, "length": int}, ...]}`` where ``offset`` and
  ``length`` are in float64 *elements* into the raw file;
* raw file: little-endian float64 values, located next to the manifest
  with the same stem and a ``.bin`` suffix;
* small fixtures may instead carry ``"data": [...]`` (nested lists)
  inline per tensor, in which case no raw entry is needed.

Tensors are float64 and must be finite; ``length`` must equal the product
of ``shape``.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ParseError
from .serialize import dump_canonical, load_json

__all__ = ["raw_path_for", "read_archive", "write_archive"]


def raw_path_for(manifest_path: str | Path) -> Path:
    return Path(manifest_path).with_suffix(".bin")


def write_archive(path: str | Path, tensors: Mapping[str, np.ndarray], inline: bool = False) -> None:
    """Write tensors to a manifest (+ raw file unless ``inline``).

    Tensor order in the manifest follows the mapping's iteration order, so
    writes are deterministic for a deterministically built mapping.
    """
    path = Path(path)
    entries = []
    blobs: list[np.ndarray] = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 0 or min(arr.shape) < 1:
            raise ValueError(f"tensor {name!r} must have positive dims, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"tensor {name!r} contains non-finite values")
        entry = {"name": name, "shape": [int(s) for s in arr.shape], "dtype": "f64"}
        if inline:
            entry["data"] = arr.tolist()
        else:
            entry["offset"] = offset
            entry["length"] = arr.size
            offset += arr.size
            blobs.append(np.ascontiguousarray(arr, dtype="<f8").reshape(-1))
        entries.append(entry)
    dump_canonical({"tensors": entries}, path)
    if not inline:
        with open(raw_path_for(path), "wb") as fh:
            for blob in blobs:
                blob.tofile(fh)


def _parse_shape(entry: dict, where: str) -> tuple[int, ...]:
    shape = entry.get("shape")
    if (
        not isinstance(shape, list)
        or not shape
        or not all(isinstance(s, int) and s > 0 for s in shape)
    ):
        raise ParseError(f"{where}: 'shape' must be a non-empty list of positive ints")
    return tuple(shape)


def read_archive(path: str | Path) -> dict[str, np.ndarray]:
    """Read an archive manifest (raw and/or inline tensors)."""
    path = Path(path)
    manifest = load_json(path)
    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), list):
        raise ParseError(f"{path}: manifest must be an object with a 'tensors' list")
    raw: np.ndarray | None = None
    tensors: dict[str, np.ndarray] = {}
    for idx, entry in enumerate(manifest["tensors"]):
        where = f"{path}: tensors[{idx}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: must be an object")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise ParseError(f"{where}: missing tensor name")
        if name in tensors:
            raise ParseError(f"{where}: duplicate tensor name {name!r}")
        if entry.get("dtype") != "f64":
            raise ParseError(f"{where}: unsupported dtype {entry.get('dtype')!r}")
        shape = _parse_shape(entry, where)
        size = math.prod(shape)
        if "data" in entry:
            try:
                arr = np.asarray(entry["data"], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{where}: bad inline data: {exc}") from exc
            if arr.shape != shape:
                raise ParseError(f"{where}: inline data shape {arr.shape} != {shape}")
        else:
            off, length = entry.get("offset"), entry.get("length")
            if not isinstance(off, int) or not isinstance(length, int) or off < 0:
                raise ParseError(f"{where}: need integer 'offset' and 'length'")
            if length != size:
                raise ParseError(f"{where}: length {length} != product(shape) {size}")
            if raw is None:
                raw_file = raw_path_for(path)
                try:
                    raw = np.fromfile(raw_file, dtype="<f8")
                except OSError as exc:
                    raise ParseError(f"{path}: missing raw file {raw_file}: {exc}") from exc
            if off + length > raw.size:
                raise ParseError(f"{where}: raw file too short for offset {off} + length {length}")
            arr = raw[off : off + length].astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise ParseError(f"{where}: non-finite values in tensor {name!r}")
        tensors[name] = arr
    return tensors
