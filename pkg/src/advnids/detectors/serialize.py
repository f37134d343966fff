"""Self-describing binary model files.

Layout: 8-byte magic, u32 format version, u32 header length, UTF-8 JSON
header (detector kind, parameters, array table with dtype/shape/offset),
then the raw little-endian float64 arrays back to back.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autoencoder import DenseAutoencoder
from .base import Detector
from .kitnet import KitNetEnsemble
from .lof import LofModel
from .rrcf import RrcfForest
from .som import SomGrid

MODEL_MAGIC = b"ADVNIDS\x00"
MODEL_VERSION = 1

DETECTOR_TYPES: dict[str, type[Detector]] = {
    cls.kind: cls for cls in (DenseAutoencoder, KitNetEnsemble, SomGrid, LofModel, RrcfForest)
}


class ModelFormatError(ValueError):
    pass


def save_model(detector: Detector, path: str | Path) -> None:
    params, arrays = detector.get_state()
    table, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        table.append({"name": name, "dtype": "<f8", "shape": list(a.shape), "offset": offset})
        blob = a.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"kind": detector.kind, "params": params, "arrays": table},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_model(path: str | Path) -> Detector:
    data = Path(path).read_bytes()
    if data[:8] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    if len(data) < 16:
        raise ModelFormatError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    header = json.loads(data[16:16 + hlen])
    body = memoryview(data)[16 + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        end = entry["offset"] + 8 * count
        if end > len(body):
            raise ModelFormatError(f"{path}: array {entry['name']} runs past end of file")
        arrays[entry["name"]] = np.frombuffer(body[entry["offset"]:end], dtype=entry["dtype"]).reshape(
            entry["shape"]).astype(float)
    cls = DETECTOR_TYPES.get(header["kind"])
    if cls is None:
        raise ModelFormatError(f"{path}: unknown detector kind {header['kind']!r}")
    det = cls.__new__(cls)
    Detector.__init__(det, header["params"]["seed"])
    det._set_state(header["params"], arrays)
    return det
