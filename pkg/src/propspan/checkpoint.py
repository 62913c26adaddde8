"""Model checkpoint file format.

Layout: magic ``SPFG1\\n``, an 8-byte little-endian header length, a UTF-8
JSON header, then the raw tensor payload. The header carries the
architecture config, training metadata, and one entry per tensor with
name, shape, dtype and byte offset into the payload. Serialization is
canonical (sorted keys, fixed separators, tensors ordered by name) so the
same model always produces the same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPFG1\n"
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray],
                    config: dict, meta: dict | None = None) -> None:
    entries = []
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype == np.float64:
            code = "<f8"
        else:
            code = "<f4"
            arr = arr.astype("<f4", copy=False)
        arr = arr.astype(_DTYPES[code], copy=False)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code,
                        "offset": len(payload)})
        payload.extend(arr.tobytes())
    header = json.dumps({"config": config, "meta": meta or {}, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, dict]:
    """Returns (tensors, config, meta); shape validation is the caller's job
    since only the model class knows what the config implies."""
    blob = Path(path).read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    header_start = len(MAGIC) + 8
    header = json.loads(blob[header_start:header_start + header_len].decode("utf-8"))
    payload = blob[header_start + header_len:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return tensors, header["config"], header["meta"]
