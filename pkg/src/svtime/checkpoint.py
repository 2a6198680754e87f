"""Checkpoint files.

Binary layout::

    b"SVTCKPT1" | uint64 LE header length | UTF-8 JSON header | float64 LE payload

The header lists every tensor with its shape and element offset into the
payload. A plain-JSON variant (tensors inlined as lists) is written when
``json_only=True``; :func:`load` accepts either.
"""
import hashlib
import json
import struct

import numpy as np

from .data import NormStats
from .errors import CheckpointError, ConfigError
from .model import ModelConfig, SVTimeModel, parameter_shapes

FORMAT_VERSION = 1
MAGIC = b"SVTCKPT1"


def log_digest(log_records):
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in log_records or [])
    return hashlib.sha256(text.encode()).hexdigest()


def _header(model, standardization, extra, log_records):
    return {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "dataset_standardization": None if standardization is None else {
            "mean": [float(v) for v in standardization.mean],
            "std": [float(v) for v in standardization.std],
        },
        "training_log_digest": log_digest(log_records),
        "extra": extra or {},
    }


def save(path, model, standardization=None, extra=None, log_records=None, json_only=False):
    header = _header(model, standardization, extra, log_records)
    names = list(model.params)
    if json_only:
        header["tensors"] = [{"name": n, "shape": list(model.params[n].shape),
                              "data": model.params[n].ravel().tolist()} for n in names]
        with open(path, "w") as fh:
            json.dump(header, fh)
        return
    offset = 0
    entries = []
    for n in names:
        size = int(model.params[n].size)
        entries.append({"name": n, "shape": list(model.params[n].shape), "offset": offset,
                        "count": size})
        offset += size
    header["tensors"] = entries
    blob = json.dumps(header).encode()
    payload = np.concatenate([model.params[n].ravel() for n in names]) if names else np.empty(0)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload.astype("<f8").tobytes())


def _read(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if raw.startswith(MAGIC):
        if len(raw) < 16:
            raise CheckpointError(f"{path}: truncated header")
        (n,) = struct.unpack("<Q", raw[8:16])
        try:
            header = json.loads(raw[16:16 + n].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header ({exc})") from None
        body = raw[16 + n:]
        if len(body) % 8:
            raise CheckpointError(f"{path}: payload is not a whole number of float64 values")
        payload = np.frombuffer(body, dtype="<f8").astype(np.float64)
        return header, payload
    try:
        header = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError(f"{path}: not a checkpoint file") from None
    if not isinstance(header, dict):
        raise CheckpointError(f"{path}: not a checkpoint file")
    return header, None


def load(path):
    """Return ``(model, standardization_or_None, header)``."""
    header, payload = _read(path)
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {version!r}")
    try:
        config = ModelConfig.from_dict(header["model_config"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: invalid model_config ({exc})") from None
    expected = parameter_shapes(config)
    params = {}
    for entry in header.get("tensors", []):
        name = entry.get("name")
        shape = tuple(entry.get("shape", ()))
        if name not in expected:
            raise CheckpointError(f"{path}: unexpected tensor {name!r}")
        if shape != expected[name]:
            raise CheckpointError(f"{path}: tensor {name} has shape {shape}, "
                                  f"configuration requires {expected[name]}")
        count = int(np.prod(shape, dtype=np.int64))
        if payload is None:
            data = np.asarray(entry.get("data", []), dtype=np.float64)
        else:
            off = int(entry.get("offset", -1))
            if entry.get("count") != count or off < 0 or off + count > payload.size:
                raise CheckpointError(f"{path}: tensor {name} does not fit the payload")
            data = payload[off:off + count]
        if data.size != count:
            raise CheckpointError(f"{path}: tensor {name} has {data.size} values, expected {count}")
        params[name] = data.reshape(shape).copy()
    missing = sorted(set(expected) - set(params))
    if missing:
        raise CheckpointError(f"{path}: missing tensors {missing}")
    if payload is not None and sum(e["count"] for e in header["tensors"]) != payload.size:
        raise CheckpointError(f"{path}: payload size does not match the tensor table")
    std = header.get("dataset_standardization")
    stats = None if std is None else NormStats(np.asarray(std["mean"], dtype=np.float64),
                                               np.asarray(std["std"], dtype=np.float64))
    return SVTimeModel(config, params=params), stats, header
