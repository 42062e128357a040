"""Binary checkpoint for analytic classifiers.

Layout (all integers little-endian)::

    8 bytes   magic b"TSACLCK1"
    u32       format version
    u32       header length H
    H bytes   UTF-8 JSON header: metadata plus the name/shape of every array
    ...       float64 arrays, row-major, in header order
    u32       CRC-32 of everything above

Only the classifier state is stored (weights and psi per member); the random
projection and encoder are stored as their generating parameters.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .classifier import AnalyticClassifier

MAGIC = b"TSACLCK1"
VERSION = 1
_PREFIX = struct.Struct("<8sII")
_CRC = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def save_checkpoint(classifier, metadata: dict, path) -> None:
    """Write one classifier, or a list of ensemble members sharing a registry."""
    members = list(classifier) if isinstance(classifier, (list, tuple)) else [classifier]
    if not members:
        raise ValueError("nothing to save")
    arrays, states = [], []
    for k, m in enumerate(members):
        states.append({"gamma": m.gamma, "registry": list(m.registry), "tasks_seen": m.tasks_seen})
        arrays.append((f"member{k}.weights", m.weights))
        arrays.append((f"member{k}.psi", m.psi))
    header = {
        "ensemble": isinstance(classifier, (list, tuple)),
        "members": states,
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
        "metadata": metadata,
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = bytearray(_PREFIX.pack(MAGIC, VERSION, len(head)))
    body += head
    for _, a in arrays:
        body += np.ascontiguousarray(a, dtype="<f8").tobytes()
    body += _CRC.pack(zlib.crc32(body))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(body))


def read_header(raw: bytes) -> tuple[dict, int]:
    """Validate framing; returns (header, offset of the first array)."""
    if len(raw) < _PREFIX.size + _CRC.size:
        raise TruncatedCheckpointError("file shorter than the fixed prefix")
    magic, version, head_len = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, reader supports {VERSION}")
    start = _PREFIX.size + head_len
    if len(raw) < start + _CRC.size:
        raise TruncatedCheckpointError("header extends past end of file")
    try:
        header = json.loads(raw[_PREFIX.size : start])
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ChecksumError(f"unreadable header: {e}") from None
    payload = sum(8 * int(np.prod(a["shape"])) for a in header["arrays"])
    if len(raw) < start + payload + _CRC.size:
        raise TruncatedCheckpointError(
            f"expected {start + payload + _CRC.size} bytes, found {len(raw)}"
        )
    if len(raw) > start + payload + _CRC.size:
        raise ChecksumError("trailing bytes after footer")
    (crc,) = _CRC.unpack_from(raw, len(raw) - _CRC.size)
    if crc != zlib.crc32(raw[: len(raw) - _CRC.size]):
        raise ChecksumError("CRC-32 mismatch")
    return header, start


def load_checkpoint(path):
    """Returns (classifier, metadata); classifier is a list when an ensemble was saved."""
    raw = Path(path).read_bytes()
    header, offset = read_header(raw)
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape))
        arrays[spec["name"]] = np.frombuffer(raw, "<f8", count, offset).reshape(shape).astype(np.float64)
        offset += 8 * count
    members = [
        AnalyticClassifier(
            arrays[f"member{k}.weights"],
            arrays[f"member{k}.psi"],
            float(s["gamma"]),
            tuple(s["registry"]),
            int(s["tasks_seen"]),
        )
        for k, s in enumerate(header["members"])
    ]
    return (members if header["ensemble"] else members[0]), header["metadata"]


def inspect_checkpoint(path) -> dict:
    """Header summary without materializing the arrays."""
    header, _ = read_header(Path(path).read_bytes())
    return {
        "version": VERSION,
        "ensemble_size": len(header["members"]),
        "members": header["members"],
        "arrays": header["arrays"],
        "metadata": header["metadata"],
    }
