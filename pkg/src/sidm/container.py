"""Bit-exact model persistence: magic 'SIDM', version, JSON metadata block,
tensor manifest, then a payload of little-endian float32 tensors.

The byte layout is fixed regardless of host endianness, and save -> load ->
save reproduces files byte for byte (JSON is emitted with sorted keys and
compact separators; tensors keep their manifest order).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SIDM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI")
_LENGTH = struct.Struct("<Q")


class ContainerError(ValueError):
    """Corrupt or unsupported container file."""


def _dump_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class ModelContainer:
    metadata: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        # asarray keeps 0-d tensors 0-d (ascontiguousarray would promote them)
        self.tensors = {
            name: np.asarray(arr, dtype="<f4", order="C")
            for name, arr in self.tensors.items()
        }

    def save(self, path: str | Path) -> None:
        manifest = []
        payload = bytearray()
        for name, arr in self.tensors.items():
            manifest.append(
                {
                    "name": name,
                    "shape": list(arr.shape),
                    "offset": len(payload),
                    "nbytes": arr.nbytes,
                }
            )
            payload.extend(arr.tobytes(order="C"))
        meta_bytes = _dump_json(self.metadata)
        manifest_bytes = _dump_json(manifest)
        with Path(path).open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, self.version))
            fh.write(_LENGTH.pack(len(meta_bytes)))
            fh.write(meta_bytes)
            fh.write(_LENGTH.pack(len(manifest_bytes)))
            fh.write(manifest_bytes)
            fh.write(payload)

    @classmethod
    def load(cls, path: str | Path) -> "ModelContainer":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size or raw[:4] != MAGIC:
            raise ContainerError(f"{path}: not a model container (bad magic)")
        _, version = _HEADER.unpack_from(raw)
        if version != FORMAT_VERSION:
            raise ContainerError(
                f"{path}: unsupported container version {version} "
                f"(expected {FORMAT_VERSION})"
            )
        pos = _HEADER.size
        meta_bytes, pos = _read_block(raw, pos, path, "metadata")
        manifest_bytes, pos = _read_block(raw, pos, path, "manifest")
        try:
            metadata = json.loads(meta_bytes)
            manifest = json.loads(manifest_bytes)
        except json.JSONDecodeError as exc:
            raise ContainerError(f"{path}: corrupt JSON block: {exc}") from exc
        payload = raw[pos:]
        tensors: dict[str, np.ndarray] = {}
        cursor = 0
        for entry in manifest:
            offset, nbytes, shape = entry["offset"], entry["nbytes"], entry["shape"]
            if offset != cursor:
                raise ContainerError(
                    f"{path}: manifest offsets overlap or leave gaps at "
                    f"{entry['name']!r}"
                )
            if offset + nbytes > len(payload):
                raise ContainerError(
                    f"{path}: tensor {entry['name']!r} extends past the payload"
                )
            expected = int(np.prod(shape, dtype=np.int64)) * 4
            if expected != nbytes:
                raise ContainerError(
                    f"{path}: tensor {entry['name']!r} shape {shape} does not "
                    f"match {nbytes} bytes"
                )
            data = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
            tensors[entry["name"]] = data.reshape(shape).copy()
            cursor = offset + nbytes
        if cursor != len(payload):
            raise ContainerError(f"{path}: {len(payload) - cursor} trailing payload bytes")
        return cls(metadata=metadata, tensors=tensors, version=version)


def _read_block(raw: bytes, pos: int, path, what: str) -> tuple[bytes, int]:
    if pos + _LENGTH.size > len(raw):
        raise ContainerError(f"{path}: truncated before {what} length")
    (length,) = _LENGTH.unpack_from(raw, pos)
    pos += _LENGTH.size
    if pos + length > len(raw):
        raise ContainerError(f"{path}: truncated {what} block")
    return raw[pos : pos + length], pos + length
