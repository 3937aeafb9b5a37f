"""Versioned binary containers for checkpoints and reports.

Layout: magic, version, JSON header (kind + metadata + array manifest),
raw little-endian C-order array payload, trailing SHA-256 over everything
before it. Writes are atomic (temp file + rename), so a crash never leaves
a partially written checkpoint behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"FMCK"
VERSION = 1


class ContainerError(Exception):
    """Raised when a container file is missing, truncated, or corrupt."""


def save_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    names = sorted(arrays)
    manifest = []
    chunks = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        chunks.append(arr.astype(dtype, copy=False).tobytes())
        manifest.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape)})
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": manifest}, sort_keys=True
    ).encode("utf-8")

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += struct.pack("<Q", len(header))
    blob += header
    for chunk in chunks:
        blob += chunk
    blob += hashlib.sha256(blob).digest()

    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def load_container(path, expected_kind: str | None = None):
    """Return (kind, meta, arrays). Verifies the checksum before decoding."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ContainerError(f"cannot read container {path}: {exc}") from exc

    if len(blob) < 4 + 4 + 8 + 32 or blob[:4] != MAGIC:
        raise ContainerError(f"{path} is not a container file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ContainerError(f"checksum mismatch in {path}")

    (version,) = struct.unpack_from("<I", body, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version} in {path}")
    (header_len,) = struct.unpack_from("<Q", body, 8)
    offset = 16 + header_len
    header = json.loads(body[16:offset].decode("utf-8"))

    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        raw = body[offset : offset + nbytes]
        if len(raw) != nbytes:
            raise ContainerError(f"truncated array payload in {path}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(body):
        raise ContainerError(f"trailing bytes in {path}")

    kind = header["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise ContainerError(f"{path} holds a '{kind}' container, expected '{expected_kind}'")
    return kind, header["meta"], arrays


def sha256_of_arrays(arrays: dict[str, np.ndarray]) -> str:
    """Stable hash of a set of named arrays (used to fingerprint frozen models)."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        h.update(name.encode("utf-8"))
        h.update(str(arr.dtype).encode("utf-8"))
        h.update(str(arr.shape).encode("utf-8"))
        h.update(arr.tobytes())
    return h.hexdigest()
