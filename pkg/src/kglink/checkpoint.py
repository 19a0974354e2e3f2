"""Binary checkpoint format: magic, version byte, text manifest, float32 arrays.

Layout::

    KGLINK                     6-byte magic
    0x01                       version byte
    <uint32 little-endian>     manifest byte length
    <manifest utf-8>           "key\\tvalue" lines; arrays declared as
                               "array\\t<name>\\t<d0>,<d1>,..."
    <payload>                  little-endian float32 arrays, in manifest order

Reloading a checkpoint reproduces forward scores exactly at float32
precision; saving an unchanged model twice produces byte-identical files.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"KGLINK"
VERSION = 1


def save_checkpoint(path: str | Path, meta: dict[str, str],
                    arrays: dict[str, np.ndarray]) -> None:
    lines = [f"{key}\t{value}" for key, value in meta.items()]
    for name, arr in arrays.items():
        dims = ",".join(str(d) for d in arr.shape)
        lines.append(f"array\t{name}\t{dims}")
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    with Path(path).open("wb") as handle:
        handle.write(MAGIC)
        handle.write(bytes([VERSION]))
        handle.write(struct.pack("<I", len(manifest)))
        handle.write(manifest)
        for arr in arrays.values():
            handle.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Parse a checkpoint; raises CheckpointError on bad magic or truncation."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 5 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = blob[len(MAGIC)]
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = len(MAGIC) + 1
    (manifest_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if offset + manifest_len > len(blob):
        raise CheckpointError(f"{path}: truncated manifest")
    manifest = blob[offset : offset + manifest_len].decode("utf-8")
    offset += manifest_len

    meta: dict[str, str] = {}
    specs: list[tuple[str, tuple[int, ...]]] = []
    for line in manifest.splitlines():
        if not line:
            continue
        fields = line.split("\t")
        if fields[0] == "array":
            if len(fields) != 3:
                raise CheckpointError(f"{path}: malformed array declaration {line!r}")
            shape = tuple(int(d) for d in fields[2].split(",")) if fields[2] else ()
            specs.append((fields[1], shape))
        elif len(fields) == 2:
            meta[fields[0]] = fields[1]
        else:
            raise CheckpointError(f"{path}: malformed manifest line {line!r}")

    arrays: dict[str, np.ndarray] = {}
    for name, shape in specs:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated payload for array {name!r}")
        flat = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays[name] = flat.reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after payload")
    return meta, arrays
