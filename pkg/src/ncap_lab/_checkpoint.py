"""Self-describing binary checkpoints for parameter containers.

Layout (all integers little-endian)::

    header   magic "NCAPCKPT", format version (u16), kind length (u16),
             array count (u32)
    kind     UTF-8 name of the parameter type
    arrays   per array: name length (u16), UTF-8 name, ndim (u8),
             ndim dims (u32 each), float64 little-endian payload

Scalars such as PReLU slopes are stored as one-element arrays.
"""

from __future__ import annotations

import logging
import os
import struct
from pathlib import Path

import numpy as np

from ._errors import CheckpointError, ShapeError
from ._prior import AdapterParams, TextPriorParams
from ._toytask import RecognizerParams

logger = logging.getLogger(__name__)

MAGIC = b"NCAPCKPT"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sHHI")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_DIM = struct.Struct("<I")
_PAYLOAD_DTYPE = np.dtype("<f8")

PARAM_TYPES = {
    cls.__name__: cls
    for cls in (RecognizerParams, AdapterParams, TextPriorParams)
}


def _encode(params) -> bytes:
    kind = type(params).__name__
    if kind not in PARAM_TYPES:
        raise CheckpointError(f"cannot checkpoint objects of type {kind}")
    arrays = params.named_arrays()
    kind_bytes = kind.encode()
    chunks = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, len(kind_bytes), len(arrays)),
        kind_bytes,
    ]
    for name, array in arrays.items():
        array = np.asarray(array, dtype=np.float64)
        name_bytes = name.encode()
        chunks.append(_NAME_LEN.pack(len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(_NDIM.pack(array.ndim))
        chunks.extend(_DIM.pack(d) for d in array.shape)
        chunks.append(array.astype(_PAYLOAD_DTYPE).tobytes(order="C"))
    return b"".join(chunks)


def save_checkpoint(params, path: str | Path) -> Path:
    """Write ``params`` to ``path`` through a temp file and a rename."""
    path = Path(path)
    data = _encode(params)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
    logger.debug("Saved %s to %s", type(params).__name__, path)
    return path


def _text(raw: bytes, path: Path) -> str:
    try:
        return raw.decode()
    except UnicodeDecodeError as e:
        raise CheckpointError(f"{path} has a garbled name: {e}") from e


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(f"{self.path} is truncated")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct):
        return fmt.unpack(self.take(fmt.size))


def _decode(data: bytes, path: Path):
    reader = _Reader(data, path)
    magic, version, kind_len, count = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {version}, expected "
            f"{FORMAT_VERSION}"
        )
    kind = _text(reader.take(kind_len), path)
    if kind not in PARAM_TYPES:
        raise CheckpointError(f"{path} holds unknown type {kind!r}")
    arrays = {}
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN)
        name = _text(reader.take(name_len), path)
        (ndim,) = reader.unpack(_NDIM)
        shape = tuple(reader.unpack(_DIM)[0] for _ in range(ndim))
        size = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(size * _PAYLOAD_DTYPE.itemsize)
        arrays[name] = (
            np.frombuffer(payload, dtype=_PAYLOAD_DTYPE)
            .astype(np.float64)
            .reshape(shape)
        )
    if reader.offset != len(data):
        raise CheckpointError(f"{path} has trailing bytes")
    return kind, arrays


def load_checkpoint(path: str | Path, template=None):
    """Read a checkpoint back into its parameter type.

    Parameters
    ----------
    path : str or Path
        File written by :func:`save_checkpoint`.
    template : parameter container, optional
        When given, the checkpoint must hold the same type with the same
        array shapes; the first mismatching array raises ``ShapeError``.

    Raises
    ------
    CheckpointError
        Missing, truncated, foreign or version-mismatched files, and
        files whose names or arrays do not decode into the stored type.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    kind, arrays = _decode(data, path)
    if template is not None:
        expected = template.named_arrays()
        if type(template).__name__ != kind:
            raise CheckpointError(
                f"{path} holds {kind}, expected {type(template).__name__}"
            )
        if set(expected) != set(arrays):
            raise CheckpointError(
                f"{path} holds arrays {sorted(arrays)}, expected "
                f"{sorted(expected)}"
            )
        for name, reference in expected.items():
            if arrays[name].shape != reference.shape:
                raise ShapeError(
                    f"matrix {name!r} in {path} has shape "
                    f"{arrays[name].shape}, expected {reference.shape}"
                )
    try:
        return PARAM_TYPES[kind].from_named_arrays(arrays)
    except (KeyError, TypeError, IndexError) as e:
        raise CheckpointError(f"{path} has incomplete arrays: {e}") from e
    except ValueError as e:
        raise CheckpointError(f"{path} has malformed arrays: {e}") from e
