"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"WNAVCKPT" | u32 version | u32 record count
    record: u16 name length | name (utf-8) | u8 kind
        kind 0 (array): u8 ndim | ndim x u64 dims | float64 '<f8' data
        kind 1 (text):  u64 byte length | utf-8 bytes

Records keep insertion order, so writing the same content twice gives the
same bytes.
"""

import struct

import numpy as np

MAGIC = b"WNAVCKPT"
VERSION = 1
ARRAY, TEXT = 0, 1


class CheckpointError(ValueError):
    pass


def write_records(path, records):
    """``records``: iterable of (name, value) with value a str or float array."""
    records = list(records)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, value in records:
        key = name.encode()
        chunks.append(struct.pack("<H", len(key)) + key)
        if isinstance(value, str):
            data = value.encode()
            chunks.append(struct.pack("<BQ", TEXT, len(data)) + data)
        else:
            arr = np.ascontiguousarray(value, dtype="<f8")
            chunks.append(struct.pack("<BB", ARRAY, arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_records(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a walknav checkpoint")
    if len(buf) < 16:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos, out = 16, {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            kind = buf[pos]
            if kind == TEXT:
                (length,) = struct.unpack_from("<Q", buf, pos + 1)
                pos += 9
                if pos + length > len(buf):
                    raise CheckpointError(f"{path}: truncated checkpoint")
                out[name] = buf[pos:pos + length].decode()
                pos += length
            elif kind == ARRAY:
                ndim = buf[pos + 1]
                shape = struct.unpack_from(f"<{ndim}Q", buf, pos + 2)
                pos += 2 + 8 * ndim
                size = int(np.prod(shape)) if ndim else 1
                out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
                pos += 8 * size
            else:
                raise CheckpointError(f"{path}: bad record kind {kind}")
    except CheckpointError:
        raise
    except (struct.error, IndexError, ValueError) as exc:
        # ValueError covers short array payloads and undecodable names
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from None
    if pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after last record")
    return out


def export_text(records):
    """Readable dump for diffing two checkpoints."""
    lines = []
    for name, value in records.items():
        if isinstance(value, str):
            lines.append(f"[{name}] text")
            lines.extend("  " + ln for ln in value.splitlines())
        else:
            lines.append(f"[{name}] array shape={tuple(value.shape)}")
            lines.append("  " + " ".join(repr(float(v)) for v in value.ravel()))
    return "\n".join(lines) + "\n"
