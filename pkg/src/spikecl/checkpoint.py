"""Versioned binary network checkpoints.

Byte layout (all integers little-endian, all floats IEEE-754 binary64
little-endian):

    offset  size  field
    0       8     magic "SPKCKPT1"
    8       4     u32 classes per head
    12      4     u32 array count A
    16      ...   A records, each:
                    u16 name length L
                    L bytes ASCII name
                    u8 ndim
                    ndim * u32 dimension sizes
                    prod(dims) * 8 bytes float64 data, C order

Arrays appear in a fixed order: "w1", "b1", then "head<k>.w2",
"head<k>.b2" for k = 0, 1, ...  The layout is self-describing enough
for other languages to parse without this module.
"""

import os
import struct

import numpy as np

from .network import Head, NetworkState

MAGIC = b"SPKCKPT1"


class CheckpointError(Exception):
    pass


def _pack_array(name, arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    encoded = name.encode("ascii")
    parts = [struct.pack("<H", len(encoded)), encoded,
             struct.pack("<B", arr.ndim)]
    parts.extend(struct.pack("<I", d) for d in arr.shape)
    parts.append(arr.astype("<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, net):
    """Write the full network atomically (tmp file + rename)."""
    arrays = [("w1", net.w1), ("b1", net.b1)]
    for k, head in enumerate(net.heads):
        arrays.append((f"head{k}.w2", head.w2))
        arrays.append((f"head{k}.b2", head.b2))
    blob = [MAGIC, struct.pack("<II", net.classes_per_task, len(arrays))]
    blob.extend(_pack_array(name, arr) for name, arr in arrays)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(b"".join(blob))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Read a checkpoint back into a NetworkState."""
    if not os.path.exists(path):
        raise CheckpointError(f"no such checkpoint: {path}")
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    classes, count = reader.unpack("<II")
    arrays = {}
    order = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("ascii")
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack("<" + "I" * ndim)
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(reader.take(size * 8), dtype="<f8")
        arrays[name] = data.reshape(dims).astype(np.float64)
        order.append(name)
    if reader.pos != len(reader.buf):
        raise CheckpointError(f"{path}: trailing bytes after last array")

    for required in ("w1", "b1"):
        if required not in arrays:
            raise CheckpointError(f"{path}: missing array {required!r}")
    heads = []
    k = 0
    while f"head{k}.w2" in arrays:
        if f"head{k}.b2" not in arrays:
            raise CheckpointError(f"{path}: head {k} lacks its bias")
        heads.append(Head(w2=arrays[f"head{k}.w2"], b2=arrays[f"head{k}.b2"]))
        k += 1
    expected = 2 + 2 * len(heads)
    if len(order) != expected:
        raise CheckpointError(
            f"{path}: {len(order)} arrays present, expected {expected}"
        )
    return NetworkState(
        w1=arrays["w1"], b1=arrays["b1"],
        classes_per_task=classes, heads=heads,
    )
