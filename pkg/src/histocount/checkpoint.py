"""Weight checkpoint file format.

Layout: the magic bytes ``HNET1\\n``, a text header with one line per
tensor (name followed by its extents, space separated) ended by a blank
line, then the raw little-endian float64 payload of every tensor in
header order. Round-trips are bit-exact.
"""

import numpy as np

MAGIC = b"HNET1\n"


class CheckpointError(IOError):
    """Malformed or truncated checkpoint file."""


def save_checkpoint(path, named_arrays):
    """Write an ordered mapping of name -> float64 array."""
    lines = []
    for name, arr in named_arrays.items():
        if " " in name or "\n" in name or not name:
            raise ValueError(f"invalid tensor name {name!r}")
        lines.append(" ".join([name, *map(str, np.asarray(arr).shape)]))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(("\n".join(lines) + "\n\n").encode("ascii"))
        for arr in named_arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into an ordered dict of name -> array."""
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic bytes")
    header_end = blob.find(b"\n\n", len(MAGIC))
    if header_end < 0:
        raise CheckpointError(f"{path}: unterminated header")
    entries = []
    for line in blob[len(MAGIC) : header_end].decode("ascii").splitlines():
        parts = line.split()
        if not parts:
            raise CheckpointError(f"{path}: empty header line")
        name, shape = parts[0], tuple(int(x) for x in parts[1:])
        entries.append((name, shape))
    out = {}
    offset = header_end + 2
    for name, shape in entries:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated payload for tensor {name!r}")
        out[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return out
