"""Checkpoint format SRGD0001: plain-text manifest, then raw parameter
buffers as little-endian float32.

Layout:
    SRGD0001\n
    <name> <d0,d1,...> <byte offset into blob>\n   (one per parameter)
    \n
    <binary blob>
"""

import numpy as np

from .errors import ConfigError, FormatError

MAGIC = b"SRGD0001\n"


def save_checkpoint(path, state):
    """state: ordered dict name -> ndarray."""
    manifest = []
    chunks = []
    offset = 0
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        dims = ",".join(str(d) for d in arr.shape) or "1"
        manifest.append(f"{name} {dims} {offset}\n")
        chunks.append(arr.tobytes())
        offset += len(chunks[-1])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.writelines(m.encode("ascii") for m in manifest)
        fh.write(b"\n")
        for c in chunks:
            fh.write(c)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise FormatError(f"{path}: bad magic header", offset=0)
    body = blob[len(MAGIC):]
    sep = body.find(b"\n\n")
    if sep < 0:
        raise FormatError(f"{path}: manifest not terminated", offset=len(MAGIC))
    manifest, payload = body[:sep + 1], body[sep + 2:]
    state = {}
    for line in manifest.decode("ascii").splitlines():
        try:
            name, dims, off = line.split()
            shape = tuple(int(d) for d in dims.split(","))
            off = int(off)
        except ValueError:
            raise FormatError(f"{path}: malformed manifest line {line!r}") from None
        count = int(np.prod(shape))
        raw = payload[off:off + 4 * count]
        if len(raw) != 4 * count:
            raise FormatError(f"{path}: truncated buffer for {name}",
                              offset=len(MAGIC) + sep + 2 + off)
        state[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return state


def save_model(path, model):
    save_checkpoint(path, model.state_dict())


def load_model(path, model):
    state = load_checkpoint(path)
    try:
        model.load_state_dict(state)
    except ConfigError:
        raise
    return model
