"""
Checkpoint files.

Layout, all text lines UTF-8 and newline terminated::

    hctx-checkpoint 1
    {"json": "metadata", "keys": "sorted"}
    <tensor name> float64 <comma-separated shape, empty for a scalar>
    ...
    end
    <raw little-endian float64 payloads, one per tensor, header order>

Writing the same tensors and metadata twice gives identical bytes.
"""
import json
import os

import numpy as np
import torch

from core.exceptions import CheckpointMismatchError

MAGIC = "hctx-checkpoint"
VERSION = 1
DTYPE_NAME = "float64"
PAYLOAD_DTYPE = np.dtype("<f8")


def _shape_text(shape):
    return ",".join(str(s) for s in shape)


def _parse_shape(text):
    return tuple(int(s) for s in text.split(",") if s)


def save_checkpoint(path, tensors, metadata=None):
    """Write ``name -> tensor`` in iteration order; replaces ``path``
    atomically so a crash never leaves a torn file behind."""
    header = [f"{MAGIC} {VERSION}",
              json.dumps(metadata or {}, sort_keys=True)]
    payloads = []
    for name, tensor in tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"Tensor name {name!r} is not a single word")
        array = tensor.detach().cpu().to(torch.float64).numpy()
        header.append(f"{name} {DTYPE_NAME} {_shape_text(array.shape)}")
        payloads.append(np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE))
    header.append("end")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(("\n".join(header) + "\n").encode())
        for array in payloads:
            f.write(array.tobytes())
    os.replace(tmp, path)


def _read_line(f, path):
    line = f.readline()
    if not line.endswith(b"\n"):
        raise ValueError(f"{path}: truncated header")
    return line[:-1].decode()


def load_checkpoint(path):
    """``(tensors, metadata)`` with tensors in file order"""
    with open(path, "rb") as f:
        first = _read_line(f, path).split()
        if len(first) != 2 or first[0] != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(first[1]) != VERSION:
            raise ValueError(f"{path}: unsupported version {first[1]}")
        metadata = json.loads(_read_line(f, path))
        entries = []
        while True:
            line = _read_line(f, path)
            if line == "end":
                break
            parts = line.split(" ")
            if len(parts) != 3 or parts[1] != DTYPE_NAME:
                raise ValueError(f"{path}: bad tensor line {line!r}")
            entries.append((parts[0], _parse_shape(parts[2])))
        tensors = {}
        for name, shape in entries:
            count = int(np.prod(shape, dtype=np.int64))
            raw = f.read(count * PAYLOAD_DTYPE.itemsize)
            if len(raw) != count * PAYLOAD_DTYPE.itemsize:
                raise ValueError(f"{path}: payload of {name} is truncated")
            array = np.frombuffer(raw, dtype=PAYLOAD_DTYPE).reshape(shape)
            tensors[name] = torch.from_numpy(array.astype(np.float64))
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after payloads")
    return tensors, metadata


def module_tensors(prefix, module):
    return {f"{prefix}.{name}": t for name, t in module.state_dict().items()}


def mismatches(expected, found):
    """Human-readable differences between two name -> tensor maps"""
    problems = []
    for name, tensor in expected.items():
        if name not in found:
            problems.append(f"missing {name} {tuple(tensor.shape)}")
        elif tuple(found[name].shape) != tuple(tensor.shape):
            problems.append(
                f"{name}: checkpoint {tuple(found[name].shape)}, "
                f"model {tuple(tensor.shape)}"
            )
    problems += [f"unexpected {name}" for name in found
                 if name not in expected]
    return problems


def load_into(modules, tensors):
    """Copy checkpoint tensors into ``{prefix: module}``; every tensor of
    every module must be present with the right shape."""
    expected = {}
    for prefix, module in modules.items():
        expected.update(module_tensors(prefix, module))
    problems = mismatches(expected, tensors)
    if problems:
        raise CheckpointMismatchError(problems)
    for prefix, module in modules.items():
        state = {
            name[len(prefix) + 1:]: tensors[name]
            for name in module_tensors(prefix, module)
        }
        module.load_state_dict(state)
