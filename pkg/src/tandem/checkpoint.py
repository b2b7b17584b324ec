"""Single-file binary checkpoints with a checksum.

Layout: magic, u32 header length, JSON header (format version,
architecture descriptor, training step, seed, config snapshot, tensor
manifest, optimizer hyperparameters), raw little-endian tensor data in
manifest order, u32 CRC32 of everything before it. Writes are atomic
(temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import asdict

import numpy as np

from .autodiff import Tensor
from .models import Architecture, ModelParams
from .optim import AdamState

MAGIC = b"TANDEMC1"
VERSION = 1


class CheckpointError(Exception):
    pass


def _manifest_entry(name, arr):
    return {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}


def save_checkpoint(path, params: ModelParams, adam: AdamState | None = None,
                    step: int = 0, config: dict | None = None, seed: int | None = None):
    """Write params (and optimizer state) to path; bit-exact round trip."""
    tensors = []
    for name in sorted(params.tensors):
        tensors.append((name, params.tensors[name].data))
    if adam is not None:
        for name in sorted(adam.m):
            tensors.append((f"adam.m/{name}", adam.m[name]))
            tensors.append((f"adam.v/{name}", adam.v[name]))
    header = {
        "version": VERSION,
        "arch": params.arch.to_dict(),
        "step": int(step),
        "seed": seed,
        "config": config,
        "adam": None if adam is None else {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "step": adam.step,
        },
        "tensors": [_manifest_entry(n, a) for n, a in tensors],
    }
    blob = json.dumps(header).encode()
    parts = [MAGIC, struct.pack("<I", len(blob)), blob]
    for _, arr in tensors:
        parts.append(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    body = b"".join(parts)
    body += struct.pack("<I", zlib.crc32(body))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(body)
    os.replace(tmp, path)


def load_checkpoint(path, expect_arch: Architecture | None = None):
    """Load (params, adam_or_None, header). Rejects corrupted files and,
    when expect_arch is given, architecture mismatches."""
    with open(path, "rb") as f:
        body = f.read()
    if len(body) < len(MAGIC) + 8 or body[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    payload, crc_bytes = body[:-4], body[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(payload):
        raise CheckpointError(f"{path}: checksum mismatch (corrupted or truncated)")
    (hlen,) = struct.unpack("<I", body[len(MAGIC) : len(MAGIC) + 4])
    off = len(MAGIC) + 4
    header = json.loads(body[off : off + hlen].decode())
    if header["version"] != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header['version']}")
    arch = Architecture.from_dict(header["arch"])
    if expect_arch is not None and arch != expect_arch:
        raise CheckpointError(
            f"{path}: architecture mismatch: checkpoint {arch.variant}/{arch.obs_shape} "
            f"vs expected {expect_arch.variant}/{expect_arch.obs_shape}"
        )
    off += hlen
    arrays = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        if off + nbytes > len(payload):
            raise CheckpointError(f"{path}: truncated tensor data")
        arr = np.frombuffer(payload[off : off + nbytes], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="))
        off += nbytes
    tensors = {
        n: Tensor(a.copy(), requires_grad=True, name=n)
        for n, a in arrays.items() if not n.startswith("adam.")
    }
    params = ModelParams(arch=arch, tensors=tensors)
    adam = None
    if header.get("adam") is not None:
        a = header["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                         eps=a["eps"], step=a["step"])
        for n, arr in arrays.items():
            if n.startswith("adam.m/"):
                adam.m[n[len("adam.m/"):]] = arr.copy()
            elif n.startswith("adam.v/"):
                adam.v[n[len("adam.v/"):]] = arr.copy()
    return params, adam, header
