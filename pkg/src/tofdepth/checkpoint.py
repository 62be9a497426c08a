"""Checkpoint container.

Layout: magic "TOFR", little-endian u32 format version (= 1), little-endian
u32 header length, UTF-8 JSON header, then raw little-endian float32
parameter data in manifest order. The header carries the full network
config, the parameter name/shape manifest, and (optionally) the optimizer
state manifest; optimizer arrays follow the parameters in the data block.

Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpointError, UnsupportedVersionError
from .model import Network, NetworkConfig
from .optim import OptimizerState

MAGIC = b"TOFR"
VERSION = 1


def _optimizer_header(state: OptimizerState, manifest):
    return {
        "lr": state.lr,
        "rho": state.rho,
        "momentum": state.momentum,
        "eps": state.eps,
        "step_count": state.step_count,
        "entries": [{"name": f"acc.{m['name']}", "shape": m["shape"]} for m in manifest]
        + [{"name": f"buf.{m['name']}", "shape": m["shape"]} for m in manifest],
    }


def save_checkpoint(net: Network, path, optimizer: OptimizerState | None = None) -> None:
    """Write the network (and optionally optimizer state) to path."""
    manifest = net.param_manifest()
    header = {
        "config": net.config.to_dict(),
        "params": manifest,
        "optimizer": _optimizer_header(optimizer, manifest) if optimizer else None,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    chunks = [MAGIC, struct.pack("<II", VERSION, len(header_bytes)), header_bytes]
    for name, p in net.params.items():
        chunks.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    if optimizer is not None:
        for arr in optimizer.to_arrays().values():
            chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path):
    """Read a checkpoint; returns (Network, OptimizerState | None)."""
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise CorruptCheckpointError(f"{path}: file too short for a checkpoint header")
    if blob[:4] != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: format version {version}, expected {VERSION}")
    if len(blob) < 12 + header_len:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable header ({e})") from e

    data = blob[12 + header_len :]
    manifest = header["params"]
    opt_header = header.get("optimizer")
    entries = list(manifest) + (opt_header["entries"] if opt_header else [])
    expected = sum(int(np.prod(m["shape"])) for m in entries) * 4
    if len(data) != expected:
        raise CorruptCheckpointError(
            f"{path}: data block is {len(data)} bytes, manifest expects {expected}"
        )

    offset = 0
    arrays = {}
    for m in entries:
        shape = tuple(m["shape"])
        count = int(np.prod(shape))
        arrays[m["name"]] = np.frombuffer(
            data, dtype="<f4", count=count, offset=offset
        ).reshape(shape).copy()
        offset += count * 4

    config = NetworkConfig.from_dict(header["config"])
    params = {m["name"]: arrays[m["name"]] for m in manifest}
    net = Network(config, params=params)

    optimizer = None
    if opt_header:
        optimizer = OptimizerState(
            lr=opt_header["lr"], rho=opt_header["rho"],
            momentum=opt_header["momentum"], eps=opt_header["eps"],
            step_count=opt_header["step_count"],
        )
        for m in manifest:
            optimizer.acc[m["name"]] = arrays[f"acc.{m['name']}"]
            optimizer.buf[m["name"]] = arrays[f"buf.{m['name']}"]
    return net, optimizer
