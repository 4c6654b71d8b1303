"""Binary checkpoint container.

Layout (all integers little-endian u32)::

    b"D2RLCKPT" | version | tensor_count
    per tensor: name_len | name (utf-8) | rank | dims... | float32 payload

Network topologies travel alongside the weights as small integer-coded
tensors named ``meta.<network>``; every code fits exactly in a float32.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .arch import Head, Kind, Network, NetworkTopology
from .errors import CheckpointError

MAGIC = b"D2RLCKPT"
VERSION = 1

_KIND_CODES = {Kind.VANILLA: 0, Kind.DENSE: 1, Kind.RESIDUAL: 2}
_HEAD_CODES = {Head.Q: 0, Head.GAUSSIAN: 1, Head.DETERMINISTIC: 2}
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


def encode(tensors: dict[str, np.ndarray]) -> bytes:
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    pos = 8
    try:
        version, count = struct.unpack_from("<II", blob, pos)
        pos += 8
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * n > len(blob):
                raise CheckpointError(f"truncated payload for {name}")
            arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(dims)
            pos += 4 * n
            tensors[name] = arr.astype(np.float64)
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last tensor")
    return tensors


def save(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(tensors))
    tmp.replace(path)


def load(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode(path.read_bytes())


def topology_to_tensor(t: NetworkTopology, dtype=np.float64) -> np.ndarray:
    """``[kind, input_dim, hidden_dim, layers, head, action_dim, compute_dtype]`` as small integers."""
    return np.array([_KIND_CODES[t.kind], t.input_dim, t.hidden_dim, t.num_hidden_layers,
                     _HEAD_CODES[t.head], t.action_dim, _DTYPE_CODES[np.dtype(dtype)]], dtype=np.float64)


def topology_from_tensor(arr: np.ndarray) -> tuple[NetworkTopology, np.dtype]:
    codes = [int(round(v)) for v in np.asarray(arr).ravel()]
    if len(codes) != 7:
        raise CheckpointError("malformed topology record")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    heads = {v: k for k, v in _HEAD_CODES.items()}
    dtypes = {v: k for k, v in _DTYPE_CODES.items()}
    try:
        topo = NetworkTopology(kind=kinds[codes[0]], input_dim=codes[1], hidden_dim=codes[2],
                               num_hidden_layers=codes[3], head=heads[codes[4]], action_dim=codes[5])
        return topo, dtypes[codes[6]]
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"malformed topology record: {exc}") from None


def network_tensors(prefix: str, net: Network) -> dict[str, np.ndarray]:
    tensors = {f"meta.{prefix}": topology_to_tensor(net.topology, net.dtype)}
    for name, arr in net.named_parameters():
        tensors[f"{prefix}.{name}"] = arr
    return tensors


def network_from_tensors(prefix: str, tensors: dict[str, np.ndarray]) -> Network:
    key = f"meta.{prefix}"
    if key not in tensors:
        raise CheckpointError(f"checkpoint has no network named {prefix!r}")
    topology, dtype = topology_from_tensor(tensors[key])
    net = Network(topology, dtype=dtype)
    strip = len(prefix) + 1
    params = {k[strip:]: v for k, v in tensors.items() if k.startswith(prefix + ".")}
    missing = {name for name, _ in net.named_parameters()} - params.keys()
    if missing:
        raise CheckpointError(f"{prefix}: missing tensors {sorted(missing)}")
    net.load_parameters(params)
    return net


def quantize(net: Network) -> Network:
    """Copy of ``net`` with every parameter rounded through float32, as a checkpoint stores it."""
    clone = net.copy()
    for _, arr in clone.named_parameters():
        arr[...] = arr.astype(np.float32).astype(arr.dtype)
    return clone
