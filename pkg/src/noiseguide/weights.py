"""Binary weights container ("NGWT").

Layout (all little-endian)::

    b"NGWT"  u16 version
    u32 T  f64 beta_start  f64 beta_end  32-byte sha256(alpha_bar table)
    u16 len + utf-8 kind tag
    u32 len + utf-8 JSON metadata (sorted keys)
    u32 block count
    per block: u16 len + utf-8 name, u8 ndim, ndim x u32 dims, f64 data
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import EpsilonNet
from .noise_model import NoiseModel, NoiseStepNet
from .schedules import DiffusionSchedule, make_linear_beta

MAGIC = b"NGWT"
VERSION = 1


class WeightsError(ValueError):
    pass


@dataclass
class WeightsFile:
    kind: str
    fingerprint: tuple
    meta: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)


def encode(wf: WeightsFile) -> bytes:
    T, b0, b1, digest = wf.fingerprint
    out = [MAGIC, struct.pack("<H", VERSION), struct.pack("<Idd", T, b0, b1), bytes.fromhex(digest)]
    kind = wf.kind.encode()
    out.append(struct.pack("<H", len(kind)) + kind)
    meta = json.dumps(wf.meta, sort_keys=True).encode()
    out.append(struct.pack("<I", len(meta)) + meta)
    out.append(struct.pack("<I", len(wf.blocks)))
    for name, arr in wf.blocks.items():
        arr = np.asarray(arr, dtype="<f8")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode(blob: bytes) -> WeightsFile:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise WeightsError("weights file is truncated")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise WeightsError("not a NGWT weights file")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise WeightsError(f"unsupported weights version {version}")
    T, b0, b1 = struct.unpack("<Idd", take(20))
    digest = take(32).hex()
    (klen,) = struct.unpack("<H", take(2))
    kind = take(klen).decode()
    (mlen,) = struct.unpack("<I", take(4))
    meta = json.loads(take(mlen).decode())
    (count,) = struct.unpack("<I", take(4))
    blocks = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        blocks[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(blob):
        raise WeightsError(f"{len(blob) - pos} unexpected trailing bytes")
    return WeightsFile(kind, (T, b0, b1, digest), meta, blocks)


def save(wf: WeightsFile, path) -> None:
    Path(path).write_bytes(encode(wf))


def load(path) -> WeightsFile:
    return decode(Path(path).read_bytes())


def schedule_from(wf: WeightsFile) -> DiffusionSchedule:
    """Rebuild the linear schedule named in the header and verify its hash."""
    T, b0, b1, _ = wf.fingerprint
    sched = make_linear_beta(T, b0, b1)
    if tuple(sched.fingerprint()) != tuple(wf.fingerprint):
        raise WeightsError("schedule fingerprint does not match a linear schedule")
    return sched


def backbone_to_file(net: EpsilonNet, sched: DiffusionSchedule) -> WeightsFile:
    return WeightsFile("backbone", sched.fingerprint(), net.config(), net.state_dict())


def backbone_from_file(wf: WeightsFile) -> EpsilonNet:
    if wf.kind != "backbone":
        raise WeightsError(f"expected backbone weights, found {wf.kind!r}")
    net = EpsilonNet(**wf.meta)
    net.load_state_dict(wf.blocks)
    return net


def noise_model_to_file(nm: NoiseModel) -> WeightsFile:
    blocks = {}
    for key, net in sorted(nm.nets.items(), reverse=True):
        for name, arr in net.state_dict().items():
            blocks[f"t{key}/{name}"] = arr
    for t in sorted(nm.scales, reverse=True):
        blocks[f"scale/{t}"] = np.array([nm.scales[t]])
        if nm.shared:
            blocks[f"cond/{t}"] = np.array([nm.cond[t]])
    meta = {"arch": nm.arch, "shared": nm.shared, "T": nm.T}
    return WeightsFile("noise-bank", tuple(nm.fingerprint), meta, blocks)


def noise_model_from_file(wf: WeightsFile) -> NoiseModel:
    if wf.kind != "noise-bank":
        raise WeightsError(f"expected noise-model weights, found {wf.kind!r}")
    arch = dict(wf.meta["arch"])
    nm = NoiseModel(int(wf.meta["T"]), tuple(wf.fingerprint), arch, shared=bool(wf.meta["shared"]))
    per_net: dict[int, dict] = {}
    for name, arr in wf.blocks.items():
        head, _, rest = name.partition("/")
        if head == "scale":
            nm.scales[int(rest)] = float(arr[0])
        elif head == "cond":
            nm.cond[int(rest)] = float(arr[0])
        elif head.startswith("t"):
            per_net.setdefault(int(head[1:]), {})[rest] = arr
        else:
            raise WeightsError(f"unexpected block {name!r}")
    for key, state in per_net.items():
        net = NoiseStepNet(**arch)
        net.load_state_dict(state)
        nm.nets[key] = net
    return nm
