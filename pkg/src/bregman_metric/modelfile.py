"""Binary model file: magic, u32 header length, JSON header, little-endian f64 payload.

The header records the format version, every parameter block's name and
shape (in ``BregmanModel.parameter_blocks`` order) and the scalars needed to
rebuild the model. Payload length must equal the sum of the declared shapes.
"""

import json
import struct

import numpy as np

from .encoder import MlpEncoder
from .errors import BregmanMetricError
from .phi import GnmPhi
from .trainer import BregmanModel

MAGIC = b"BMDL"
FORMAT_VERSION = 1
_F64 = np.dtype("<f8")


class ModelFormatError(BregmanMetricError):
    pass


def _header(model, seed):
    enc = model.encoder
    return {
        "format_version": FORMAT_VERSION,
        "encoder_dims": enc.dims,
        "class_count": int(model.class_count),
        "m": int(model.phi.m),
        "d": int(model.phi.dim),
        "eps_quad": float(model.phi.eps_quad),
        "seed": int(seed),
        "blocks": [[name, list(arr.shape)] for name, arr in model.parameter_blocks()],
    }


def to_bytes(model, seed=0):
    header = json.dumps(_header(model, seed), sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(np.ascontiguousarray(arr, dtype=_F64).tobytes()
                       for _, arr in model.parameter_blocks())
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def from_bytes(blob):
    """Inverse of ``to_bytes``; returns ``(model, header)``."""
    if blob[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    if len(blob) < 8:
        raise ModelFormatError("truncated header")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8:8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"format version {version} is not supported (expected {FORMAT_VERSION})")

    shapes = [tuple(shape) for _, shape in header["blocks"]]
    expected = sum(int(np.prod(s)) for s in shapes) * _F64.itemsize
    payload = blob[8 + hlen:]
    if len(payload) != expected:
        raise ModelFormatError(f"payload holds {len(payload)} bytes, header declares {expected}")

    arrays, offset = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, _F64, count, offset).reshape(shape).astype(float))
        offset += count * _F64.itemsize

    dims = header["encoder_dims"]
    n_layers = len(dims) - 1
    if len(arrays) != 2 * n_layers + 4:
        raise ModelFormatError(f"{len(arrays)} blocks do not fit a {n_layers}-layer encoder")
    layers = [(arrays[2 * k], arrays[2 * k + 1]) for k in range(n_layers)]
    head_W, head_b, beta, bias = arrays[2 * n_layers:]
    try:
        model = BregmanModel(MlpEncoder(layers), head_W, head_b,
                             GnmPhi(beta, bias, header["eps_quad"]))
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent blocks: {exc}") from None
    if model.encoder.dims != dims or model.phi.dim != header["d"] or model.phi.m != header["m"]:
        raise ModelFormatError("block shapes disagree with the header")
    return model, header


def save_model(model, path, seed=0):
    with open(path, "wb") as fh:
        fh.write(to_bytes(model, seed))


def load_model(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
