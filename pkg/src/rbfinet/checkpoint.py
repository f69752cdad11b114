"""Self-describing binary checkpoints.

Layout (all integers big-endian)::

    8 bytes   magic  b"RBFICKPT"
    2 bytes   format version
    4 bytes   header length H
    H bytes   UTF-8 JSON header: geometry, spec fields, tensor table, unit kinds,
              payload length and CRC-32
    payload   float64 little-endian tensors, concatenated in table order

Loading validates every one of these before a network is built, so a damaged
file never yields a partially restored network.
"""

from __future__ import annotations

import json
import math
import os
import struct
import zlib

import numpy as np

from .autograd import BoundedParameter, parameter
from .layers import DenseLayer, Network, NetworkSpec, RBFILayer, UnitKind, parse_geometry

MAGIC = b"RBFICKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct(">8sHI")


class CheckpointIntegrityError(ValueError):
    """The file is not a loadable checkpoint, or does not match what was expected."""


def _spec_fields(spec: NetworkSpec) -> dict:
    return {
        "u_max": spec.u_max, "u_min": spec.u_min, "w_min": spec.w_min, "w_max": spec.w_max,
        "seed": spec.seed, "input_size": spec.input_size, "n_classes": spec.n_classes,
    }


def checkpoint_bytes(net: Network) -> bytes:
    tensors = []
    chunks = []
    kinds = []
    for k, layer in enumerate(net.layers):
        if isinstance(layer, RBFILayer):
            entries = [("u", layer.u.value, layer.u.lo, layer.u.hi), ("w", layer.w.value, layer.w.lo, layer.w.hi)]
            kinds.append([kd.value for kd in layer.kinds])
        else:
            entries = [("W", layer.W.value, None, None), ("b", layer.b.value, None, None)]
            kinds.append(layer.activation)
        for name, value, lo, hi in entries:
            tensors.append({"layer": k, "name": name, "shape": list(value.shape), "lo": lo, "hi": hi})
            chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    payload = b"".join(chunks)
    header = {
        "geometry": net.spec.geometry,
        "spec": _spec_fields(net.spec),
        "tensors": tensors,
        "kinds": kinds,
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)) + blob + payload


def checkpoint_save(net: Network, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(net))


def _fail(msg: str):
    raise CheckpointIntegrityError(msg)


def checkpoint_from_bytes(data: bytes, expected_geometry: str | None = None) -> Network:
    try:
        return _decode(data, expected_geometry)
    except CheckpointIntegrityError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointIntegrityError(f"inconsistent checkpoint: {exc}") from exc


def _decode(data: bytes, expected_geometry: str | None) -> Network:
    if len(data) < _PREFIX.size:
        _fail(f"file has {len(data)} bytes, shorter than the fixed prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        _fail(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        _fail(f"format version {version}, this reader understands {FORMAT_VERSION}")
    if _PREFIX.size + hlen > len(data):
        _fail(f"header length {hlen} runs past the end of the file")
    try:
        header = json.loads(data[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"header is not valid JSON: {exc}") from exc
    payload = data[_PREFIX.size + hlen:]
    if len(payload) != header.get("payload_bytes"):
        _fail(f"payload has {len(payload)} bytes, header declares {header.get('payload_bytes')}")
    if zlib.crc32(payload) != header.get("crc32"):
        _fail("payload checksum mismatch")
    geometry = header["geometry"]
    if expected_geometry is not None:
        if parse_geometry(expected_geometry, **header["spec"]).geometry != geometry:
            _fail(f"checkpoint holds {geometry}, expected {expected_geometry}")
    spec = parse_geometry(geometry, **header["spec"])

    arrays = []
    offset = 0
    for t in header["tensors"]:
        n = math.prod(t["shape"]) * 8
        if offset + n > len(payload):
            _fail(f"tensor {t['name']} of layer {t['layer']} runs past the payload")
        arrays.append(np.frombuffer(payload, dtype="<f8", count=n // 8, offset=offset)
                      .reshape(t["shape"]).astype(np.float64))
        offset += n
    if offset != len(payload):
        _fail("payload longer than the tensor table")

    layers = []
    n_in = spec.input_size
    for k, n_out in enumerate(spec.layer_sizes):
        (ta, a), (tb, b) = [(t, arr) for t, arr in zip(header["tensors"], arrays) if t["layer"] == k]
        if list(a.shape) != [n_in, n_out]:
            _fail(f"layer {k} has weights {a.shape}, geometry needs {(n_in, n_out)}")
        if spec.family == "rbfi":
            kinds = [UnitKind(v) for v in header["kinds"][k]]
            if len(kinds) != n_out or (spec.layer_kinds[k] != "mixed"
                                       and any(kd.value != spec.layer_kinds[k] for kd in kinds)):
                _fail(f"unit kinds of layer {k} contradict {geometry}")
            layers.append(RBFILayer(BoundedParameter(a, ta["lo"], ta["hi"], name="u"),
                                    BoundedParameter(b, tb["lo"], tb["hi"], name="w"),
                                    kinds, spec.gamma))
        else:
            if header["kinds"][k] != spec.layer_kinds[k]:
                _fail(f"activation of layer {k} contradicts {geometry}")
            layers.append(DenseLayer(parameter(a, "W"), parameter(b, "b"), header["kinds"][k]))
        n_in = n_out
    return Network(spec, layers)


def checkpoint_load(path, expected_geometry: str | None = None) -> Network:
    with open(path, "rb") as f:
        data = f.read()
    return checkpoint_from_bytes(data, expected_geometry)
