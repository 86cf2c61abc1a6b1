"""Byte-stable containers for networks and whole models.

A file is a single JSON manifest line (sorted keys, '\\n' terminated)
followed by the raw little-endian float64 parameter payload: for each
network in declaration order, each layer's weight matrix row-major, then
its bias vector. Model files embed the model-kind tag, dimensions, and the
constituent network shapes in the manifest; linear coefficient vectors
come first in the payload. Identical parameters always serialize to
identical bytes.
"""
from __future__ import annotations

import json

import numpy as np

from .net import DenseNetwork, NetworkSpec
from .models import (
    DEEPMNL, MNL, RUMNET, TASTENET, VNN,
    ChoiceModel, DeepMNLModel, MNLModel, RumnetModel, TasteNetModel, VNNModel,
)

NET_FORMAT = "rumnet-net-v1"
MODEL_FORMAT = "rumnet-model-v1"


def _spec_dict(spec: NetworkSpec) -> dict:
    return {"input_dim": spec.input_dim, "output_dim": spec.output_dim,
            "depth": spec.depth, "width": spec.width, "activation": spec.activation}


def _spec_from_dict(d: dict) -> NetworkSpec:
    return NetworkSpec(d["input_dim"], d["output_dim"], d["depth"], d["width"],
                       d["activation"])


def _net_payload(net: DenseNetwork) -> bytes:
    chunks = []
    for w, b in net.layers:
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(chunks)


class _PayloadReader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, shape) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * 8
        if self.pos + nbytes > len(self.raw):
            raise ValueError("truncated parameter payload")
        arr = np.frombuffer(self.raw, dtype="<f8", count=count, offset=self.pos)
        self.pos += nbytes
        return arr.reshape(shape).astype(np.float64)

    def done(self):
        if self.pos != len(self.raw):
            raise ValueError(
                f"trailing bytes in payload: consumed {self.pos} of {len(self.raw)}")


def _net_from_reader(spec: NetworkSpec, reader: _PayloadReader) -> DenseNetwork:
    layers = []
    for dout, din in spec.layer_dims():
        w = reader.take((dout, din))
        b = reader.take((dout,))
        layers.append((w, b))
    return DenseNetwork(spec, layers)


def _write(path, manifest: dict, payload: bytes):
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(payload)


def _read(path, expected_format: str):
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    manifest = json.loads(header.decode("utf-8"))
    if manifest.get("format") != expected_format:
        raise ValueError(
            f"{path}: expected format {expected_format!r}, got {manifest.get('format')!r}")
    return manifest, _PayloadReader(payload)


def save_network(path, net: DenseNetwork):
    manifest = {"format": NET_FORMAT, **_spec_dict(net.spec)}
    _write(path, manifest, _net_payload(net))


def load_network(path) -> DenseNetwork:
    manifest, reader = _read(path, NET_FORMAT)
    net = _net_from_reader(_spec_from_dict(manifest), reader)
    reader.done()
    return net


def save_model(path, model: ChoiceModel):
    manifest = {"format": MODEL_FORMAT, "kind": model.kind,
                "d_x": model.d_x, "d_z": model.d_z}
    chunks = []
    if isinstance(model, (MNLModel, TasteNetModel)):
        chunks.append(np.ascontiguousarray(model.beta, dtype="<f8").tobytes())
    if isinstance(model, TasteNetModel):
        manifest["taste_spec"] = _spec_dict(model.taste_net.spec)
    elif isinstance(model, DeepMNLModel):
        manifest["spec"] = _spec_dict(model.net.spec)
    elif isinstance(model, VNNModel):
        manifest["spec"] = _spec_dict(model.net.spec)
        manifest["n"] = model.n
    elif isinstance(model, RumnetModel):
        manifest["K"] = model.K
        manifest["d_eps"] = model.d_eps
        manifest["d_nu"] = model.d_nu
        manifest["utility_spec"] = _spec_dict(model.utility_net.spec)
        manifest["eps_spec"] = _spec_dict(model.eps_nets[0].spec)
        manifest["nu_spec"] = _spec_dict(model.nu_nets[0].spec)
    for net in model.networks():
        chunks.append(_net_payload(net))
    _write(path, manifest, b"".join(chunks))


def load_model(path) -> ChoiceModel:
    manifest, reader = _read(path, MODEL_FORMAT)
    kind = manifest["kind"]
    d_x, d_z = manifest["d_x"], manifest["d_z"]
    if kind == MNL:
        model = MNLModel(reader.take((d_x,)), d_z=d_z)
    elif kind == TASTENET:
        beta = reader.take((d_x,))
        taste = _net_from_reader(_spec_from_dict(manifest["taste_spec"]), reader)
        model = TasteNetModel(beta, taste)
    elif kind == DEEPMNL:
        net = _net_from_reader(_spec_from_dict(manifest["spec"]), reader)
        model = DeepMNLModel(net, d_x, d_z)
    elif kind == VNN:
        net = _net_from_reader(_spec_from_dict(manifest["spec"]), reader)
        model = VNNModel(net, manifest["n"], d_x, d_z)
    elif kind == RUMNET:
        utility = _net_from_reader(_spec_from_dict(manifest["utility_spec"]), reader)
        eps_spec = _spec_from_dict(manifest["eps_spec"])
        nu_spec = _spec_from_dict(manifest["nu_spec"])
        eps_nets = [_net_from_reader(eps_spec, reader) for _ in range(manifest["K"])]
        nu_nets = [_net_from_reader(nu_spec, reader) for _ in range(manifest["K"])]
        model = RumnetModel(utility, eps_nets, nu_nets, d_x, d_z)
    else:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    reader.done()
    return model
