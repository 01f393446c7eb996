"""Embedding networks with configurable parameter sharing.

Two branches (ego = first-person, exo = third-person) map their inputs
into a common D-dimensional space. Three sharing policies:

  full  - one set of parameters used by both branches (classic Siamese)
  semi  - branch-private early conv layers (theta_1, theta_2), shared
          late layers (theta)
  none  - fully separate branches

The two-stream architecture runs a spatial (RGB) and a temporal (stacked
flow) stream per branch and fuses their embeddings through two linear
layers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

POLICIES = ("full", "semi", "none")
ARCHS = ("spatial", "temporal", "two-stream")


@dataclass(frozen=True)
class LayerSpec:
    """One layer: conv | pool | linear | relu."""

    kind: str
    channels: int = 0      # conv: output channels
    kernel: int = 0        # conv: kernel size
    stride: int = 1        # conv/pool
    pad: int = 0           # conv
    window: int = 0        # pool
    units: int = 0         # linear: output units


def conv(channels, kernel=3, stride=1, pad=1):
    return LayerSpec("conv", channels=channels, kernel=kernel, stride=stride, pad=pad)


def pool(window=2, stride=2):
    return LayerSpec("pool", window=window, stride=stride)


def lin(units):
    return LayerSpec("linear", units=units)


def act():
    return LayerSpec("relu")


@dataclass(frozen=True)
class StreamSpec:
    """One stream: input [in_channels, in_size, in_size], early layers
    (branch-private under semi), late layers (shared under semi)."""

    in_channels: int
    in_size: int
    early: tuple
    late: tuple


@dataclass(frozen=True)
class NetworkSpec:
    arch: str                      # spatial | temporal | two-stream
    policy: str                    # full | semi | none
    embed_dim: int = 128
    crop_size: int = 32            # canonical flow-crop side
    spatial: StreamSpec | None = None
    temporal: StreamSpec | None = None
    fusion: tuple = ()             # two-stream only


def default_spec(arch: str, policy: str = "semi", embed_dim: int = 128,
                 image_size: int = 64, crop_size: int = 32) -> NetworkSpec:
    """Desk-scale default: 4 branch-private conv layers, then 2 shared
    conv layers and 2 shared linear layers down to the embedding."""
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    if policy not in POLICIES:
        raise ValueError(f"unknown sharing policy {policy!r}; expected one of {POLICIES}")

    def stream(in_ch, size):
        # first conv strides by 2 to keep desk-scale CPU training fast
        early = (
            conv(8, stride=2), act(), pool(),
            conv(16), act(), pool(),
            conv(16), act(),
            conv(32), act(), pool(),
        )
        late = (
            conv(32), act(),
            conv(32), act(),
            lin(256), act(),
            lin(embed_dim),
        )
        return StreamSpec(in_ch, size, early, late)

    spatial = stream(3, image_size) if arch in ("spatial", "two-stream") else None
    temporal = stream(10, crop_size) if arch in ("temporal", "two-stream") else None
    fusion = (lin(embed_dim), act(), lin(embed_dim)) if arch == "two-stream" else ()
    return NetworkSpec(arch, policy, embed_dim, crop_size, spatial, temporal, fusion)


# ---------------------------------------------------------------------------
# shape propagation and parameter instantiation


def _out_shape(shape, layer: LayerSpec, idx: int):
    """Shape after one layer; raises ShapeError naming the layer index."""
    if layer.kind == "conv":
        if len(shape) != 3:
            raise ShapeError(f"layer {idx}: conv after flatten (input shape {shape})")
        c, h, w = shape
        ho = (h + 2 * layer.pad - layer.kernel) // layer.stride + 1
        wo = (w + 2 * layer.pad - layer.kernel) // layer.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"layer {idx}: conv kernel {layer.kernel} too large for input {shape}")
        return (layer.channels, ho, wo)
    if layer.kind == "pool":
        if len(shape) != 3:
            raise ShapeError(f"layer {idx}: pool after flatten (input shape {shape})")
        c, h, w = shape
        if layer.window > h or layer.window > w:
            raise ShapeError(f"layer {idx}: pool window {layer.window} exceeds input {shape}")
        ho = (h - layer.window) // layer.stride + 1
        wo = (w - layer.window) // layer.stride + 1
        return (c, ho, wo)
    if layer.kind == "linear":
        n = int(np.prod(shape))
        return (layer.units,)
    if layer.kind == "relu":
        return shape
    raise ShapeError(f"layer {idx}: unknown kind {layer.kind!r}")


def _param_shapes(layer: LayerSpec, in_shape):
    """Parameter shapes for a layer, or None if parameter-free."""
    if layer.kind == "conv":
        c = in_shape[0]
        return {"weight": (layer.channels, c, layer.kernel, layer.kernel),
                "bias": (layer.channels,)}
    if layer.kind == "linear":
        n = int(np.prod(in_shape))
        return {"weight": (layer.units, n), "bias": (layer.units,)}
    return None


def _init_params(shapes, seed_key):
    """He-style uniform init from a deterministic sub-seed.

    Weight bound sqrt(6/fan_in) keeps response variance roughly constant
    through stacked relu layers; biases start at zero.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed_key[0], spawn_key=seed_key[1:]))
    w_shape = shapes["weight"]
    fan_in = int(np.prod(w_shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return {
        "weight": T.param(rng.uniform(-bound, bound, size=w_shape)),
        "bias": T.param(np.zeros(shapes["bias"])),
    }


class ParameterStore:
    """Named parameter groups: ego-private (theta_1), exo-private
    (theta_2), and shared (theta). Under semi sharing the shared group is
    one physical storage referenced by both branches."""

    def __init__(self):
        self.groups = {"ego": {}, "exo": {}, "shared": {}}

    def add(self, group: str, name: str, t: Tensor) -> None:
        self.groups[group][name] = t

    def named(self):
        for group in ("ego", "exo", "shared"):
            for name, t in self.groups[group].items():
                yield group, name, t

    def tensors(self):
        return [t for _, _, t in self.named()]

    def count(self, group: str) -> int:
        return sum(t.data.size for t in self.groups[group].values())

    def total(self) -> int:
        return sum(self.count(g) for g in self.groups)


# ---------------------------------------------------------------------------
# network


_STREAM_IDS = {"spatial": 0, "temporal": 1, "fusion": 2}
_SECTION_IDS = {"early": 0, "late": 1, "fusion": 2}


class Network:
    """Executable two-branch embedding network over a ParameterStore."""

    def __init__(self, spec: NetworkSpec, seed: int):
        if spec.policy not in POLICIES:
            raise ValueError(f"unknown sharing policy {spec.policy!r}")
        if spec.arch not in ARCHS:
            raise ValueError(f"unknown architecture {spec.arch!r}")
        self.spec = spec
        self.seed = seed
        self.store = ParameterStore()
        # branch -> stream -> list of (LayerSpec, params-or-None)
        self._layers = {"ego": {}, "exo": {}}
        self._in_shapes = {}

        for stream_name in ("spatial", "temporal"):
            sspec = getattr(spec, stream_name)
            if sspec is None:
                continue
            self._in_shapes[stream_name] = (sspec.in_channels, sspec.in_size, sspec.in_size)
            self._build_stream(stream_name, sspec, seed)
        if spec.arch == "two-stream":
            self._build_fusion(spec, seed)
        self._validate_inputs()

    # -- construction

    def _section_shared(self, section: str) -> bool:
        # early layers are private except under full sharing; late and
        # fusion layers are shared except under no sharing
        if section == "early":
            return self.spec.policy == "full"
        return self.spec.policy != "none"

    def _build_stream(self, stream_name, sspec, seed):
        shape = (sspec.in_channels, sspec.in_size, sspec.in_size)
        for branch in ("ego", "exo"):
            self._layers[branch][stream_name] = []
        idx = 0
        for section, layers in (("early", sspec.early), ("late", sspec.late)):
            shared = self._section_shared(section)
            for layer in layers:
                pshapes = _param_shapes(layer, shape)
                key = (seed, _STREAM_IDS[stream_name], _SECTION_IDS[section], idx)
                if pshapes is None:
                    for branch in ("ego", "exo"):
                        self._layers[branch][stream_name].append((layer, None))
                elif shared:
                    params = _init_params(pshapes, key)
                    for pname, t in params.items():
                        self.store.add("shared", f"{stream_name}.{section}.{idx}.{pname}", t)
                    for branch in ("ego", "exo"):
                        self._layers[branch][stream_name].append((layer, params))
                else:
                    for branch in ("ego", "exo"):
                        # same sub-seed per branch: branches start identical
                        params = _init_params(pshapes, key)
                        for pname, t in params.items():
                            self.store.add(branch, f"{stream_name}.{section}.{idx}.{pname}", t)
                        self._layers[branch][stream_name].append((layer, params))
                shape = _out_shape(shape, layer, idx)
                idx += 1
        if shape != (self.spec.embed_dim,):
            raise ShapeError(
                f"{stream_name} stream ends with shape {shape}, expected ({self.spec.embed_dim},)"
            )

    def _build_fusion(self, spec, seed):
        shape = (2 * spec.embed_dim,)
        shared = self._section_shared("fusion")
        for branch in ("ego", "exo"):
            self._layers[branch]["fusion"] = []
        for idx, layer in enumerate(spec.fusion):
            pshapes = _param_shapes(layer, shape)
            key = (seed, _STREAM_IDS["fusion"], _SECTION_IDS["fusion"], idx)
            if pshapes is None:
                for branch in ("ego", "exo"):
                    self._layers[branch]["fusion"].append((layer, None))
            elif shared:
                params = _init_params(pshapes, key)
                for pname, t in params.items():
                    self.store.add("shared", f"fusion.{idx}.{pname}", t)
                for branch in ("ego", "exo"):
                    self._layers[branch]["fusion"].append((layer, params))
            else:
                for branch in ("ego", "exo"):
                    params = _init_params(pshapes, key)
                    for pname, t in params.items():
                        self.store.add(branch, f"fusion.{idx}.{pname}", t)
                    self._layers[branch]["fusion"].append((layer, params))
            shape = _out_shape(shape, layer, idx)
        if shape != (spec.embed_dim,):
            raise ShapeError(f"fusion ends with shape {shape}, expected ({spec.embed_dim},)")

    def _validate_inputs(self):
        if self.spec.arch in ("spatial", "two-stream") and self.spec.spatial is None:
            raise ShapeError("spatial stream spec missing")
        if self.spec.arch in ("temporal", "two-stream") and self.spec.temporal is None:
            raise ShapeError("temporal stream spec missing")

    # -- forward

    def _run(self, branch, stream_name, x: Tensor) -> Tensor:
        for layer, params in self._layers[branch][stream_name]:
            if layer.kind == "conv":
                x = T.conv2d(x, params["weight"], params["bias"], layer.stride, layer.pad)
            elif layer.kind == "pool":
                x = T.maxpool2d(x, layer.window, layer.stride)
            elif layer.kind == "relu":
                x = T.relu(x)
            elif layer.kind == "linear":
                if x.data.ndim > 2:
                    n = int(np.prod(x.data.shape[1:])) if x.data.ndim == 4 else x.data.size
                    x = T.reshape(x, (x.data.shape[0], n) if x.data.ndim == 4 else (n,))
                x = T.linear(x, params["weight"], params["bias"])
        return x

    def _check_input(self, stream_name, x: Tensor):
        want = self._in_shapes[stream_name]
        got = x.data.shape
        if got != want and got[1:] != want:
            raise ShapeError(f"{stream_name} input {got} does not match spec {want}")

    def embed(self, branch: str, image: Tensor | None = None, flow: Tensor | None = None) -> Tensor:
        """Embed one input (or a leading-batch of inputs) through a branch."""
        if branch not in ("ego", "exo"):
            raise ValueError(f"unknown branch {branch!r}")
        arch = self.spec.arch
        if arch == "spatial":
            if image is None:
                raise ShapeError("spatial network requires an image input")
            self._check_input("spatial", image)
            return self._run(branch, "spatial", image)
        if arch == "temporal":
            if flow is None:
                raise ShapeError("temporal network requires a flow-stack input")
            self._check_input("temporal", flow)
            return self._run(branch, "temporal", flow)
        if image is None or flow is None:
            raise ShapeError("two-stream network requires both image and flow inputs")
        self._check_input("spatial", image)
        self._check_input("temporal", flow)
        es = self._run(branch, "spatial", image)
        et = self._run(branch, "temporal", flow)
        return self._run(branch, "fusion", T.concat(es, et))

    def embed_ego(self, image=None, flow=None) -> Tensor:
        return self.embed("ego", image, flow)

    def embed_exo(self, image=None, flow=None) -> Tensor:
        return self.embed("exo", image, flow)


def build_network(spec: NetworkSpec, seed: int) -> Network:
    return Network(spec, seed)


def stream_param_counts(spec: NetworkSpec) -> dict:
    """Scalar parameter counts of one instance of each section."""
    early = late = 0
    for stream_name in ("spatial", "temporal"):
        sspec = getattr(spec, stream_name)
        if sspec is None:
            continue
        shape = (sspec.in_channels, sspec.in_size, sspec.in_size)
        idx = 0
        for section, layers in (("early", sspec.early), ("late", sspec.late)):
            for layer in layers:
                ps = _param_shapes(layer, shape)
                if ps is not None:
                    n = sum(int(np.prod(s)) for s in ps.values())
                    if section == "early":
                        early += n
                    else:
                        late += n
                shape = _out_shape(shape, layer, idx)
                idx += 1
    shape = (2 * spec.embed_dim,)
    for idx, layer in enumerate(spec.fusion):
        ps = _param_shapes(layer, shape)
        if ps is not None:
            late += sum(int(np.prod(s)) for s in ps.values())
        shape = _out_shape(shape, layer, idx)
    return {"early": early, "late": late}


# ---------------------------------------------------------------------------
# matching


@dataclass
class MatchQuery:
    ego: np.ndarray                     # [D]
    candidates: dict                    # person_id -> [D]


def match_score(ego: np.ndarray, cand: np.ndarray) -> float:
    """Negative squared distance; higher means more likely the wearer."""
    if ego.shape != cand.shape:
        raise ShapeError(f"match_score: shapes {ego.shape} vs {cand.shape}")
    d = ego - cand
    return -float(np.dot(d, d))


def match(q: MatchQuery) -> int:
    """Argmin-distance candidate; ties broken by smallest person id."""
    if not q.candidates:
        raise ValueError("match: no candidates")
    best_id, best_d = None, None
    for pid in sorted(q.candidates):
        d = -match_score(q.ego, q.candidates[pid])
        if best_d is None or d < best_d:
            best_id, best_d = pid, d
    return best_id


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"EGM1"


def _spec_to_json(spec: NetworkSpec) -> dict:
    return asdict(spec)


def _layers_from_json(layers):
    return tuple(LayerSpec(**d) for d in layers)


def _spec_from_json(d: dict) -> NetworkSpec:
    def stream(sd):
        if sd is None:
            return None
        return StreamSpec(sd["in_channels"], sd["in_size"],
                          _layers_from_json(sd["early"]), _layers_from_json(sd["late"]))

    return NetworkSpec(
        arch=d["arch"], policy=d["policy"], embed_dim=d["embed_dim"],
        crop_size=d["crop_size"], spatial=stream(d["spatial"]),
        temporal=stream(d["temporal"]), fusion=_layers_from_json(d["fusion"]),
    )


class CheckpointError(ValueError):
    pass


def save_checkpoint(net: Network, path) -> None:
    """magic EGM1, uint32 LE header length, JSON header, then float64 LE
    parameters in header order."""
    entries = [{"group": g, "name": n, "shape": list(t.data.shape)}
               for g, n, t in net.store.named()]
    header = json.dumps({"spec": _spec_to_json(net.spec), "params": entries},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for _, _, t in net.store.named():
            f.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    if len(blob) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + hlen:
        raise CheckpointError(f"{path}: truncated header ({hlen} bytes declared)")
    header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    spec = _spec_from_json(header["spec"])
    net = Network(spec, seed=0)
    stored = {(g, n): t for g, n, t in net.store.named()}
    payload = blob[8 + hlen:]
    offset = 0
    for entry in header["params"]:
        key = (entry["group"], entry["name"])
        if key not in stored:
            raise CheckpointError(f"{path}: unexpected parameter {key}")
        t = stored.pop(key)
        shape = tuple(entry["shape"])
        if shape != t.data.shape:
            raise CheckpointError(
                f"{path}: parameter {key} has shape {shape}, spec requires {t.data.shape}"
            )
        nbytes = int(np.prod(shape)) * 8
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: payload shorter than header declares")
        t.data = np.frombuffer(payload[offset:offset + nbytes], dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if stored:
        raise CheckpointError(f"{path}: missing parameters {sorted(stored)}")
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return net
