"""Exemplar construction and the SGD training loop.

A FrameSample bundles everything one synchronized frame contributes:
the wearer's first-person image and flow history, the third-person
image and flow history, and the per-person boxes. Pair and triplet
exemplars are enumerated from these samples, materialized into network
inputs (masked images, cropped/stacked flows), and fed to seeded,
deterministic minibatch SGD.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dataset import VideoDataset
from .features import FLOW_STACK_LEN, crop_flow, mask_person, stack_flows
from .losses import PairExemplar, TripletExemplar, contrastive_loss, triplet_loss
from .networks import Network, NetworkSpec, save_checkpoint
from .tensor import OptimState, Tensor, sgd_step

CROP_SIZE = 32


@dataclass
class FrameSample:
    """One synchronized frame of a (first-person, third-person) video pair."""

    frame: int
    ego_camera: str
    wearer: int
    ego_image: np.ndarray          # [S, S, 3]
    ego_flows: list | None         # FLOW_STACK_LEN fields [h, w, 2], oldest first
    exo_image: np.ndarray          # [H, W, 3]
    exo_flows: list | None         # FLOW_STACK_LEN fields [H, W, 2], oldest first
    boxes: list                    # (BBox, visible) in the third-person view
    boxes_hist: list | None        # per history frame: {person: BBox}
    wearer_visible: bool


@dataclass
class TrainConfig:
    lr: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 0.0005
    iterations: int = 2000
    batch_size: int = 16
    margin: float = 1.0
    seed: int = 0
    loss: str = "triplet"          # triplet | contrastive
    neg_sample: str = "all"        # all | random

    def validate(self) -> None:
        if self.lr < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("rates must be non-negative")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if self.loss not in ("triplet", "contrastive"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.neg_sample not in ("all", "random"):
            raise ValueError(f"unknown negative sampling mode {self.neg_sample!r}")


@dataclass
class TrainTrace:
    losses: list = field(default_factory=list)
    wall_clock: float = 0.0
    cpu_time: float = 0.0
    checkpoint_path: str | None = None


@dataclass(frozen=True)
class PairSource:
    """An unmaterialized pair exemplar: frame sample + candidate person."""

    sample: FrameSample
    person: int
    y: int


@dataclass(frozen=True)
class TripletSource:
    """An unmaterialized triplet exemplar: positive is the wearer's box."""

    sample: FrameSample
    neg_person: int


@dataclass
class ExemplarSet:
    items: list
    skipped_frames: int = 0


def samples_from_dataset(ds: VideoDataset, ego_camera: str,
                         frames=None, with_flow: bool = True) -> list:
    """Build FrameSamples for one wearer over a frame range.

    With flow, frames lacking a full FLOW_STACK_LEN-field history are
    dropped (the temporal stream needs 5 consecutive fields).
    """
    info = ds.cameras.get(ego_camera)
    if info is None or info.kind != "ego":
        raise ValueError(f"{ego_camera!r} is not an ego camera")
    wearer = info.wearer
    exo = ds.exo_camera.id
    if frames is None:
        frames = range(ds.frames)
    hist = FLOW_STACK_LEN
    out = []
    for t in frames:
        if with_flow and t < hist - 1:
            continue
        boxes = ds.boxes(exo, t)
        wearer_visible = any(b.person_id == wearer and v for b, v in boxes)
        ego_flows = exo_flows = boxes_hist = None
        if with_flow:
            ts = range(t - hist + 1, t + 1)
            ego_flows = [ds.flow(ego_camera, u) for u in ts]
            exo_flows = [ds.flow(exo, u) for u in ts]
            boxes_hist = [{b.person_id: b for b, _ in ds.boxes(exo, u)} for u in ts]
        out.append(FrameSample(
            frame=t, ego_camera=ego_camera, wearer=wearer,
            ego_image=ds.image(ego_camera, t), ego_flows=ego_flows,
            exo_image=ds.image(exo, t), exo_flows=exo_flows,
            boxes=boxes, boxes_hist=boxes_hist, wearer_visible=wearer_visible))
    return out


def _frame_people(sample: FrameSample) -> list:
    return sorted(b.person_id for b, _ in sample.boxes)


def make_pairs(samples, neg_sample: str = "all", seed: int = 0) -> ExemplarSet:
    """One positive per wearer-visible frame plus negatives for the others."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(31,)))
    items = []
    skipped = 0
    for s in samples:
        people = _frame_people(s)
        if not people:
            skipped += 1
            continue
        if s.wearer_visible:
            items.append(PairSource(s, s.wearer, 1))
        negs = [p for p in people if p != s.wearer]
        if neg_sample == "random" and negs:
            negs = [negs[int(rng.integers(len(negs)))]]
        items.extend(PairSource(s, p, 0) for p in negs)
    return ExemplarSet(items, skipped)


def make_triplets(samples, neg_sample: str = "all", seed: int = 0) -> ExemplarSet:
    """One triplet per (wearer-visible frame, non-wearer person)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(32,)))
    items = []
    skipped = 0
    for s in samples:
        people = _frame_people(s)
        if not people:
            skipped += 1
            continue
        if not s.wearer_visible or s.wearer not in people:
            continue
        negs = [p for p in people if p != s.wearer]
        if neg_sample == "random" and negs:
            negs = [negs[int(rng.integers(len(negs)))]]
        items.extend(TripletSource(s, p) for p in negs)
    return ExemplarSet(items, skipped)


# ---------------------------------------------------------------------------
# input materialization


def ego_inputs(sample: FrameSample, arch: str):
    """(image [3,S,S], flow stack [10,h,w]) for the first-person side."""
    img = flow = None
    if arch in ("spatial", "two-stream"):
        img = np.ascontiguousarray(sample.ego_image.transpose(2, 0, 1))
    if arch in ("temporal", "two-stream"):
        if sample.ego_flows is None:
            raise ValueError(f"frame {sample.frame}: no flow history loaded")
        flow = stack_flows(sample.ego_flows)
    return img, flow


def exo_inputs(sample: FrameSample, person: int, arch: str):
    """(masked image [3,H,W], cropped flow stack [10,32,32]) for one person."""
    img = flow = None
    box = next((b for b, _ in sample.boxes if b.person_id == person), None)
    if box is None:
        raise ValueError(f"frame {sample.frame}: person {person} has no box")
    if arch in ("spatial", "two-stream"):
        img = np.ascontiguousarray(
            mask_person(sample.exo_image, box).transpose(2, 0, 1))
    if arch in ("temporal", "two-stream"):
        if sample.exo_flows is None:
            raise ValueError(f"frame {sample.frame}: no flow history loaded")
        crops = []
        for f, hist in zip(sample.exo_flows, sample.boxes_hist):
            b = hist.get(person, box)
            crops.append(crop_flow(f, b, CROP_SIZE, CROP_SIZE))
        flow = stack_flows(crops)
    return img, flow


class _InputCache:
    """Materialized inputs keyed by (side, frame, person)."""

    def __init__(self, arch):
        self.arch = arch
        self._store = {}

    def ego(self, sample):
        key = ("ego", sample.ego_camera, sample.frame)
        if key not in self._store:
            self._store[key] = ego_inputs(sample, self.arch)
        return self._store[key]

    def exo(self, sample, person):
        key = ("exo", sample.frame, person)
        if key not in self._store:
            self._store[key] = exo_inputs(sample, person, self.arch)
        return self._store[key]


def _batch_embed(net, sides):
    """Stack (image, flow) pairs along a batch axis and embed them."""
    imgs, flows = zip(*sides)
    image = Tensor(np.stack(imgs)) if imgs[0] is not None else None
    flow = Tensor(np.stack(flows)) if flows[0] is not None else None
    return image, flow


def train(samples, spec: NetworkSpec, cfg: TrainConfig,
          checkpoint_path=None, trace_path=None, net: Network | None = None):
    """Run the full loop; returns (Network, TrainTrace)."""
    cfg.validate()
    if net is None:
        net = Network(spec, seed=cfg.seed)
    make = make_triplets if cfg.loss == "triplet" else make_pairs
    exset = make(samples, neg_sample=cfg.neg_sample, seed=cfg.seed)
    sources = exset.items
    if not sources:
        raise ValueError("no exemplars could be built from the given samples")

    cache = _InputCache(spec.arch)
    params = list(net.store.named())
    states = {(group, name): OptimState.for_param(
        t, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
        for group, name, t in params}

    trace = TrainTrace()
    start = time.perf_counter()
    cpu_start = time.process_time()
    n = len(sources)
    order = []
    epoch = 0
    pos = 0
    for _ in range(cfg.iterations):
        if pos + cfg.batch_size > n or not len(order):
            rng = np.random.default_rng(
                np.random.SeedSequence(cfg.seed, spawn_key=(201, epoch)))
            order = rng.permutation(n)
            epoch += 1
            pos = 0
        take = min(cfg.batch_size, n)
        batch = [sources[i] for i in order[pos:pos + take]]
        pos += take

        for t in net.store.tensors():
            t.grad = None
        if cfg.loss == "triplet":
            img_e, flo_e = _batch_embed(net, [cache.ego(s.sample) for s in batch])
            # positives and negatives share the exo branch: one pass of 2B
            img_x, flo_x = _batch_embed(
                net, [cache.exo(s.sample, s.sample.wearer) for s in batch]
                + [cache.exo(s.sample, s.neg_person) for s in batch])
            emb_e = net.embed_ego(img_e, flo_e)
            emb_x = net.embed_exo(img_x, flo_x)
            nb = len(batch)
            exemplars = [TripletExemplar(T.row(emb_e, i), T.row(emb_x, i),
                                         T.row(emb_x, nb + i))
                         for i in range(nb)]
            loss = triplet_loss(exemplars, cfg.margin)
        else:
            img_e, flo_e = _batch_embed(net, [cache.ego(s.sample) for s in batch])
            img_p, flo_p = _batch_embed(
                net, [cache.exo(s.sample, s.person) for s in batch])
            emb_e = net.embed_ego(img_e, flo_e)
            emb_p = net.embed_exo(img_p, flo_p)
            exemplars = [PairExemplar(T.row(emb_e, i), T.row(emb_p, i), s.y)
                         for i, s in enumerate(batch)]
            loss = contrastive_loss(exemplars, cfg.margin)
        T.backward(loss)
        for group, name, t in params:
            grad = t.grad if t.grad is not None else np.zeros_like(t.data)
            sgd_step(t, grad, states[(group, name)])
        trace.losses.append(float(loss.data))

    trace.wall_clock = time.perf_counter() - start
    trace.cpu_time = time.process_time() - cpu_start
    if trace_path is not None:
        with open(trace_path, "w") as f:
            f.write("iteration,loss\n")
            for i, v in enumerate(trace.losses, start=1):
                f.write(f"{i},{v!r}\n")
    if checkpoint_path is not None:
        save_checkpoint(net, checkpoint_path)
        trace.checkpoint_path = str(checkpoint_path)
    return net, trace
