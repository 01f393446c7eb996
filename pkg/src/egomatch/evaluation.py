"""Scoring, retrieval metrics, and baselines.

Every candidate (first-person video, third-person person box) pair gets
a score (higher = better match). Two metrics summarize a scored set:
binary average precision over all pairs, and multi-class accuracy over
frames (argmax-score candidate equals the true wearer). Regression and
embedding baselines score the same pairs from hand-crafted motion
features instead of the learned networks.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dataset import VideoDataset
from .features import (HOOF_WINDOW, crop_flow, hoof, hoof_window,
                       mean_flow_magnitude)
from .losses import PairExemplar, TripletExemplar, contrastive_loss, triplet_loss
from .networks import Network
from .tensor import OptimState, Tensor, sgd_step
from .trainer import CROP_SIZE, samples_from_dataset, ego_inputs, exo_inputs

BASELINES = ("flowmag", "hoof", "odom-hoof", "vel-mag", "hoof-embed", "mag-embed")


@dataclass(frozen=True)
class ScoredPair:
    frame: int
    ego_camera: str
    person: int
    score: float
    label: int  # 1 iff person is this ego camera's wearer


@dataclass
class EvalReport:
    pr: list                       # (recall, precision) points
    ap: float
    multi_accuracy: float
    positives: int
    negatives: int
    frames: int

    def to_json(self) -> dict:
        return {"ap": self.ap, "multi_accuracy": self.multi_accuracy,
                "positives": self.positives, "negatives": self.negatives,
                "frames": self.frames}


def _ranked(pairs):
    return sorted(pairs, key=lambda p: (-p.score, p.frame, p.person))


def pr_curve(pairs) -> list:
    """(recall, precision) points in descending-score order.

    One point per threshold at which recall increases, i.e. whose score
    group contains a positive; thresholds admitting only negatives move
    later points' precision but add no point of their own.
    """
    npos = sum(p.label for p in pairs)
    if npos == 0:
        raise ValueError("pr_curve: no positive pairs")
    ranked = _ranked(pairs)
    points = []
    tp = fp = 0
    group_had_pos = False
    for i, p in enumerate(ranked):
        if p.label:
            tp += 1
            group_had_pos = True
        else:
            fp += 1
        last_of_threshold = i + 1 == len(ranked) or ranked[i + 1].score != p.score
        if last_of_threshold:
            if group_had_pos:
                points.append((tp / npos, tp / (tp + fp)))
            group_had_pos = False
    return points


def average_precision(pairs) -> float:
    """Non-interpolated AP: mean precision at each positive's rank."""
    npos = sum(p.label for p in pairs)
    if npos == 0:
        raise ValueError("average_precision: no positive pairs")
    tp = 0
    total = 0.0
    for i, p in enumerate(_ranked(pairs), start=1):
        if p.label:
            tp += 1
            total += tp / i
    return total / npos


def multiclass_accuracy(pairs, eval_frames=None) -> tuple:
    """Fraction of frames whose best-scoring candidate is the wearer.

    Frames are (ego_camera, frame) groups. Only groups containing a
    positive are counted (the wearer must be in view); eval_frames, when
    given, restricts further (e.g. to visible-wearer frames). Returns
    (accuracy, evaluated frame count).
    """
    groups = {}
    for p in pairs:
        groups.setdefault((p.ego_camera, p.frame), []).append(p)
    correct = total = 0
    for key, cands in sorted(groups.items()):
        if not any(p.label for p in cands):
            continue
        if eval_frames is not None and key not in eval_frames:
            continue
        best = min(cands, key=lambda p: (-p.score, p.person))
        total += 1
        correct += best.label
    if total == 0:
        return 0.0, 0
    return correct / total, total


def evaluate_pairs(pairs, eval_frames=None) -> EvalReport:
    acc, nframes = multiclass_accuracy(pairs, eval_frames)
    npos = sum(p.label for p in pairs)
    return EvalReport(
        pr=pr_curve(pairs), ap=average_precision(pairs),
        multi_accuracy=acc, positives=npos,
        negatives=len(pairs) - npos, frames=nframes)


def positive_rate_ap(pairs, trials: int = 200, seed: int = 0) -> float:
    """Chance-level AP: mean AP of uniformly random rankings."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(77,)))
    total = 0.0
    for _ in range(trials):
        shuffled = [ScoredPair(p.frame, p.ego_camera, p.person, float(s), p.label)
                    for p, s in zip(pairs, rng.permutation(len(pairs)))]
        total += average_precision(shuffled)
    return total / trials


# ---------------------------------------------------------------------------
# network scoring


def score_dataset(ds: VideoDataset, net: Network, ego_camera: str,
                  frames=None, batch: int = 32):
    """Score every (frame, person) candidate for one ego camera.

    Returns (pairs, visible_frames) where visible_frames is the set of
    (ego_camera, frame) keys whose wearer box is marked visible.
    """
    samples = samples_from_dataset(ds, ego_camera, frames)
    return score_samples(samples, net, batch=batch)


def score_samples(samples, net: Network, batch: int = 32):
    arch = net.spec.arch
    items = []               # (sample, person)
    for s in samples:
        for b, _ in sorted(s.boxes, key=lambda e: e[0].person_id):
            items.append((s, b.person_id))
    if not items:
        raise ValueError("no candidate pairs to score")
    ego_emb = {}
    uniq = list({id(s): s for s, _ in items}.values())
    for i in range(0, len(uniq), batch):
        chunk = uniq[i:i + batch]
        sides = [ego_inputs(s, arch) for s in chunk]
        imgs, flows = zip(*sides)
        image = Tensor(np.stack(imgs)) if imgs[0] is not None else None
        flow = Tensor(np.stack(flows)) if flows[0] is not None else None
        emb = net.embed_ego(image, flow).data
        for s, e in zip(chunk, emb):
            ego_emb[id(s)] = e
    pairs = []
    for i in range(0, len(items), batch):
        chunk = items[i:i + batch]
        sides = [exo_inputs(s, p, arch) for s, p in chunk]
        imgs, flows = zip(*sides)
        image = Tensor(np.stack(imgs)) if imgs[0] is not None else None
        flow = Tensor(np.stack(flows)) if flows[0] is not None else None
        emb = net.embed_exo(image, flow).data
        for (s, p), x in zip(chunk, emb):
            d2 = float(np.sum((ego_emb[id(s)] - x) ** 2))
            pairs.append(ScoredPair(s.frame, s.ego_camera, p,
                                    -d2, int(p == s.wearer)))
    visible = {(s.ego_camera, s.frame) for s, _ in items
               if s.wearer_visible}
    return pairs, visible


def evaluate_dataset(ds, net, ego_cameras=None, frames=None) -> EvalReport:
    """Full-protocol evaluation over one or more ego cameras."""
    if ego_cameras is None:
        ego_cameras = [c.id for c in ds.ego_cameras]
    pairs = []
    visible = set()
    for cam in ego_cameras:
        p, v = score_dataset(ds, net, cam, frames)
        pairs.extend(p)
        visible |= v
    return evaluate_pairs(pairs, visible)


# ---------------------------------------------------------------------------
# linear regression (normal equations)


@dataclass
class LinearRegressor:
    weights: np.ndarray        # [out_dim, in_dim]
    bias: np.ndarray           # [out_dim]
    degenerate: bool = False   # all-identical inputs

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ np.asarray(x, dtype=float) + self.bias


def fit_linear_regressor(X, Y, ridge: float = 1e-8) -> LinearRegressor:
    """Least squares with bias via ridge-stabilized normal equations."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] == 1 and X.shape[0] > 1:
        Y = Y.T
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"got {X.shape[0]} inputs but {Y.shape[0]} targets")
    n, d = X.shape
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} rows to fit {d}-d inputs, got {n}")
    A = np.hstack([X, np.ones((n, 1))])
    gram = A.T @ A + ridge * np.eye(d + 1)
    sol = np.linalg.solve(gram, A.T @ Y)
    degenerate = bool(np.all(X == X[0]))
    return LinearRegressor(sol[:-1].T.copy(), sol[-1].copy(), degenerate)


# ---------------------------------------------------------------------------
# baselines



def _windowed(series, t, window=HOOF_WINDOW):
    lo = max(1, t - window + 1)   # frame 0 has no flow by construction
    return series[lo:t + 1]


class BaselineFeatures:
    """Per-frame windowed motion features for one ego camera + all people."""

    def __init__(self, ds: VideoDataset, ego_camera: str):
        self.ds = ds
        self.ego_camera = ego_camera
        info = ds.cameras[ego_camera]
        if info.kind != "ego":
            raise ValueError(f"{ego_camera!r} is not an ego camera")
        self.wearer = info.wearer
        self.exo = ds.exo_camera.id
        n = ds.frames
        self._ego_hoof = [hoof(ds.flow(ego_camera, t)) for t in range(n)]
        self._ego_mag = [mean_flow_magnitude(ds.flow(ego_camera, t)) for t in range(n)]
        self._crop_hoof = {}
        self._crop_mag = {}
        for t in range(n):
            flow = ds.flow(self.exo, t)
            for b, _ in ds.boxes(self.exo, t):
                crop = crop_flow(flow, b, CROP_SIZE, CROP_SIZE)
                self._crop_hoof[(t, b.person_id)] = hoof(crop)
                self._crop_mag[(t, b.person_id)] = mean_flow_magnitude(crop)

    def people(self, t):
        return sorted(b.person_id for b, _ in self.ds.boxes(self.exo, t))

    def wearer_visible(self, t):
        return any(b.person_id == self.wearer and v
                   for b, v in self.ds.boxes(self.exo, t))

    def ego_feature(self, method, t) -> np.ndarray:
        if method in ("hoof", "hoof-embed"):
            return hoof_window(_windowed(self._ego_hoof, t))
        if method in ("flowmag", "mag-embed"):
            return np.array([np.mean(_windowed(self._ego_mag, t))])
        if method == "odom-hoof":
            return self.ds.odometry(self.ego_camera)[t]
        if method == "vel-mag":
            return self.ds.odometry(self.ego_camera)[t][7:13]
        raise ValueError(f"unknown baseline method {method!r}")

    def exo_feature(self, method, t, person) -> np.ndarray:
        if method in ("hoof", "odom-hoof", "hoof-embed"):
            vals = [self._crop_hoof[(u, person)]
                    for u in range(max(1, t - HOOF_WINDOW + 1), t + 1)
                    if (u, person) in self._crop_hoof]
            return hoof_window(vals)
        vals = [self._crop_mag[(u, person)]
                for u in range(max(1, t - HOOF_WINDOW + 1), t + 1)
                if (u, person) in self._crop_mag]
        return np.array([np.mean(vals)])


@dataclass
class EmbedHead:
    """linear -> relu -> linear head used by the embedding baselines."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, x: Tensor) -> Tensor:
        h = T.relu(T.linear(x, self.w1, self.b1))
        return T.linear(h, self.w2, self.b2)


def _make_head(in_dim, hidden, rng) -> EmbedHead:
    def init(shape, fan_in):
        return T.param(rng.uniform(-np.sqrt(6.0 / fan_in), np.sqrt(6.0 / fan_in),
                                   size=shape))
    return EmbedHead(init((hidden, in_dim), in_dim), T.param(np.zeros(hidden)),
                     init((hidden, hidden), hidden), T.param(np.zeros(hidden)))


EMBED_HIDDEN = {"hoof-embed": 64, "mag-embed": 16}
EMBED_LR = 0.001
EMBED_ITERS = 300
EMBED_BATCH = 16


def _train_embed_heads(feats: BaselineFeatures, method, train_frames,
                       loss_kind="triplet", seed=0, margin=1.0):
    dim = 45 if method == "hoof-embed" else 1
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(41,)))
    f = _make_head(dim, EMBED_HIDDEN[method], rng)
    g = _make_head(dim, EMBED_HIDDEN[method], rng)
    triples = []
    for t in train_frames:
        if t < 1 or not feats.wearer_visible(t):
            continue
        others = [p for p in feats.people(t) if p != feats.wearer]
        for p in others:
            triples.append((t, feats.wearer, p))
    if not triples:
        raise ValueError("no training exemplars for embedding baseline")
    params = f.params() + g.params()
    states = [OptimState.for_param(p, lr=EMBED_LR, momentum=0.9, weight_decay=0.0)
              for p in params]
    order_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(42,)))
    n = len(triples)
    for _ in range(EMBED_ITERS):
        idx = order_rng.integers(n, size=min(EMBED_BATCH, n))
        exemplars = []
        for i in idx:
            t, pos, neg = triples[i]
            xe = f(Tensor(feats.ego_feature(method, t)))
            x1 = g(Tensor(feats.exo_feature(method, t, pos)))
            x0 = g(Tensor(feats.exo_feature(method, t, neg)))
            if loss_kind == "triplet":
                exemplars.append(TripletExemplar(xe, x1, x0))
            else:
                exemplars.extend([PairExemplar(xe, x1, 1), PairExemplar(xe, x0, 0)])
        loss = (triplet_loss if loss_kind == "triplet" else contrastive_loss)(
            exemplars, margin)
        T.zero_grads(params)
        T.backward(loss)
        for p, st in zip(params, states):
            if p.grad is not None:
                sgd_step(p, p.grad, st)
    return f, g


def baseline_eval(ds: VideoDataset, method: str, ego_camera: str,
                  train_frames, test_frames, seed: int = 0) -> EvalReport:
    """Fit one baseline on the train split and score the test split."""
    if method not in BASELINES:
        raise ValueError(f"unknown baseline method {method!r}; "
                         f"expected one of {BASELINES}")
    feats = BaselineFeatures(ds, ego_camera)
    test = [t for t in test_frames if t >= 1]
    if method in ("flowmag", "hoof", "odom-hoof", "vel-mag"):
        X, Y = [], []
        for t in train_frames:
            if t < 1 or not feats.wearer_visible(t):
                continue
            X.append(feats.ego_feature(method, t))
            Y.append(feats.exo_feature(method, t, feats.wearer))
        reg = fit_linear_regressor(X, Y)
        def score(t, p):
            resid = reg.predict(feats.ego_feature(method, t)) \
                - feats.exo_feature(method, t, p)
            return -float(np.sum(resid ** 2))
    else:
        f, g = _train_embed_heads(feats, method, train_frames, seed=seed)
        def score(t, p):
            e = f(Tensor(feats.ego_feature(method, t))).data
            x = g(Tensor(feats.exo_feature(method, t, p))).data
            return -float(np.sum((e - x) ** 2))
    pairs = []
    visible = set()
    for t in test:
        for p in feats.people(t):
            pairs.append(ScoredPair(t, ego_camera, p, score(t, p),
                                    int(p == feats.wearer)))
        if feats.wearer_visible(t):
            visible.add((ego_camera, t))
    return evaluate_pairs(pairs, visible)


# ---------------------------------------------------------------------------
# temporal-only mode (one wearable camera acts as the third-person view)


def observer_samples(ds: VideoDataset, ego_camera: str, observer: str,
                     frames=None) -> list:
    """FrameSamples whose third-person side is another wearer's camera.

    Candidate boxes come from the observer's view annotations (recorded
    in its flow-field coordinates), so only the temporal architecture
    can consume these samples.
    """
    from .trainer import FrameSample
    from .features import FLOW_STACK_LEN
    info = ds.cameras.get(ego_camera)
    obs = ds.cameras.get(observer)
    if info is None or info.kind != "ego":
        raise ValueError(f"{ego_camera!r} is not an ego camera")
    if obs is None or obs.kind != "ego":
        raise ValueError(f"observer {observer!r} is not an ego camera")
    if observer == ego_camera:
        raise ValueError("observer and ego camera must differ")
    wearer = info.wearer
    if frames is None:
        frames = range(ds.frames)
    hist = FLOW_STACK_LEN
    out = []
    for t in frames:
        if t < hist - 1:
            continue
        boxes = ds.boxes(observer, t)
        if not boxes:
            continue
        ts = range(t - hist + 1, t + 1)
        boxes_hist = [{b.person_id: b for b, _ in ds.boxes(observer, u)}
                      for u in ts]
        if any(wearer not in h for h in boxes_hist):
            continue   # need a full box history for the cropped stack
        out.append(FrameSample(
            frame=t, ego_camera=ego_camera, wearer=wearer,
            ego_image=ds.image(ego_camera, t),
            ego_flows=[ds.flow(ego_camera, u) for u in ts],
            exo_image=ds.image(observer, t),
            exo_flows=[ds.flow(observer, u) for u in ts],
            boxes=boxes, boxes_hist=boxes_hist,
            wearer_visible=any(b.person_id == wearer and v for b, v in boxes)))
    return out


def temporal_only_eval(ds: VideoDataset, net: Network, observer: str,
                       frames=None) -> EvalReport:
    """Match the remaining wearers' first-person videos against person
    boxes seen from one observing camera.

    The observer may be any ego camera, or the fixed third-person
    camera, in which case this reduces exactly to the standard protocol.
    """
    if net.spec.arch != "temporal":
        raise ValueError("temporal-only evaluation needs a temporal network")
    if observer in ds.cameras and ds.cameras[observer].kind == "exo":
        return evaluate_dataset(ds, net, frames=frames)
    pairs = []
    visible = set()
    for cam in ds.ego_cameras:
        if cam.id == observer:
            continue
        samples = observer_samples(ds, cam.id, observer, frames)
        if not samples:
            continue
        p, v = score_samples(samples, net)
        pairs.extend(p)
        visible |= v
    if not pairs:
        raise ValueError(f"no cross-view candidates found for observer {observer!r}")
    return evaluate_pairs(pairs, visible)


# ---------------------------------------------------------------------------
# artifact output


def write_report(report: EvalReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_pr_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["recall", "precision"])
        for r, p in report.pr:
            wr.writerow([repr(float(r)), repr(float(p))])


def write_scores_csv(pairs, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["frame", "camera", "person", "score", "label"])
        for p in pairs:
            wr.writerow([p.frame, p.ego_camera, p.person,
                         repr(float(p.score)), p.label])
