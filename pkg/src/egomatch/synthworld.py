"""Deterministic synthetic ego/exo dataset generator.

A handful of colored agents random-walk inside a square arena watched by
a fixed oblique camera. Each wearer additionally gets a first-person
forward-strip render (other agents and wall posts ahead of it; the
wearer itself never appears in its own view). Flow fields are analytic,
not estimated: the exact image-space displacement of every rendered
entity, so the learning machinery can be verified in isolation.

Per-agent walk/pause cycles have different periods and base speeds, so
motion statistics across agents decorrelate: the mean ego-flow magnitude
of a wearer tracks the exo-flow magnitude inside its own box more
closely than anyone else's.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .features import BBox
from .fileio import write_flo, write_ppm

EGO_FOV = np.pi / 2.0
OCCLUDED_FRACTION = 0.70  # more than this hidden -> visible flag drops

AGENT_PALETTE = [
    (230, 60, 60), (60, 200, 70), (70, 90, 230), (235, 200, 50),
    (200, 70, 210), (60, 200, 200), (240, 140, 40), (150, 150, 150),
]
SKY = (120, 140, 170)
FLOOR = (90, 75, 60)
EXO_BG = (205, 205, 200)


@dataclass(frozen=True)
class WorldConfig:
    arena: float = 10.0
    agents: int = 3
    wearers: int = 2
    frames: int = 700
    seed: int = 7
    fps: int = 5
    exo_w: int = 64
    exo_h: int = 64
    ego_size: int = 64
    ego_flow_size: int = 32
    wall_markers: int = 12

    def validate(self):
        if not (1 <= self.wearers <= self.agents):
            raise ValueError(f"wearers {self.wearers} must be in [1, agents={self.agents}]")
        if self.agents > len(AGENT_PALETTE):
            raise ValueError(f"at most {len(AGENT_PALETTE)} agents supported")
        if min(self.frames, self.exo_w, self.exo_h, self.ego_size, self.ego_flow_size) < 1:
            raise ValueError("all sizes must be positive")


@dataclass
class AgentState:
    position: np.ndarray      # (x, y) world units
    heading: float            # radians
    speed: float              # units/frame
    phase: str                # walk | pause | turn


@dataclass
class Trajectories:
    positions: np.ndarray     # [F, K, 2]
    headings: np.ndarray      # [F, K]
    speeds: np.ndarray        # [F, K]
    phases: np.ndarray        # [F, K] int: 0 walk, 1 pause, 2 turn

    def state(self, frame: int, agent: int) -> AgentState:
        return AgentState(
            self.positions[frame, agent].copy(),
            float(self.headings[frame, agent]),
            float(self.speeds[frame, agent]),
            ("walk", "pause", "turn")[int(self.phases[frame, agent])],
        )


def simulate(cfg: WorldConfig) -> Trajectories:
    """Seeded random walk with smooth heading changes; agents steer back
    toward the arena center near the boundary. Each agent draws from its
    own seeded stream, so trajectories decorrelate across agents."""
    cfg.validate()
    F, K, L = cfg.frames, cfg.agents, cfg.arena
    margin = 0.08 * L
    positions = np.zeros((F, K, 2))
    headings = np.zeros((F, K))
    speeds = np.zeros((F, K))
    phases = np.zeros((F, K), dtype=np.int64)

    for k in range(K):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11, k)))
        pos = rng.uniform(0.25 * L, 0.75 * L, size=2)
        heading = rng.uniform(-np.pi, np.pi)
        base = (0.008 + 0.006 * k) * L
        period = 38 + 29 * k
        walk_frac = 0.42 + 0.09 * k
        offset = int(rng.integers(period))
        mult = 1.0
        turn_rate = 0.0
        for t in range(F):
            walking = ((t + offset) % period) < walk_frac * period
            mult = max(0.0, 0.95 * mult + 0.05 * rng.normal(1.0, 0.35))
            if walking:
                turn_rate = 0.90 * turn_rate + rng.normal(0.0, 0.010)
                speed = base * mult
            else:
                turn_rate = 0.80 * turn_rate + rng.normal(0.0, 0.004)
                speed = 0.0
            heading = float(np.arctan2(np.sin(heading + turn_rate), np.cos(heading + turn_rate)))
            # steer smoothly back toward the middle near the walls so the
            # heading never jumps within a single frame
            edge = min(pos[0], L - pos[0], pos[1], L - pos[1])
            if edge < 0.18 * L:
                want = float(np.arctan2(0.5 * L - pos[1], 0.5 * L - pos[0]))
                turn = float(np.clip(_wrap(want - heading), -0.25, 0.25))
                heading = float(_wrap(heading + turn))
            step = speed * np.array([np.cos(heading), np.sin(heading)])
            pos = np.clip(pos + step, margin, L - margin)
            positions[t, k] = pos
            headings[t, k] = heading
            speeds[t, k] = speed
            if not walking:
                phases[t, k] = 1
            elif abs(turn_rate) > 0.06:
                phases[t, k] = 2
    return Trajectories(positions, headings, speeds, phases)


# ---------------------------------------------------------------------------
# exo rendering


def _exo_projection(cfg: WorldConfig):
    sx = (cfg.exo_w - 12) / cfg.arena
    sy = (cfg.exo_h - 22) / cfg.arena
    return sx, sy, 6.0, 10.0


def exo_project(cfg: WorldConfig, xy) -> np.ndarray:
    """World (x, y) -> exo pixel (px, py) under the fixed oblique view."""
    sx, sy, ox, oy = _exo_projection(cfg)
    xy = np.asarray(xy, dtype=np.float64)
    return np.stack([ox + sx * xy[..., 0], oy + sy * xy[..., 1]], axis=-1)


def _exo_box(cfg, px, py) -> BBox:
    w, h = 7, 10
    return BBox(int(round(px)) - w // 2, int(round(py)) - h + 1, w, h)


def _paint_rect(img, box, color):
    h, w = img.shape[:2]
    c = box.clipped(w, h)
    if c is None:
        return
    img[c.y:c.y + c.h, c.x:c.x + c.w] = color


def render_exo_frame(cfg: WorldConfig, traj: Trajectories, t: int):
    """Returns (image uint8 [H,W,3], boxes list, id mask)."""
    img = np.empty((cfg.exo_h, cfg.exo_w, 3), dtype=np.uint8)
    img[:] = EXO_BG
    # faint floor band so the scene is not featureless
    img[cfg.exo_h // 3:] = (188, 186, 178)
    mask = np.full((cfg.exo_h, cfg.exo_w), -1, dtype=np.int64)
    pts = exo_project(cfg, traj.positions[t])
    order = np.argsort(pts[:, 1])  # draw far (small py) first
    boxes = {}
    for k in order:
        box = _exo_box(cfg, pts[k, 0], pts[k, 1])
        _paint_rect(img, box, AGENT_PALETTE[k])
        c = box.clipped(cfg.exo_w, cfg.exo_h)
        if c is not None:
            mask[c.y:c.y + c.h, c.x:c.x + c.w] = k
        # heading tick above the box
        hx = int(round(pts[k, 0] + 3.0 * np.cos(traj.headings[t, k])))
        hy = int(round(pts[k, 1] - 9 + 2.0 * np.sin(traj.headings[t, k])))
        if 0 <= hy < cfg.exo_h and 0 <= hx < cfg.exo_w:
            img[hy, hx] = (20, 20, 20)
        boxes[int(k)] = box
    out = []
    for k in range(cfg.agents):
        box = boxes[k]
        c = box.clipped(cfg.exo_w, cfg.exo_h)
        if c is None:
            continue
        seen = int((mask[c.y:c.y + c.h, c.x:c.x + c.w] == k).sum())
        visible = (1.0 - seen / (c.w * c.h)) <= OCCLUDED_FRACTION
        out.append((BBox(c.x, c.y, c.w, c.h, k), bool(visible)))
    return img, out, mask


def render_exo_flow(cfg: WorldConfig, traj: Trajectories, t: int) -> np.ndarray:
    """Flow into frame t: each agent's box carries its projected
    per-frame displacement; background is zero."""
    flow = np.zeros((cfg.exo_h, cfg.exo_w, 2))
    if t == 0:
        return flow
    pts = exo_project(cfg, traj.positions[t])
    prev = exo_project(cfg, traj.positions[t - 1])
    order = np.argsort(pts[:, 1])
    for k in order:
        box = _exo_box(cfg, pts[k, 0], pts[k, 1]).clipped(cfg.exo_w, cfg.exo_h)
        if box is None:
            continue
        flow[box.y:box.y + box.h, box.x:box.x + box.w] = pts[k] - prev[k]
    return flow


# ---------------------------------------------------------------------------
# ego rendering


def _marker_positions(cfg: WorldConfig) -> np.ndarray:
    """Evenly spaced posts along the arena walls."""
    L, m = cfg.arena, cfg.wall_markers
    per = np.linspace(0.0, 4.0 * L, m, endpoint=False)
    pts = []
    for s in per:
        side, r = int(s // L), s % L
        pts.append([(r, 0.0), (L, r), (L - r, L), (0.0, L - r)][side])
    return np.array(pts)


def _marker_color(i: int, n: int):
    # simple distinct hue wheel
    h = 6.0 * i / n
    c = int(60 + 40 * (i % 3))
    sector = int(h) % 6
    v = int(255 * (h - int(h)))
    rgb = [(255, v, c), (255 - v, 255, c), (c, 255, v),
           (c, 255 - v, 255), (v, c, 255), (255, c, 255 - v)][sector]
    return rgb


def _wrap(a):
    return np.arctan2(np.sin(a), np.cos(a))


def _ego_entity(cfg, size, wearer_pos, wearer_heading, epos, kind):
    """Bar geometry for one entity in the wearer's view at a given
    render size, or None when outside the field of view."""
    rel = epos - wearer_pos
    d = float(np.hypot(rel[0], rel[1]))
    if d < 1.0:
        return None
    bearing = float(_wrap(np.arctan2(rel[1], rel[0]) - wearer_heading))
    if abs(bearing) > EGO_FOV / 2 + 0.25:
        return None
    u = (0.5 - bearing / EGO_FOV) * size
    if kind == "agent":
        hh = min(0.45 * size, 0.32 * size / d)
        hw = min(0.20 * size, 0.115 * size / d)
    else:
        hh = min(0.50 * size, 0.42 * size / d)
        hw = min(0.08 * size, 0.04 * size / d)
    return u, max(hh, 1.0), max(hw, 0.5), d


def render_ego_frame(cfg: WorldConfig, traj: Trajectories, t: int, wearer: int):
    """Forward-strip first-person view; returns (image, agent boxes in
    ego-flow coordinates, visibility flags)."""
    S = cfg.ego_size
    img = np.empty((S, S, 3), dtype=np.uint8)
    img[: S // 2] = SKY
    img[S // 2:] = FLOOR
    mask = np.full((S, S), -1, dtype=np.int64)
    wpos = traj.positions[t, wearer]
    whead = traj.headings[t, wearer]
    markers = _marker_positions(cfg)
    ents = []
    for i, mp in enumerate(markers):
        g = _ego_entity(cfg, S, wpos, whead, mp, "marker")
        if g is not None:
            ents.append((g[3], "marker", i, g))
    for k in range(cfg.agents):
        if k == wearer:
            continue  # the wearer is behind its own camera
        g = _ego_entity(cfg, S, wpos, whead, traj.positions[t, k], "agent")
        if g is not None:
            ents.append((g[3], "agent", k, g))
    ents.sort(key=lambda e: -e[0])  # far first
    for _, kind, ident, (u, hh, hw, d) in ents:
        x0, x1 = int(round(u - hw)), int(round(u + hw))
        y0, y1 = int(round(S / 2 - hh)), int(round(S / 2 + hh))
        x0, x1 = max(x0, 0), min(x1 + 1, S)
        y0, y1 = max(y0, 0), min(y1 + 1, S)
        if x0 >= x1 or y0 >= y1:
            continue
        color = AGENT_PALETTE[ident] if kind == "agent" else _marker_color(ident, cfg.wall_markers)
        img[y0:y1, x0:x1] = color
        mask[y0:y1, x0:x1] = ident if kind == "agent" else -1
    # agent boxes in ego-flow resolution (only flow crops use them)
    scale = cfg.ego_flow_size / S
    boxes = []
    for _, kind, ident, (u, hh, hw, d) in ents:
        if kind != "agent":
            continue
        x0, x1 = int(round(u - hw)), min(int(round(u + hw)) + 1, S)
        y0, y1 = int(round(S / 2 - hh)), min(int(round(S / 2 + hh)) + 1, S)
        x0, y0 = max(x0, 0), max(y0, 0)
        if x0 >= x1 or y0 >= y1:
            continue
        area = (x1 - x0) * (y1 - y0)
        seen = int((mask[y0:y1, x0:x1] == ident).sum())
        visible = (1.0 - seen / area) <= OCCLUDED_FRACTION
        fb = BBox(int(np.floor(x0 * scale)), int(np.floor(y0 * scale)),
                  max(1, int(round((x1 - x0) * scale))), max(1, int(round((y1 - y0) * scale))),
                  ident)
        boxes.append((fb, bool(visible)))
    return img, boxes


def render_ego_flow(cfg: WorldConfig, traj: Trajectories, t: int, wearer: int) -> np.ndarray:
    """Analytic image-space displacement of rendered entities between
    frames t-1 and t, at the ego flow resolution."""
    S = cfg.ego_flow_size
    flow = np.zeros((S, S, 2))
    if t == 0:
        return flow
    markers = _marker_positions(cfg)
    cur = (traj.positions[t, wearer], traj.headings[t, wearer])
    prv = (traj.positions[t - 1, wearer], traj.headings[t - 1, wearer])
    # dense background: the arena walls/floor shift with rotation and
    # loom with forward motion
    dh = float(_wrap(cur[1] - prv[1]))
    step = float(np.hypot(*(cur[0] - prv[0])))
    xs = np.arange(S)[None, :] - S / 2.0
    ys = np.arange(S)[:, None] - S / 2.0
    flow[..., 0] = dh * S / EGO_FOV + 2.0 * step * xs
    flow[..., 1] = 2.0 * step * ys
    ents = []
    for i, mp in enumerate(markers):
        ents.append(("marker", mp, mp))
    for k in range(cfg.agents):
        if k == wearer:
            continue
        ents.append(("agent", traj.positions[t, k], traj.positions[t - 1, k]))
    geo = []
    for kind, pos_t, pos_p in ents:
        g = _ego_entity(cfg, S, cur[0], cur[1], pos_t, kind)
        if g is None:
            continue
        gp = _ego_entity(cfg, S, prv[0], prv[1], pos_p, kind)
        geo.append((g[3], g, gp))
    geo.sort(key=lambda e: -e[0])  # far first; near overwrites
    horizon = S / 2.0
    for _, (u, hh, hw, d), gp in geo:
        x0, x1 = max(int(round(u - hw)), 0), min(int(round(u + hw)) + 1, S)
        y0, y1 = max(int(round(horizon - hh)), 0), min(int(round(horizon + hh)) + 1, S)
        if x0 >= x1 or y0 >= y1:
            continue
        if gp is None:
            flow[y0:y1, x0:x1] = 0.0
            continue
        up, hhp, hwp, _ = gp
        xs = np.arange(x0, x1)[None, :]
        ys = np.arange(y0, y1)[:, None]
        fu = (u - up) + (xs - u) * (1.0 - hwp / hw)
        fv = (ys - horizon) * (1.0 - hhp / hh)
        flow[y0:y1, x0:x1, 0] = fu
        flow[y0:y1, x0:x1, 1] = fv
    return flow


def ego_odometry(cfg: WorldConfig, traj: Trajectories, wearer: int) -> np.ndarray:
    """13-d per-frame pose/velocity: position (3), orientation quaternion
    (4, rotation about +z by heading), angular velocity (3), linear
    velocity (3)."""
    F = cfg.frames
    out = np.zeros((F, 13))
    pos = traj.positions[:, wearer]
    head = traj.headings[:, wearer]
    out[:, 0:2] = pos
    out[:, 3] = np.cos(head / 2.0)
    out[:, 6] = np.sin(head / 2.0)
    dhead = np.zeros(F)
    dhead[1:] = _wrap(head[1:] - head[:-1])
    out[:, 9] = dhead
    vel = np.zeros((F, 2))
    vel[1:] = pos[1:] - pos[:-1]
    out[:, 10:12] = vel
    return out


# ---------------------------------------------------------------------------
# dataset assembly and export


@dataclass
class SynthDataset:
    cfg: WorldConfig
    traj: Trajectories
    exo_frames: np.ndarray        # [F, H, W, 3] uint8
    exo_flows: np.ndarray         # [F, H, W, 2] float
    ego_frames: dict              # wearer -> [F, S, S, 3] uint8
    ego_flows: dict               # wearer -> [F, fs, fs, 2] float
    annotations: list             # (frame, camera, person, x, y, w, h, visible)
    odometry: dict                # wearer -> [F, 13]

    def manifest(self) -> dict:
        cams = [{"id": "exo", "kind": "exo",
                 "image_size": [self.cfg.exo_w, self.cfg.exo_h],
                 "flow_size": [self.cfg.exo_w, self.cfg.exo_h]}]
        for w in range(self.cfg.wearers):
            cams.append({"id": f"ego{w}", "kind": "ego", "wearer": w,
                         "image_size": [self.cfg.ego_size, self.cfg.ego_size],
                         "flow_size": [self.cfg.ego_flow_size, self.cfg.ego_flow_size]})
        return {
            "frames": self.cfg.frames,
            "fps": self.cfg.fps,
            "seed": self.cfg.seed,
            "agents": self.cfg.agents,
            "arena": self.cfg.arena,
            "cameras": cams,
            "paths": {
                "frames": "frames/{camera}/{index:05d}.ppm",
                "flow": "flow/{camera}/{index:05d}.flo",
                "annotations": "annotations.csv",
                "odometry": "odometry/{camera}.csv",
            },
        }


def render(cfg: WorldConfig, traj: Trajectories) -> SynthDataset:
    """Render every camera, flow field, box, and odometry row."""
    F = cfg.frames
    exo_frames = np.zeros((F, cfg.exo_h, cfg.exo_w, 3), dtype=np.uint8)
    exo_flows = np.zeros((F, cfg.exo_h, cfg.exo_w, 2))
    ego_frames = {w: np.zeros((F, cfg.ego_size, cfg.ego_size, 3), dtype=np.uint8)
                  for w in range(cfg.wearers)}
    ego_flows = {w: np.zeros((F, cfg.ego_flow_size, cfg.ego_flow_size, 2))
                 for w in range(cfg.wearers)}
    annotations = []
    for t in range(F):
        img, boxes, _ = render_exo_frame(cfg, traj, t)
        exo_frames[t] = img
        exo_flows[t] = render_exo_flow(cfg, traj, t)
        for box, visible in boxes:
            annotations.append((t, "exo", box.person_id, box.x, box.y, box.w, box.h, int(visible)))
        for w in range(cfg.wearers):
            eimg, eboxes = render_ego_frame(cfg, traj, t, w)
            ego_frames[w][t] = eimg
            ego_flows[w][t] = render_ego_flow(cfg, traj, t, w)
            for box, visible in eboxes:
                annotations.append((t, f"ego{w}", box.person_id,
                                    box.x, box.y, box.w, box.h, int(visible)))
    odom = {w: ego_odometry(cfg, traj, w) for w in range(cfg.wearers)}
    return SynthDataset(cfg, traj, exo_frames, exo_flows, ego_frames, ego_flows,
                        annotations, odom)


def generate(cfg: WorldConfig) -> SynthDataset:
    return render(cfg, simulate(cfg))


def export(ds: SynthDataset, out_dir) -> None:
    """Write the on-disk dataset layout; deterministic byte-for-byte."""
    cfg = ds.cfg
    os.makedirs(out_dir, exist_ok=True)
    cams = {"exo": (ds.exo_frames, ds.exo_flows)}
    for w in range(cfg.wearers):
        cams[f"ego{w}"] = (ds.ego_frames[w], ds.ego_flows[w])
    for cam, (frames, flows) in cams.items():
        fdir = os.path.join(out_dir, "frames", cam)
        gdir = os.path.join(out_dir, "flow", cam)
        os.makedirs(fdir, exist_ok=True)
        os.makedirs(gdir, exist_ok=True)
        for t in range(cfg.frames):
            write_ppm(os.path.join(fdir, f"{t:05d}.ppm"), frames[t] / 255.0)
            write_flo(os.path.join(gdir, f"{t:05d}.flo"), flows[t])
    with open(os.path.join(out_dir, "annotations.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["frame", "camera", "person", "x", "y", "w", "h", "visible"])
        for rowt in ds.annotations:
            wr.writerow(rowt)
    odir = os.path.join(out_dir, "odometry")
    os.makedirs(odir, exist_ok=True)
    for w in range(cfg.wearers):
        with open(os.path.join(odir, f"ego{w}.csv"), "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["frame"] + [f"c{i}" for i in range(13)])
            for t in range(cfg.frames):
                wr.writerow([t] + [repr(float(v)) for v in ds.odometry[w][t]])
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(ds.manifest(), f, indent=2, sort_keys=True)
        f.write("\n")
