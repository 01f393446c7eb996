"""On-disk dataset access.

A dataset directory holds a manifest.json describing the cameras, PPM
frames and .flo flow fields per camera, a box/visibility table in
annotations.csv, and per-wearer odometry CSVs. Images and flows are
loaded lazily and cached per frame.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .features import BBox
from .fileio import read_flo, read_ppm


class DatasetError(ValueError):
    """Raised when a dataset directory is missing or inconsistent."""


@dataclass(frozen=True)
class CameraInfo:
    id: str
    kind: str                  # "exo" | "ego"
    image_size: tuple          # (w, h)
    flow_size: tuple           # (w, h)
    wearer: int | None = None  # person id, for ego cameras


class VideoDataset:
    """Reader for one exported capture session."""

    def __init__(self, root):
        self.root = str(root)
        path = os.path.join(self.root, "manifest.json")
        if not os.path.isfile(path):
            raise DatasetError(f"{self.root}: no manifest.json")
        with open(path) as f:
            try:
                man = json.load(f)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}: invalid JSON ({e})") from e
        for key in ("frames", "cameras", "paths"):
            if key not in man:
                raise DatasetError(f"{path}: missing manifest key {key!r}")
        self.manifest = man
        self.frames = int(man["frames"])
        self.cameras = {}
        for cam in man["cameras"]:
            info = CameraInfo(
                id=cam["id"], kind=cam["kind"],
                image_size=tuple(cam["image_size"]),
                flow_size=tuple(cam["flow_size"]),
                wearer=cam.get("wearer"),
            )
            self.cameras[info.id] = info
        self._paths = man["paths"]
        self._boxes = {}     # (camera, frame) -> list of (BBox, visible)
        self._load_annotations()
        self._image_cache = {}
        self._flow_cache = {}
        self._odometry = {}

    def _load_annotations(self):
        path = os.path.join(self.root, self._paths["annotations"])
        if not os.path.isfile(path):
            raise DatasetError(f"{self.root}: no annotations file at {path}")
        with open(path, newline="") as f:
            rd = csv.DictReader(f)
            need = {"frame", "camera", "person", "x", "y", "w", "h", "visible"}
            if rd.fieldnames is None or not need.issubset(rd.fieldnames):
                raise DatasetError(f"{path}: expected columns {sorted(need)}")
            for row in rd:
                t = int(row["frame"])
                cam = row["camera"]
                if cam not in self.cameras:
                    raise DatasetError(f"{path}: unknown camera {cam!r} on frame {t}")
                box = BBox(int(row["x"]), int(row["y"]), int(row["w"]),
                           int(row["h"]), person_id=int(row["person"]))
                self._boxes.setdefault((cam, t), []).append(
                    (box, bool(int(row["visible"]))))

    # -- cameras -----------------------------------------------------------

    @property
    def exo_camera(self) -> CameraInfo:
        for info in self.cameras.values():
            if info.kind == "exo":
                return info
        raise DatasetError(f"{self.root}: no exo camera in manifest")

    @property
    def ego_cameras(self) -> list:
        return [c for c in self.cameras.values() if c.kind == "ego"]

    def people(self) -> list:
        """Sorted person ids appearing in the third-person annotations."""
        ids = set()
        for (cam, _), entries in self._boxes.items():
            if self.cameras[cam].kind == "exo":
                ids.update(b.person_id for b, _ in entries)
        return sorted(ids)

    # -- per-frame data ----------------------------------------------------

    def _check(self, camera, frame):
        if camera not in self.cameras:
            raise DatasetError(f"unknown camera {camera!r}")
        if not 0 <= frame < self.frames:
            raise DatasetError(f"frame {frame} out of range [0, {self.frames})")

    def image(self, camera, frame) -> np.ndarray:
        """Float [H, W, 3] frame in [0, 1]."""
        self._check(camera, frame)
        key = (camera, frame)
        if key not in self._image_cache:
            rel = self._paths["frames"].format(camera=camera, index=frame)
            self._image_cache[key] = read_ppm(os.path.join(self.root, rel))
        return self._image_cache[key]

    def flow(self, camera, frame) -> np.ndarray:
        """Float [H, W, 2] flow field (displacement from frame-1 to frame)."""
        self._check(camera, frame)
        key = (camera, frame)
        if key not in self._flow_cache:
            rel = self._paths["flow"].format(camera=camera, index=frame)
            self._flow_cache[key] = read_flo(os.path.join(self.root, rel))
        return self._flow_cache[key]

    def boxes(self, camera, frame) -> list:
        """List of (BBox, visible) recorded for one camera frame."""
        self._check(camera, frame)
        return list(self._boxes.get((camera, frame), []))

    def box_for(self, camera, frame, person) -> tuple | None:
        for box, visible in self.boxes(camera, frame):
            if box.person_id == person:
                return box, visible
        return None

    def odometry(self, camera) -> np.ndarray:
        """Per-frame odometry rows [frames, 13] for an ego camera."""
        if camera not in self._odometry:
            info = self.cameras.get(camera)
            if info is None or info.kind != "ego":
                raise DatasetError(f"{camera!r} is not an ego camera")
            rel = self._paths["odometry"].format(camera=camera)
            path = os.path.join(self.root, rel)
            if not os.path.isfile(path):
                raise DatasetError(f"{self.root}: no odometry file at {path}")
            rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            if rows.shape != (self.frames, 14):
                raise DatasetError(
                    f"{path}: expected {self.frames} rows of 14 columns, "
                    f"got {rows.shape}")
            self._odometry[camera] = rows[:, 1:]
        return self._odometry[camera]
