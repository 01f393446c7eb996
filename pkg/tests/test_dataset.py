"""VideoDataset loading and validation."""

import json

import numpy as np
import pytest

from egomatch.dataset import DatasetError, VideoDataset


def test_cameras_and_people(small_ds):
    assert small_ds.frames == 120
    assert small_ds.exo_camera.id == "exo"
    assert [c.id for c in small_ds.ego_cameras] == ["ego0", "ego1"]
    assert small_ds.cameras["ego1"].wearer == 1
    assert small_ds.people() == [0, 1, 2]


def test_image_and_flow_shapes(small_ds):
    img = small_ds.image("exo", 0)
    assert img.shape == (64, 64, 3)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert small_ds.flow("ego0", 1).shape == (32, 32, 2)
    assert small_ds.flow("exo", 1).shape == (64, 64, 2)


def test_lazy_caching_returns_same_object(small_ds):
    assert small_ds.image("exo", 2) is small_ds.image("exo", 2)
    assert small_ds.flow("ego0", 2) is small_ds.flow("ego0", 2)


def test_boxes_and_box_for(small_ds):
    boxes = small_ds.boxes("exo", 10)
    assert boxes and all(b.w > 0 and b.h > 0 for b, _ in boxes)
    pid = boxes[0][0].person_id
    found = small_ds.box_for("exo", 10, pid)
    assert found is not None and found[0].person_id == pid
    assert small_ds.box_for("exo", 10, 999) is None


def test_odometry_shape_and_rejects_exo(small_ds):
    od = small_ds.odometry("ego0")
    assert od.shape == (120, 13)
    with pytest.raises(DatasetError):
        small_ds.odometry("exo")


def test_out_of_range_access(small_ds):
    with pytest.raises(DatasetError):
        small_ds.image("exo", 120)
    with pytest.raises(DatasetError):
        small_ds.flow("nope", 0)
    with pytest.raises(DatasetError):
        small_ds.boxes("exo", -1)


def test_missing_manifest_and_bad_json(tmp_path):
    with pytest.raises(DatasetError):
        VideoDataset(tmp_path / "nothing")
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text("{not json")
    with pytest.raises(DatasetError):
        VideoDataset(bad)
    (bad / "manifest.json").write_text(json.dumps({"frames": 1}))
    with pytest.raises(DatasetError):
        VideoDataset(bad)


def test_unknown_camera_in_annotations(small_ds_dir, tmp_path):
    import shutil
    root = tmp_path / "ds"
    shutil.copytree(small_ds_dir, root)
    with open(root / "annotations.csv", "a", newline="") as f:
        f.write("0,ghost,0,1,1,2,2,1\n")
    with pytest.raises(DatasetError):
        VideoDataset(root)


def test_annotations_match_flow_coordinates(small_ds):
    # ego boxes are recorded in flow-field coordinates
    w, h = small_ds.cameras["ego0"].flow_size
    for t in range(4, 40):
        for b, _ in small_ds.boxes("ego0", t):
            assert 0 <= b.x < w and 0 <= b.y < h
            assert b.x + b.w <= w and b.y + b.h <= h
