"""Input preparation: masking, cropping, stacking, HOOF, magnitudes."""

import numpy as np
import pytest

from egomatch.features import (BBox, crop_flow, hoof, hoof_window, mask_person,
                               mean_flow_magnitude, stack_flows, unstack_flows)


def test_mask_person_interior_only():
    img = np.ones((4, 4, 3))
    out = mask_person(img, BBox(1, 1, 2, 2, 0))
    assert out[1:3, 1:3].sum() == 0
    assert out.sum() == 12 * 3
    np.testing.assert_array_equal(img, np.ones((4, 4, 3)))  # input untouched


def test_mask_person_full_frame_and_idempotent():
    img = np.random.default_rng(0).uniform(size=(5, 6, 3))
    box = BBox(0, 0, 6, 5, 0)
    assert mask_person(img, box).sum() == 0
    once = mask_person(img, BBox(2, 1, 3, 2, 0))
    twice = mask_person(once, BBox(2, 1, 3, 2, 0))
    np.testing.assert_array_equal(once, twice)


def test_mask_person_outside_rejected():
    with pytest.raises(ValueError):
        mask_person(np.ones((4, 4, 3)), BBox(10, 10, 2, 2, 0))


def test_crop_flow_uniform():
    flow = np.zeros((8, 8, 2))
    flow[..., 0] = 3.0
    flow[..., 1] = 4.0
    out = crop_flow(flow, BBox(2, 2, 4, 4, 0), 6, 6)
    np.testing.assert_array_equal(out[..., 0], 3.0)
    np.testing.assert_array_equal(out[..., 1], 4.0)


def test_crop_flow_identity():
    rng = np.random.default_rng(1)
    flow = rng.normal(size=(6, 5, 2))
    out = crop_flow(flow, BBox(0, 0, 5, 6, 0), 5, 6)
    np.testing.assert_array_equal(out, flow)


def test_crop_flow_quadrant():
    flow = np.zeros((4, 4, 2))
    flow[:2, :2, 0] = 1.0
    flow[:2, 2:, 0] = 2.0
    flow[2:, :2, 0] = 3.0
    flow[2:, 2:, 0] = 4.0
    out = crop_flow(flow, BBox(2, 0, 2, 2, 0), 3, 3)
    np.testing.assert_array_equal(out[..., 0], 2.0)


def test_crop_flow_outside_rejected():
    with pytest.raises(ValueError):
        crop_flow(np.zeros((4, 4, 2)), BBox(-5, -5, 2, 2, 0), 2, 2)


def test_stack_flows_shape_order_roundtrip():
    rng = np.random.default_rng(2)
    flows = [rng.normal(size=(6, 7, 2)) for _ in range(5)]
    st = stack_flows(flows)
    assert st.shape == (10, 6, 7)
    for k, f in enumerate(flows):
        np.testing.assert_array_equal(st[2 * k], f[..., 0])
        np.testing.assert_array_equal(st[2 * k + 1], f[..., 1])
    back = unstack_flows(st)
    for f, g in zip(flows, back):
        np.testing.assert_array_equal(f, g)


def test_stack_flows_channel_order_by_construction():
    k = 3
    flows = [np.zeros((4, 4, 2)) for _ in range(5)]
    flows[k - 1][..., 0] = k
    st = stack_flows(flows)
    np.testing.assert_array_equal(st[2 * (k - 1)], k)
    assert st.sum() == k * 16


def test_stack_flows_rejects_bad_input():
    flows = [np.zeros((4, 4, 2))] * 4
    with pytest.raises(ValueError):
        stack_flows(flows)
    bad = [np.zeros((4, 4, 2))] * 4 + [np.zeros((5, 4, 2))]
    with pytest.raises(ValueError):
        stack_flows(bad)


def test_hoof_zero_flow():
    np.testing.assert_array_equal(hoof(np.zeros((9, 9, 2))), np.zeros(45))


def test_hoof_uniform_x_one_hot():
    flow = np.zeros((9, 9, 2))
    flow[..., 0] = 1.0
    h = hoof(flow)
    blocks = h.reshape(9, 5)
    # angle 0 falls in bin floor((0+pi)/(2pi)*5) = 2
    for b in blocks:
        np.testing.assert_allclose(b, [0, 0, 1, 0, 0])


def test_hoof_scale_invariance():
    rng = np.random.default_rng(3)
    flow = rng.normal(size=(10, 12, 2))
    base = hoof(flow)
    for c in (0.5, 2.0, 10.0):
        np.testing.assert_allclose(hoof(c * flow), base, atol=1e-9)


def test_hoof_blocks_sum_to_one():
    rng = np.random.default_rng(4)
    flow = rng.normal(size=(11, 13, 2))
    h = hoof(flow)
    for b in h.reshape(9, 5):
        s = b.sum()
        assert abs(s - 1.0) <= 1e-9 or s == 0.0


def test_hoof_small_field_rejected():
    with pytest.raises(ValueError):
        hoof(np.zeros((2, 9, 2)))


def test_hoof_window_mean_and_symmetry():
    rng = np.random.default_rng(5)
    h = rng.uniform(size=45)
    np.testing.assert_allclose(hoof_window([h] * 10), h, rtol=1e-12)
    np.testing.assert_allclose(hoof_window([h, np.zeros(45)]), h / 2)
    seq = [rng.uniform(size=45) for _ in range(6)]
    np.testing.assert_allclose(hoof_window(seq), hoof_window(seq[::-1]))
    with pytest.raises(ValueError):
        hoof_window([])


def test_hoof_window_truncates_to_window():
    seq = [np.full(45, float(i)) for i in range(15)]
    np.testing.assert_allclose(hoof_window(seq, window=10),
                               np.full(45, np.mean(range(5, 15))))


def test_mean_flow_magnitude():
    flow = np.zeros((4, 4, 2))
    flow[..., 0] = 3.0
    flow[..., 1] = 4.0
    assert mean_flow_magnitude(flow) == 5.0
    assert mean_flow_magnitude(np.zeros((4, 4, 2))) == 0.0
    rng = np.random.default_rng(6)
    f = rng.normal(size=(5, 5, 2))
    np.testing.assert_allclose(mean_flow_magnitude(2.5 * f),
                               2.5 * mean_flow_magnitude(f))


def test_bbox_clipping():
    box = BBox(-2, -2, 5, 5, 0)
    c = box.clipped(8, 8)
    assert (c.x, c.y, c.w, c.h) == (0, 0, 3, 3)
    assert BBox(10, 0, 2, 2, 0).clipped(8, 8) is None
