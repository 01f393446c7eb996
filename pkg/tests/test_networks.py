"""Network assembly, sharing policies, matching, checkpoints."""

import numpy as np
import pytest

from egomatch.networks import (CheckpointError, MatchQuery, Network, ShapeError,
                               build_network, default_spec, load_checkpoint,
                               match, match_score, save_checkpoint,
                               stream_param_counts)
from egomatch.tensor import Tensor


def _rand_input(spec, rng):
    image = flow = None
    if spec.spatial is not None:
        image = Tensor(rng.normal(size=(spec.spatial.in_channels,
                                        spec.spatial.in_size,
                                        spec.spatial.in_size)))
    if spec.temporal is not None:
        flow = Tensor(rng.normal(size=(spec.temporal.in_channels,
                                       spec.temporal.in_size,
                                       spec.temporal.in_size)))
    return image, flow


def test_embed_output_shapes():
    rng = np.random.default_rng(0)
    for arch in ("spatial", "temporal", "two-stream"):
        spec = default_spec(arch, "semi")
        net = build_network(spec, seed=1)
        image, flow = _rand_input(spec, rng)
        out = net.embed_ego(image, flow)
        assert out.data.shape == (128,)


def test_param_count_formulas():
    for arch in ("spatial", "temporal", "two-stream"):
        counts = stream_param_counts(default_spec(arch, "semi"))
        early, late = counts["early"], counts["late"]
        semi = build_network(default_spec(arch, "semi"), 0).store.total()
        full = build_network(default_spec(arch, "full"), 0).store.total()
        none = build_network(default_spec(arch, "none"), 0).store.total()
        assert semi == 2 * early + late
        assert full == early + late
        assert none == 2 * (early + late)


def test_same_seed_identical_params():
    a = build_network(default_spec("spatial", "semi"), seed=5)
    b = build_network(default_spec("spatial", "semi"), seed=5)
    for (g1, n1, t1), (g2, n2, t2) in zip(a.store.named(), b.store.named()):
        assert (g1, n1) == (g2, n2)
        np.testing.assert_array_equal(t1.data, t2.data)


def test_full_sharing_branches_identical():
    spec = default_spec("temporal", "full")
    net = build_network(spec, seed=2)
    rng = np.random.default_rng(1)
    _, flow = _rand_input(spec, rng)
    np.testing.assert_array_equal(net.embed_ego(flow=flow).data,
                                  net.embed_exo(flow=flow).data)


def test_none_policy_identical_at_init():
    spec = default_spec("two-stream", "none")
    net = build_network(spec, seed=3)
    rng = np.random.default_rng(2)
    image, flow = _rand_input(spec, rng)
    np.testing.assert_array_equal(net.embed_ego(image, flow).data,
                                  net.embed_exo(image, flow).data)


def test_exo_positive_negative_same_function():
    spec = default_spec("spatial", "semi")
    net = build_network(spec, seed=4)
    rng = np.random.default_rng(3)
    image, _ = _rand_input(spec, rng)
    np.testing.assert_array_equal(net.embed_exo(image).data,
                                  net.embed_exo(image).data)


def test_wrong_input_shape_rejected():
    net = build_network(default_spec("spatial", "semi"), seed=0)
    with pytest.raises(ShapeError):
        net.embed_ego(image=Tensor(np.zeros((3, 16, 16))))
    with pytest.raises(ShapeError):
        net.embed_ego(flow=Tensor(np.zeros((10, 32, 32))))


def test_unknown_arch_policy_rejected():
    with pytest.raises(ValueError):
        default_spec("recurrent", "semi")
    with pytest.raises(ValueError):
        default_spec("spatial", "half")


def test_match_and_score():
    ego = np.array([0.0, 0.0])
    assert match(MatchQuery(ego, {7: np.array([1.0, 0.0]),
                                  3: np.array([0.0, 2.0])})) == 7
    assert match(MatchQuery(ego, {9: np.array([1.0, 1.0])})) == 9
    # tie -> smallest person id
    assert match(MatchQuery(ego, {5: np.array([1.0, 0.0]),
                                  2: np.array([0.0, 1.0])})) == 2
    assert match_score(ego, ego) == 0.0
    assert match_score(ego, np.array([3.0, 4.0])) == -25.0
    assert match_score(np.array([3.0, 4.0]), ego) == -25.0


def test_match_translation_invariance():
    rng = np.random.default_rng(4)
    ego = rng.normal(size=4)
    cands = {i: rng.normal(size=4) for i in range(5)}
    t = rng.normal(size=4)
    shifted = {i: c + t for i, c in cands.items()}
    assert match(MatchQuery(ego, cands)) == match(MatchQuery(ego + t, shifted))


def test_checkpoint_roundtrip_bitwise(tmp_path):
    net = build_network(default_spec("two-stream", "semi"), seed=6)
    p = tmp_path / "net.ckpt"
    save_checkpoint(net, p)
    first = p.read_bytes()
    loaded = load_checkpoint(p)
    assert loaded.spec == net.spec
    for (g1, n1, t1), (g2, n2, t2) in zip(net.store.named(),
                                          loaded.store.named()):
        assert (g1, n1) == (g2, n2)
        np.testing.assert_array_equal(t1.data, t2.data)
    save_checkpoint(loaded, p)
    assert p.read_bytes() == first


def test_checkpoint_rejects_corruption(tmp_path):
    net = build_network(default_spec("spatial", "semi"), seed=7)
    p = tmp_path / "net.ckpt"
    save_checkpoint(net, p)
    raw = p.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    bad.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    bad.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_shared_storage_is_single_object():
    net = build_network(default_spec("spatial", "semi"), seed=8)
    # late layers in both branch wirings must reference identical tensors
    ego_layers = net._layers["ego"]["spatial"]
    exo_layers = net._layers["exo"]["spatial"]
    shared_names = set(net.store.groups["shared"])
    assert shared_names
    n_late = sum(1 for (le, pe), (lx, px) in zip(ego_layers, exo_layers)
                 if pe is not None and pe is px)
    assert n_late > 0
    # early params differ in identity between branches
    n_early = sum(1 for (le, pe), (lx, px) in zip(ego_layers, exo_layers)
                  if pe is not None and pe is not px)
    assert n_early > 0
