import dataclasses
import json

import numpy as np
import pytest

from twister.fusion import FusionVariant
from twister.geometry import ScanOrder
from twister.model import ConfigError, ModelConfig, StageConfig, TwisterModel, VSSLayer, segment
from twister.tensor import ShapeError
from twister.twisting import local_interaction

SMALL = ModelConfig(
    stages=(StageConfig(1, 8, False), StageConfig(1, 16, True)),
    vss_layers_per_block=1,
    state_dim=4,
    text_dim=8,
    max_tokens=8,
    decoder_dim=8,
)


def test_default_config_layout():
    cfg = ModelConfig()
    assert [s.dim for s in cfg.stages] == [32, 64, 128]
    assert cfg.block_count == 6 and cfg.downsample_factor == 16 and cfg.state_dim == 8


@pytest.mark.parametrize(
    "changes, key",
    [
        ({"vss_layers_per_block": 0}, "vss_layers_per_block"),
        ({"stages": []}, "stages"),
        ({"stages": [[1, 16], [1, 8]]}, "stages[1]"),
        ({"use_global": False, "use_local": False}, "use_global"),
        ({"fusion": "gated"}, "fusion"),
        ({"bogus": 1}, "bogus"),
    ],
)
def test_config_validation_names_the_key(changes, key):
    with pytest.raises(ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
        ModelConfig.from_dict(changes)


def test_config_json_roundtrip_and_line_diagnostic():
    cfg = ModelConfig.from_dict({"stages": [[1, 8], [2, 16, True]], "fusion": "attention", "scan_order": "parallel"})
    again = ModelConfig.from_json(json.dumps(cfg.to_dict()))
    assert again == cfg
    with pytest.raises(ConfigError, match="line 3"):
        ModelConfig.from_json('{\n"seed": 1,\n"state_dim": ,\n}')


def test_text_encode(rng):
    m = TwisterModel(SMALL)
    a = m.text_encode([3, 1, 4])
    assert np.array_equal(a, TwisterModel(SMALL).text_encode([3, 1, 4]))
    assert m.text_encode([7]).shape == (1, SMALL.text_dim)
    rows = m.text_encode(list(range(SMALL.max_tokens)))
    assert len({r.tobytes() for r in rows}) == len(rows)
    for bad in ([SMALL.vocab_size], [-1], []):
        with pytest.raises(ValueError):
            m.text_encode(bad)


def test_text_encode_all_rows_distinct():
    m = TwisterModel(SMALL)
    emb = m.components["embed"]
    assert len({r.tobytes() for r in emb}) == emb.shape[0]


def test_vss_layer(rng):
    layer = VSSLayer.init(6, 2, 3, rng)
    assert not layer(np.zeros((3, 4, 6))).any()
    x = rng.standard_normal((3, 4, 6))
    out = layer(x)
    assert out.shape == x.shape
    assert np.abs(out - layer(x, residual=False)).max() > 1e-9


def test_backbone_shapes():
    m = TwisterModel(ModelConfig())
    image = np.random.default_rng(0).uniform(size=(64, 64, 3))
    taps = m.backbone_forward(image, m.text_encode([1, 2, 3]))
    assert [t.shape[:2] for t in taps] == [(16, 16)] * 2 + [(8, 8)] * 2 + [(4, 4)] * 2
    assert len(taps) == m.config.block_count
    assert all(np.all(np.isfinite(t)) for t in taps)


def test_backbone_rejects_indivisible():
    m = TwisterModel(SMALL)
    with pytest.raises(ShapeError, match="multiple of 8"):
        m.backbone_forward(np.zeros((12, 16, 3)), m.text_encode([1]))


def test_single_tap_decoder():
    cfg = dataclasses.replace(SMALL, stages=(StageConfig(1, 8, False),))
    logits = TwisterModel(cfg).segment(np.random.default_rng(1).uniform(size=(8, 12, 3)), [1, 2])
    assert logits.shape == (8, 12, 1) and np.all(np.isfinite(logits))


def test_segment_determinism_and_sensitivity():
    image = np.random.default_rng(5).uniform(size=(64, 64, 3))
    ids = [1, 2, 3, 4, 5, 6, 7, 8]
    a = segment(image, ids, ModelConfig())
    b = segment(image, ids, ModelConfig())
    assert a.shape == (64, 64, 1)
    assert a.tobytes() == b.tobytes()
    c = segment(image, ids[:-1] + [9], ModelConfig())
    assert np.abs(a - c).max() > 0


def test_block_config_ablation_shapes():
    image = np.random.default_rng(2).uniform(size=(16, 16, 3))
    for g, l, extra in [(True, True, 8 + 2), (False, True, 2), (True, False, 8)]:
        traces = []
        TwisterModel(dataclasses.replace(SMALL, use_global=g, use_local=l)).segment(image, [1, 2], traces)
        assert traces[0]["cube"].channels == 8 + extra


@pytest.mark.parametrize("fusion", list(FusionVariant))
def test_every_fusion_runs(fusion):
    cfg = dataclasses.replace(SMALL, fusion=fusion)
    logits = TwisterModel(cfg).segment(np.random.default_rng(3).uniform(size=(16, 16, 3)), [4, 5, 6])
    assert logits.shape == (16, 16, 1) and np.all(np.isfinite(logits))


def test_traced_interaction_maps_match_standalone():
    m = TwisterModel(SMALL)
    image = np.random.default_rng(4).uniform(size=(16, 16, 3))
    ids = [1, 2, 3]
    traces = []
    m.segment(image, ids, traces)
    f_t = m.text_encode(ids)
    from twister.tensor import layer_norm

    for block, trace in zip(m.blocks, traces):
        again = local_interaction(layer_norm(trace["fusion_input"]), f_t, block.fusion.weights)
        assert np.array_equal(trace["local_map"], again)
        assert trace["local_map"].shape[2] == len(ids)


def test_weights_roundtrip(tmp_path):
    m = TwisterModel(SMALL)
    path = tmp_path / "w.bin"
    m.save(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    assert manifest["dtype"] == "<f8"
    assert path.stat().st_size == 8 * manifest["count"]
    loaded = TwisterModel.from_file(dataclasses.replace(SMALL, seed=99), path)
    image = np.random.default_rng(0).uniform(size=(16, 16, 3))
    assert loaded.segment(image, [1]).tobytes() == m.segment(image, [1]).tobytes()
    assert TwisterModel(dataclasses.replace(SMALL, seed=99)).segment(image, [1]).tobytes() != m.segment(image, [1]).tobytes()


def test_weights_shape_mismatch(tmp_path):
    TwisterModel(SMALL).save(tmp_path / "w.bin")
    with pytest.raises(ValueError, match="shape"):
        TwisterModel.from_file(dataclasses.replace(SMALL, text_dim=4), tmp_path / "w.bin")


def test_scan_order_config_changes_output():
    image = np.random.default_rng(6).uniform(size=(16, 16, 3))
    outs = [TwisterModel(dataclasses.replace(SMALL, scan_order=o)).segment(image, [1, 2]) for o in ScanOrder]
    for i in range(5):
        for j in range(i + 1, 5):
            assert np.abs(outs[i] - outs[j]).max() > 1e-6
