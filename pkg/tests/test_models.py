"""Baseline models and the save/load dispatch across model kinds."""

import numpy as np
import pytest

from graphlift.errors import CheckpointFormatError, DimensionError
from graphlift.checkpoint import save_checkpoint
from graphlift.models import (FcBaselineModel, PlainGcnModel, load_model,
                              save_model)
from graphlift.pipeline import HopePipeline, PipelineConfig
from graphlift.tensor import Tensor, mse
from graphlift.unet import GraphUNetModel, UNetConfig

SMALL_UNET = UNetConfig(feature_schedule=(4, 8, 8, 16))
SMALL_PIPE = PipelineConfig(unet=SMALL_UNET, feature_width=32,
                            refine_widths=(16, 8), raster_grid=8)


def rand_input(seed=0, batch=None):
    rng = np.random.default_rng(seed)
    shape = (29, 2) if batch is None else (batch, 29, 2)
    return rng.uniform(100.0, 540.0, size=shape)


# ---- fc baseline ------------------------------------------------------------


def test_fc_shapes_and_param_count():
    model = FcBaselineModel(hidden=(256, 256), seed=0)
    assert model.forward(rand_input()).shape == (29, 3)
    assert model.forward(rand_input(batch=5)).shape == (5, 29, 3)
    # dense stack over the 87-long flattened input (29 x 3 with ones column)
    assert model.num_parameters() == 87 * 256 + 256 * 256 + 256 * 87


def test_fc_three_dense_layers():
    model = FcBaselineModel(seed=1)
    assert sorted(model.parameters()) == ["fc0.W", "fc1.W", "fc2.W"]
    x = rand_input(seed=2)
    h = np.concatenate([(x - 320.0) / 160.0, np.ones((29, 1))], axis=1).reshape(87)
    for w in model.weights[:-1]:
        h = np.maximum(h @ w.data, 0.0)
    expected = (h @ model.weights[-1].data).reshape(29, 3) * 250.0
    np.testing.assert_allclose(model.forward(x).data, expected, atol=1e-10)


def test_fc_gradients_flow():
    model = FcBaselineModel(hidden=(16, 16), seed=3)
    mse(model.forward(rand_input()), np.zeros((29, 3))).backward()
    for p in model.parameters().values():
        assert np.any(p.grad != 0.0)


# ---- plain gcn baseline ------------------------------------------------------


def test_gcn_shapes_and_fixed_graph():
    model = PlainGcnModel(hidden=(128, 128), seed=0)
    assert model.forward(rand_input()).shape == (29, 3)
    assert model.forward(rand_input(batch=4)).shape == (4, 29, 3)
    assert sorted(model.parameters()) == ["conv0.W", "conv1.W", "conv2.W"]
    assert model.num_parameters() == 3 * 128 + 128 * 128 + 128 * 3
    # the graph itself is not a parameter and does not train
    assert not model.adjacency.requires_grad


def test_gcn_matches_composed_ops():
    model = PlainGcnModel(hidden=(8, 8), seed=4)
    x = rand_input(seed=5)
    h = np.concatenate([(x - 320.0) / 160.0, np.ones((29, 1))], axis=1)
    a = model.adjacency.data
    for i, w in enumerate(model.weights):
        h = a @ (h @ w.data)
        if i < 2:
            h = np.maximum(h, 0.0)
    np.testing.assert_allclose(model.forward(x).data, h * 250.0, atol=1e-10)


def test_models_validate_input_shape():
    for model in (FcBaselineModel(hidden=(8, 8)), PlainGcnModel(hidden=(8, 8))):
        with pytest.raises(DimensionError):
            model.forward(np.zeros((21, 2)))


# ---- save / load dispatch -----------------------------------------------------


def assert_params_equal(a, b):
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k].data, b[k].data)


@pytest.mark.parametrize("build", [
    lambda: FcBaselineModel(hidden=(16, 16), seed=7),
    lambda: PlainGcnModel(hidden=(8, 8), seed=7),
    lambda: GraphUNetModel(SMALL_UNET, seed=7),
    lambda: HopePipeline(SMALL_PIPE, seed=7),
], ids=["fc", "gcn", "unet", "pipeline"])
def test_save_load_round_trip(build, tmp_path):
    model = build()
    # make the state distinguishable from a fresh seed-7 build
    first = next(iter(model.parameters().values()))
    first.data += 0.25
    base = str(tmp_path / "model")
    save_model(base, model)
    back = load_model(base)
    assert type(back) is type(model)
    assert_params_equal(back.parameters(), model.parameters())


def test_loaded_model_predicts_identically(tmp_path):
    model = GraphUNetModel(SMALL_UNET, seed=8)
    base = str(tmp_path / "unet")
    save_model(base, model)
    back = load_model(base)
    x = rand_input(seed=9, batch=3)
    np.testing.assert_array_equal(back.forward(x).data, model.forward(x).data)


def test_load_unknown_kind_rejected(tmp_path):
    base = str(tmp_path / "weird")
    save_checkpoint(base, {"w": Tensor(np.zeros(3))}, {"kind": "transformer"})
    with pytest.raises(CheckpointFormatError):
        load_model(base)


def test_load_malformed_config_rejected(tmp_path):
    base = str(tmp_path / "broken")
    save_checkpoint(base, {"w": Tensor(np.zeros(3))}, {"kind": "fc"})
    with pytest.raises(CheckpointFormatError):
        load_model(base)
