"""Baseline architectures for the ablation studies, plus checkpoint
save/load for every model kind.

The FC baseline is a 3-layer dense network over the flattened 58-long
coordinate vector.  The plain GCN baseline is three graph convolutions
over the fixed, renormalized skeleton adjacency (weights train, the
graph does not).  Both share the U-Net's input normalization, appended
constant column, and output scale so architecture is the only variable.
"""

from __future__ import annotations

import numpy as np

from .adjacency import normalize_adjacency
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointFormatError, DimensionError
from .keypoints import NUM_NODES, default_graph
from .layers import uniform_init
from .pipeline import HopePipeline, PipelineConfig
from .tensor import Tensor, concat_features, matmul, relu
from .unet import GraphUNetModel, UNetConfig

__all__ = ["FcBaselineModel", "PlainGcnModel", "save_model", "load_model"]


class _LiftModelBase:
    """Shared plumbing for 29x2 -> 29x3 models."""

    input_center = 320.0
    input_scale = 160.0
    output_scale = 250.0

    def _normalize(self, coords2d) -> tuple[Tensor, bool]:
        x = coords2d if isinstance(coords2d, Tensor) else Tensor(coords2d)
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        if x.ndim != 3 or x.shape[1:] != (NUM_NODES, 2):
            raise DimensionError(f"expected ({NUM_NODES}, 2) inputs, got {x.shape}")
        ones = Tensor(np.ones((x.shape[0], NUM_NODES, 1)))
        h = concat_features([(x - self.input_center) * (1.0 / self.input_scale), ones])
        return h, squeeze

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(arrays)
        extra = set(arrays) - set(params)
        if missing or extra:
            raise DimensionError(f"parameter names mismatch: missing {sorted(missing)}, "
                                 f"unexpected {sorted(extra)}")
        for k, p in params.items():
            if arrays[k].shape != p.data.shape:
                raise DimensionError(f"parameter {k} shape {arrays[k].shape} != {p.data.shape}")
            p.data[...] = arrays[k]


class FcBaselineModel(_LiftModelBase):
    """Dense 3-layer lift over the flattened coordinate vector."""

    def __init__(self, hidden: tuple = (256, 256), seed: int = 0):
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        # input width: 29 nodes x (2 coords + 1 constant), flattened
        widths = [NUM_NODES * 3] + list(self.hidden) + [NUM_NODES * 3]
        self.weights = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            self.weights.append(Tensor(uniform_init(rng, (a, b), a),
                                       requires_grad=True, name=f"fc{i}.W"))

    def forward(self, coords2d) -> Tensor:
        h, squeeze = self._normalize(coords2d)
        h = h.reshape(h.shape[0], NUM_NODES * 3)
        for w in self.weights[:-1]:
            h = relu(matmul(h, w))
        y = matmul(h, self.weights[-1]).reshape(h.shape[0], NUM_NODES, 3)
        y = y * self.output_scale
        if squeeze:
            y = y.reshape(NUM_NODES, 3)
        return y

    def parameters(self) -> dict[str, Tensor]:
        return {w.name: w for w in self.weights}

    def config_dict(self) -> dict:
        return {"kind": "fc", "seed": self.seed, "fc": {"hidden": list(self.hidden)}}


class PlainGcnModel(_LiftModelBase):
    """Three graph convolutions over the fixed renormalized skeleton."""

    def __init__(self, hidden: tuple = (128, 128), seed: int = 0):
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.adjacency = Tensor(normalize_adjacency(default_graph().skeleton_adjacency))
        widths = [3] + list(self.hidden) + [3]
        self.weights = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            self.weights.append(Tensor(uniform_init(rng, (a, b), a),
                                       requires_grad=True, name=f"conv{i}.W"))

    def forward(self, coords2d) -> Tensor:
        h, squeeze = self._normalize(coords2d)
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = matmul(self.adjacency, matmul(h, w))
            if i < last:
                h = relu(h)
        y = h * self.output_scale
        if squeeze:
            y = y.reshape(NUM_NODES, 3)
        return y

    def parameters(self) -> dict[str, Tensor]:
        return {w.name: w for w in self.weights}

    def config_dict(self) -> dict:
        return {"kind": "gcn", "seed": self.seed, "gcn": {"hidden": list(self.hidden)}}


def save_model(base: str, model) -> None:
    save_checkpoint(base, model.parameters(), model.config_dict())


def load_model(base: str):
    """Rebuild a model of the checkpointed kind and load its parameters."""
    arrays, config = load_checkpoint(base)
    kind = config.get("kind")
    try:
        if kind == "unet":
            model = GraphUNetModel(UNetConfig.from_dict(config["unet"]),
                                   seed=int(config.get("seed", 0)))
        elif kind == "pipeline":
            model = HopePipeline(PipelineConfig.from_dict(config["pipeline"]),
                                 seed=int(config.get("seed", 0)))
        elif kind == "fc":
            model = FcBaselineModel(tuple(config["fc"]["hidden"]),
                                    seed=int(config.get("seed", 0)))
        elif kind == "gcn":
            model = PlainGcnModel(tuple(config["gcn"]["hidden"]),
                                  seed=int(config.get("seed", 0)))
        else:
            raise CheckpointFormatError(f"checkpoint has unknown model kind {kind!r}")
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"checkpoint config is malformed: {e}")
    model.load_state(arrays)
    return model
