"""The full 2D-to-3D cascade: a stub feature provider standing in for an
image backbone, a 3-layer adaptive graph network that refines the initial
2D estimate, and the graph U-Net that lifts 2D to 3D.

The stub rasterizes the sample's ground-truth 2D keypoints onto a 32x32
occupancy grid and applies trainable linear maps: grid -> 2048 features
-> 29x2 initial coordinates.  It keeps the cascade end-to-end trainable
without any image data.  Refinement consumes 2050-wide node features:
the 2048 image features broadcast to every node plus that node's initial
2D estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DimensionError, DomainError
from .layers import AdaptiveGraphConvLayer, uniform_init
from .keypoints import NUM_NODES
from .synth import SampleRecord
from .tensor import Tensor, concat_features, matmul, mse
from .unet import GraphUNetModel, UNetConfig, unet_forward

__all__ = [
    "PipelineConfig", "HopeLossWeights", "FeatureProvider", "StubFeatureProvider",
    "RefineNet", "HopePipeline", "stub_encode", "refine2d", "hope_loss",
    "hope_loss_terms", "predict", "rasterize_keypoints",
]


@dataclass(frozen=True)
class HopeLossWeights:
    alpha: float = 0.1
    beta: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("loss weights must be non-negative")


@dataclass(frozen=True)
class PipelineConfig:
    unet: UNetConfig = field(default_factory=UNetConfig)
    feature_width: int = 2048
    refine_widths: tuple = (512, 128)
    raster_grid: int = 32
    image_size: float = 640.0
    input_center: float = 320.0
    input_scale: float = 160.0
    stub_output_scale: float = 160.0
    refine_output_scale: float = 160.0

    def __post_init__(self):
        object.__setattr__(self, "refine_widths", tuple(int(w) for w in self.refine_widths))
        if self.feature_width < 1 or self.raster_grid < 1:
            raise DomainError("feature width and raster grid must be positive")
        if any(w < 1 for w in self.refine_widths):
            raise DomainError("refine widths must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["unet"] = self.unet.to_dict()
        d["refine_widths"] = list(self.refine_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["unet"] = UNetConfig.from_dict(d["unet"])
        d["refine_widths"] = tuple(d["refine_widths"])
        return cls(**d)


def rasterize_keypoints(coords2d, grid: int = 32, image_size: float = 640.0) -> np.ndarray:
    """Binary occupancy grid, flattened row-major: (B, grid*grid).

    Keypoints are binned at image_size/grid pixels per cell; coordinates
    outside the image clamp to the border cells.
    """
    pts = np.asarray(coords2d, dtype=np.float64)
    squeeze = pts.ndim == 2
    if squeeze:
        pts = pts[None]
    if pts.ndim != 3 or pts.shape[-1] != 2:
        raise DimensionError(f"expected (B, N, 2) keypoints, got {pts.shape}")
    cell = image_size / grid
    cols = np.clip((pts[..., 0] // cell).astype(np.intp), 0, grid - 1)
    rows = np.clip((pts[..., 1] // cell).astype(np.intp), 0, grid - 1)
    flat = rows * grid + cols                       # (B, N)
    out = np.zeros((pts.shape[0], grid * grid))
    b = np.repeat(np.arange(pts.shape[0]), pts.shape[1])
    out[b, flat.reshape(-1)] = 1.0
    return out[0] if squeeze else out


class FeatureProvider:
    """Maps a sample to a 2048-long feature vector plus an initial 29x2
    estimate.  Implementations may be trainable."""

    def encode(self, sample: SampleRecord) -> tuple[Tensor, Tensor]:
        raise NotImplementedError

    def parameters(self) -> dict[str, Tensor]:
        return {}


class StubFeatureProvider(FeatureProvider):
    """Trainable linear maps over a keypoint raster: grid cells -> features
    -> initial 2D head (with a bias so the head can shift to image scale)."""

    def __init__(self, config: PipelineConfig, rng: np.random.Generator):
        g2 = config.raster_grid * config.raster_grid
        self.config = config
        self.W1 = Tensor(uniform_init(rng, (g2, config.feature_width), g2),
                         requires_grad=True, name="W1")
        self.W2 = Tensor(uniform_init(rng, (config.feature_width, NUM_NODES * 2),
                                      config.feature_width),
                         requires_grad=True, name="W2")
        self.b2 = Tensor(np.zeros(NUM_NODES * 2), requires_grad=True, name="b2")

    def encode_batch(self, coords2d_batch) -> tuple[Tensor, Tensor]:
        """(B, 29, 2) ground-truth pixels -> features (B, 2048), init2d (B, 29, 2)."""
        raster = rasterize_keypoints(coords2d_batch, self.config.raster_grid,
                                     self.config.image_size)
        if raster.ndim == 1:
            raster = raster[None]
        r = Tensor(raster)
        features = matmul(r, self.W1)
        head = matmul(features, self.W2) + self.b2
        init2d = head.reshape(head.shape[0], NUM_NODES, 2) * self.config.stub_output_scale
        return features, init2d

    def encode(self, sample: SampleRecord) -> tuple[Tensor, Tensor]:
        features, init2d = self.encode_batch(sample.gt2d[None])
        return features.reshape(self.config.feature_width), init2d.reshape(NUM_NODES, 2)

    def parameters(self) -> dict[str, Tensor]:
        return {"W1": self.W1, "W2": self.W2, "b2": self.b2}


def stub_encode(provider: FeatureProvider, sample: SampleRecord) -> tuple[Tensor, Tensor]:
    """Feature vector (2048,) and initial 2D estimate (29, 2) for one sample."""
    return provider.encode(sample)


class RefineNet:
    """Three adaptive graph conv layers over 2050-wide node features
    (2048 broadcast image features + the 2D estimate), returning refined
    2D coordinates.  First two layers ReLU, the last linear."""

    def __init__(self, config: PipelineConfig, rng: np.random.Generator):
        self.config = config
        w0, w1 = config.refine_widths
        eye = np.eye(NUM_NODES)
        in_w = config.feature_width + 2
        self.layers = [
            AdaptiveGraphConvLayer(eye, in_w, w0, "relu", rng),
            AdaptiveGraphConvLayer(eye, w0, w1, "relu", rng),
            AdaptiveGraphConvLayer(eye, w1, 2, "linear", rng),
        ]
        self._ones_nodes = Tensor(np.ones((NUM_NODES, 1)))

    def forward(self, features: Tensor, init2d: Tensor) -> Tensor:
        cfg = self.config
        squeeze = init2d.ndim == 2
        if squeeze:
            init2d = init2d.reshape(1, *init2d.shape)
        if features.ndim == 1:
            features = features.reshape(1, features.shape[0])
        if features.shape[-1] != cfg.feature_width:
            raise DimensionError(
                f"expected {cfg.feature_width} image features, got {features.shape[-1]}"
            )
        if init2d.shape[1:] != (NUM_NODES, 2):
            raise DimensionError(f"expected ({NUM_NODES}, 2) estimates, got {init2d.shape}")
        per_node = matmul(self._ones_nodes, features.reshape(features.shape[0], 1,
                                                             features.shape[-1]))
        scaled = (init2d - cfg.input_center) * (1.0 / cfg.input_scale)
        h = concat_features([per_node, scaled])
        for layer in self.layers:
            h = layer.forward(h)
        out = h * cfg.refine_output_scale
        if squeeze:
            out = out.reshape(NUM_NODES, 2)
        return out

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.parameters().items():
                out[f"conv{i}.{k}"] = v
        return out


def refine2d(refiner: RefineNet, features: Tensor, init2d: Tensor) -> Tensor:
    return refiner.forward(features, init2d)


class HopePipeline:
    """stub -> refine2d -> graph U-Net, with named parameter groups for
    staged training."""

    def __init__(self, config: PipelineConfig = PipelineConfig(), seed: int = 0):
        self.config = config
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.stub = StubFeatureProvider(config, rng)
        self.refine = RefineNet(config, rng)
        self.unet = GraphUNetModel(config.unet, seed=int(rng.integers(0, 2**31 - 1)))

    def forward_batch(self, coords2d_batch) -> tuple[Tensor, Tensor, Tensor]:
        features, init2d = self.stub.encode_batch(coords2d_batch)
        refined = self.refine.forward(features, init2d)
        pred3d = unet_forward(self.unet, refined)
        return init2d, refined, pred3d

    def stub_refine_parameters(self) -> dict[str, Tensor]:
        out = {f"stub.{k}": v for k, v in self.stub.parameters().items()}
        out.update({f"refine.{k}": v for k, v in self.refine.parameters().items()})
        return out

    def unet_parameters(self) -> dict[str, Tensor]:
        return {f"unet.{k}": v for k, v in self.unet.parameters().items()}

    def parameters(self) -> dict[str, Tensor]:
        out = self.stub_refine_parameters()
        out.update(self.unet_parameters())
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def config_dict(self) -> dict:
        return {"kind": "pipeline", "seed": self.seed, "pipeline": self.config.to_dict()}

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


def hope_loss_terms(init2d, refined2d, pred3d, gt2d, gt3d,
                    weights: HopeLossWeights = HopeLossWeights()):
    """The three MSE terms and their weighted total (a scalar Tensor).

    2D terms are pixels squared, the 3D term millimeters squared; the
    weights pull them into a similar range.
    """
    l_init = mse(init2d, gt2d)
    l_2d = mse(refined2d, gt2d)
    l_3d = mse(pred3d, gt3d)
    total = l_init * weights.alpha + l_2d * weights.beta + l_3d
    return total, l_init, l_2d, l_3d


def hope_loss(init2d, refined2d, pred3d, gt2d, gt3d,
              weights: HopeLossWeights = HopeLossWeights()) -> Tensor:
    total, _, _, _ = hope_loss_terms(init2d, refined2d, pred3d, gt2d, gt3d, weights)
    return total


def predict(pipeline: HopePipeline, sample: SampleRecord) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic full-cascade inference: refined 2D px, predicted 3D mm."""
    _, refined, pred3d = pipeline.forward_batch(sample.gt2d[None])
    return refined.data[0].copy(), pred3d.data[0].copy()
