"""The graph U-Net: encoder convs with pooling, a bottleneck conv, and a
decoder that unpools, concatenates the matching encoder skip features,
and convolves back up to the full node count.

Input is 29 nodes x 2 pixel coordinates, output 29 nodes x 3 millimeter
coordinates.  Raw pixels and millimeters are poor numeric ranges for
unit-scale weights, so the model applies fixed affine constants: inputs
are centered/scaled into roughly [-2, 2] and the final features are
multiplied by output_scale.  A constant all-ones column is appended to
the normalized input: the graph layers carry no bias terms, and without
some constant channel a ReLU stack is positively homogeneous in its
input, which would forbid the inverse relation between 2D spread and
depth that the lift has to learn.  All of these are architecture
constants, not trainable, and the all-zero-parameter model still outputs
exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .adjacency import ADJACENCY_INIT_VARIANTS, initial_adjacency
from .errors import DimensionError, DomainError
from .keypoints import FIXED_POOL_GROUPS, NUM_NODES
from .layers import (AdaptiveGraphConvLayer, FixedPoolLayer, FixedUnpoolLayer,
                     GPoolLayer, GraphPoolLayer, GraphUnpoolLayer,
                     scatter_rows_batched)
from .tensor import Tensor, concat_features

__all__ = ["UNetConfig", "GraphUNetModel", "unet_forward", "build_default_unet",
           "POOLING_VARIANTS", "DEFAULT_UNET_PARAM_COUNT"]

POOLING_VARIANTS = ("trainable", "gpool", "fixed")

# Trainable parameter count of build_default_unet (verified by test): all
# conv kernels A and weights W plus one pool/unpool matrix per level.
DEFAULT_UNET_PARAM_COUNT = 434_755


@dataclass(frozen=True)
class UNetConfig:
    node_schedule: tuple = (29, 15, 8, 4)
    feature_schedule: tuple = (64, 128, 256, 512)
    in_features: int = 2
    out_features: int = 3
    pooling: str = "trainable"
    adjacency_init: str = "identity"
    input_center: float = 320.0
    input_scale: float = 160.0
    output_scale: float = 250.0

    def __post_init__(self):
        ns = tuple(int(n) for n in self.node_schedule)
        fs = tuple(int(f) for f in self.feature_schedule)
        object.__setattr__(self, "node_schedule", ns)
        object.__setattr__(self, "feature_schedule", fs)
        if len(ns) < 2 or ns[0] != NUM_NODES:
            raise DomainError(f"node schedule must start at {NUM_NODES}, got {ns}")
        if any(b >= a for a, b in zip(ns, ns[1:])):
            raise DomainError(f"node schedule must be strictly decreasing, got {ns}")
        if len(fs) != len(ns):
            raise DomainError("feature schedule must have one width per node level")
        if any(f < 1 for f in fs):
            raise DomainError("feature widths must be positive")
        if self.pooling not in POOLING_VARIANTS:
            raise DomainError(f"pooling must be one of {POOLING_VARIANTS}, got {self.pooling!r}")
        if self.adjacency_init not in ADJACENCY_INIT_VARIANTS:
            raise DomainError(f"adjacency_init must be one of {ADJACENCY_INIT_VARIANTS}, "
                              f"got {self.adjacency_init!r}")
        if self.in_features < 1 or self.out_features < 1:
            raise DomainError("feature counts must be positive")
        if not (self.input_scale > 0 and self.output_scale > 0):
            raise DomainError("scales must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["node_schedule"] = list(self.node_schedule)
        d["feature_schedule"] = list(self.feature_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        return cls(**{k: (tuple(v) if k.endswith("_schedule") else v) for k, v in d.items()})


class GraphUNetModel:
    """Encoder/decoder graph network over a fixed node schedule."""

    def __init__(self, config: UNetConfig = UNetConfig(), seed: int = 0):
        self.config = config
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        ns, fs = config.node_schedule, config.feature_schedule
        levels = len(ns) - 1   # number of pool/unpool pairs

        def adj(n):
            return initial_adjacency(config.adjacency_init, n, rng)

        self.enc_convs = []
        self.pools = []
        for i in range(levels):
            # +1: a constant bias column rides along with the input features
            in_w = config.in_features + 1 if i == 0 else fs[i - 1]
            self.enc_convs.append(AdaptiveGraphConvLayer(adj(ns[i]), in_w, fs[i],
                                                         "relu", rng))
            self.pools.append(self._make_pool(ns[i], ns[i + 1], fs[i], rng))
        self.bottleneck = AdaptiveGraphConvLayer(adj(ns[-1]), fs[-2], fs[-1], "relu", rng)
        self.unpools = []
        self.dec_convs = []
        for i in reversed(range(levels)):
            self.unpools.append(self._make_unpool(ns[i + 1], ns[i], rng))
            self.dec_convs.append(AdaptiveGraphConvLayer(adj(ns[i]), fs[i] + fs[i + 1],
                                                         fs[i], "relu", rng))
        self.final = AdaptiveGraphConvLayer(adj(ns[0]), fs[0], config.out_features,
                                            "linear", rng)
        if config.adjacency_init == "zeros":
            # the zero-kernel study zeroes every trainable matrix, not just A;
            # gPool projections stay put (a zero projection has no score scale)
            for name, p in self.parameters().items():
                if not name.endswith(".p"):
                    p.data[...] = 0.0

    def _make_pool(self, n_in, n_out, width, rng):
        if self.config.pooling == "trainable":
            return GraphPoolLayer(n_in, n_out, rng)
        if self.config.pooling == "gpool":
            return GPoolLayer(n_in, n_out, width, rng)
        return FixedPoolLayer(FIXED_POOL_GROUPS[(n_in, n_out)], n_in)

    def _make_unpool(self, n_in, n_out, rng):
        if self.config.pooling == "trainable":
            return GraphUnpoolLayer(n_in, n_out, rng)
        if self.config.pooling == "gpool":
            return None   # decoder scatters rows back to the recorded indices
        return FixedUnpoolLayer(FIXED_POOL_GROUPS[(n_out, n_in)], n_out)

    def forward(self, coords2d) -> Tensor:
        return unet_forward(self, coords2d)

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.enc_convs):
            for k, v in layer.parameters().items():
                out[f"enc{i}.{k}"] = v
            for k, v in self.pools[i].parameters().items():
                out[f"pool{i}.{k}"] = v
        for k, v in self.bottleneck.parameters().items():
            out[f"bottleneck.{k}"] = v
        levels = len(self.config.node_schedule) - 1
        for j, (up, conv) in enumerate(zip(self.unpools, self.dec_convs)):
            lvl = levels - 1 - j
            if up is not None:
                for k, v in up.parameters().items():
                    out[f"unpool{lvl}.{k}"] = v
            for k, v in conv.parameters().items():
                out[f"dec{lvl}.{k}"] = v
        for k, v in self.final.parameters().items():
            out[f"final.{k}"] = v
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def config_dict(self) -> dict:
        return {"kind": "unet", "seed": self.seed, "unet": self.config.to_dict()}

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


def unet_forward(model: GraphUNetModel, coords2d) -> Tensor:
    """Lift 2D pixel keypoints (29x2 or batched Bx29x2) to 3D millimeters."""
    x = coords2d if isinstance(coords2d, Tensor) else Tensor(coords2d)
    cfg = model.config
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3 or x.shape[1:] != (cfg.node_schedule[0], cfg.in_features):
        raise DimensionError(
            f"expected input shape ({cfg.node_schedule[0]}, {cfg.in_features}) "
            f"or batched, got {coords2d.shape if hasattr(coords2d, 'shape') else '?'}"
        )
    ones = Tensor(np.ones((x.shape[0], cfg.node_schedule[0], 1)))
    h = concat_features([(x - cfg.input_center) * (1.0 / cfg.input_scale), ones])
    skips = []
    pool_indices = []
    levels = len(cfg.node_schedule) - 1
    for i in range(levels):
        h = model.enc_convs[i].forward(h)
        skips.append(h)
        if cfg.pooling == "gpool":
            h, idx = model.pools[i].forward(h)
            pool_indices.append(idx)
        else:
            h = model.pools[i].forward(h)
    h = model.bottleneck.forward(h)
    for j in range(levels):
        lvl = levels - 1 - j
        if cfg.pooling == "gpool":
            h = scatter_rows_batched(h, pool_indices[lvl], cfg.node_schedule[lvl])
        else:
            h = model.unpools[j].forward(h)
        h = concat_features([skips[lvl], h])
        h = model.dec_convs[j].forward(h)
    y = model.final.forward(h) * cfg.output_scale
    if squeeze:
        y = y.reshape(cfg.node_schedule[0], cfg.out_features)
    return y


def build_default_unet(seed: int = 0, pooling: str = "trainable",
                       adjacency_init: str = "identity") -> GraphUNetModel:
    """The default architecture: nodes 29-15-8-4, widths 64-128-256-512."""
    return GraphUNetModel(UNetConfig(pooling=pooling, adjacency_init=adjacency_init),
                          seed=seed)
