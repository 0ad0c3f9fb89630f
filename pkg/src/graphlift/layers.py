"""Graph layers: adaptive graph convolution, trainable pooling and
unpooling over the node axis, plus the two ablation baselines (gPool
top-k gating and fixed group-mean pooling).

All layers accept node-feature tensors shaped (n, k) or batched
(B, n, k); the node axis is always second to last.  The pooling and
unpooling maps act on the transpose of the feature matrix, i.e. they are
plain matrix products P @ X / U @ X along the node axis.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, DomainError
from .tensor import Tensor, matmul, relu, sigmoid

__all__ = [
    "AdaptiveGraphConvLayer", "GraphPoolLayer", "GraphUnpoolLayer",
    "agc_forward", "pool_forward", "unpool_forward",
    "gpool_forward", "fixed_pool_forward",
    "GPoolLayer", "FixedPoolLayer", "FixedUnpoolLayer",
    "partition_matrix", "uniform_init",
]


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Uniform in +-1/sqrt(fan_in)."""
    if fan_in < 1:
        raise DomainError(f"fan_in must be positive, got {fan_in}")
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _check_node_features(x: Tensor, n: int, what: str) -> None:
    if x.ndim not in (2, 3) or x.shape[-2] != n:
        raise DimensionError(f"{what} expects {n} node rows, got shape {x.shape}")


class AdaptiveGraphConvLayer:
    """Y = act(A @ X @ W) with both the kernel A and the weights W trainable.

    A is used exactly as stored (it may go negative during training);
    normalization is an initialization-time concern only.
    """

    def __init__(self, adjacency_init: np.ndarray, in_features: int,
                 out_features: int, activation: str = "relu",
                 rng: np.random.Generator | None = None,
                 weight_init: np.ndarray | None = None):
        a = np.asarray(adjacency_init, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency init must be square, got {a.shape}")
        if activation not in ("relu", "linear"):
            raise DomainError(f"activation must be 'relu' or 'linear', got {activation!r}")
        if weight_init is None:
            if rng is None:
                raise DomainError("need an rng or an explicit weight_init")
            weight_init = uniform_init(rng, (in_features, out_features), in_features)
        w = np.asarray(weight_init, dtype=np.float64)
        if w.shape != (in_features, out_features):
            raise DimensionError(f"weight init shape {w.shape} != ({in_features}, {out_features})")
        self.A = Tensor(a.copy(), requires_grad=True, name="A")
        self.W = Tensor(w.copy(), requires_grad=True, name="W")
        self.activation = activation
        self.n = a.shape[0]
        self.in_features = in_features
        self.out_features = out_features

    def forward(self, x: Tensor) -> Tensor:
        return agc_forward(self, x)

    def parameters(self) -> dict[str, Tensor]:
        return {"A": self.A, "W": self.W}


def agc_forward(layer: AdaptiveGraphConvLayer, x: Tensor) -> Tensor:
    _check_node_features(x, layer.n, "graph conv")
    if x.shape[-1] != layer.in_features:
        raise DimensionError(
            f"graph conv expects {layer.in_features} input features, got {x.shape[-1]}"
        )
    y = matmul(layer.A, matmul(x, layer.W))
    if layer.activation == "relu":
        y = relu(y)
    return y


class GraphPoolLayer:
    """Trainable node-count reduction X' = P @ X, n_out < n_in."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 matrix_init: np.ndarray | None = None):
        if not n_out < n_in:
            raise DimensionError(f"pooling must shrink the node count, got {n_in} -> {n_out}")
        if matrix_init is None:
            if rng is None:
                raise DomainError("need an rng or an explicit matrix_init")
            matrix_init = uniform_init(rng, (n_out, n_in), n_in)
        m = np.asarray(matrix_init, dtype=np.float64)
        if m.shape != (n_out, n_in):
            raise DimensionError(f"pool matrix shape {m.shape} != ({n_out}, {n_in})")
        self.P = Tensor(m.copy(), requires_grad=True, name="P")
        self.n_in = n_in
        self.n_out = n_out

    def forward(self, x: Tensor) -> Tensor:
        return pool_forward(self, x)

    def parameters(self) -> dict[str, Tensor]:
        return {"P": self.P}


def pool_forward(layer: GraphPoolLayer, x: Tensor) -> Tensor:
    _check_node_features(x, layer.n_in, "pooling")
    return matmul(layer.P, x)


class GraphUnpoolLayer:
    """Trainable node-count expansion X' = U @ X, n_out > n_in."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 matrix_init: np.ndarray | None = None):
        if not n_out > n_in:
            raise DimensionError(f"unpooling must grow the node count, got {n_in} -> {n_out}")
        if matrix_init is None:
            if rng is None:
                raise DomainError("need an rng or an explicit matrix_init")
            matrix_init = uniform_init(rng, (n_out, n_in), n_in)
        m = np.asarray(matrix_init, dtype=np.float64)
        if m.shape != (n_out, n_in):
            raise DimensionError(f"unpool matrix shape {m.shape} != ({n_out}, {n_in})")
        self.U = Tensor(m.copy(), requires_grad=True, name="U")
        self.n_in = n_in
        self.n_out = n_out

    def forward(self, x: Tensor) -> Tensor:
        return unpool_forward(self, x)

    def parameters(self) -> dict[str, Tensor]:
        return {"U": self.U}


def unpool_forward(layer: GraphUnpoolLayer, x: Tensor) -> Tensor:
    _check_node_features(x, layer.n_in, "unpooling")
    return matmul(layer.U, x)


# ---- gPool baseline ------------------------------------------------------


def _keep_count(n: int, ratio: float) -> int:
    if not (0 < ratio < 1):
        raise DomainError(f"pool ratio must be in (0, 1), got {ratio}")
    # tiny slack so ratios written as j/n survive the float round trip
    return int(math.ceil(ratio * n - 1e-9))


def _topk_desc(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on negated scores: equal scores keep original order,
    # so ties resolve to the lowest index first
    return np.argsort(-scores, kind="stable")[:k]


def gpool_forward(x: Tensor, projection: Tensor, ratio: float) -> tuple[Tensor, np.ndarray]:
    """Top-k gated pooling: scores y = X p / |p|, keep the ceil(ratio*n)
    best-scoring nodes, scale each kept row by sigmoid(score).

    Returns the pooled rows (in score-descending order) and the selected
    node indices.  Single-sample layout only; the batched variant lives
    in GPoolLayer.
    """
    if x.ndim != 2:
        raise DimensionError(f"gpool_forward expects (n, k) input, got shape {x.shape}")
    p = projection if isinstance(projection, Tensor) else Tensor(projection)
    if p.ndim == 1:
        p = p.reshape(p.shape[0], 1)
    if p.shape != (x.shape[-1], 1):
        raise DimensionError(
            f"projection length {p.shape} does not match feature width {x.shape[-1]}"
        )
    k = _keep_count(x.shape[0], ratio)
    norm = (p * p).sum().sqrt()
    scores = matmul(x, p) / norm                      # (n, 1)
    idx = _topk_desc(scores.data[:, 0], k)
    from .tensor import gather_nodes
    gate = sigmoid(gather_nodes(scores, idx))         # (k, 1)
    pooled = gather_nodes(x, idx) * gate
    return pooled, idx


class GPoolLayer:
    """Batched gPool with a trainable projection vector; remembers the
    selected indices so the decoder can scatter features back."""

    def __init__(self, n_in: int, n_out: int, features: int,
                 rng: np.random.Generator | None = None,
                 projection_init: np.ndarray | None = None):
        if not 0 < n_out < n_in:
            raise DimensionError(f"gpool must shrink the node count, got {n_in} -> {n_out}")
        if projection_init is None:
            if rng is None:
                raise DomainError("need an rng or an explicit projection_init")
            projection_init = uniform_init(rng, (features, 1), features)
        v = np.asarray(projection_init, dtype=np.float64).reshape(features, 1)
        self.p = Tensor(v.copy(), requires_grad=True, name="p")
        self.n_in = n_in
        self.n_out = n_out
        self.features = features

    def forward(self, x: Tensor) -> tuple[Tensor, np.ndarray]:
        _check_node_features(x, self.n_in, "gpool")
        if x.shape[-1] != self.features:
            raise DimensionError(
                f"gpool expects {self.features} features, got {x.shape[-1]}"
            )
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        norm = (self.p * self.p).sum().sqrt()
        scores = matmul(x, self.p) / norm                        # (B, n, 1)
        flat = scores.data[..., 0]                               # (B, n)
        order = np.argsort(-flat, axis=-1, kind="stable")
        idx = order[:, :self.n_out]                              # (B, k)
        gate = sigmoid(_gather_rows_batched(scores, idx))
        pooled = _gather_rows_batched(x, idx) * gate
        if squeeze:
            pooled = pooled.reshape(self.n_out, self.features)
            idx = idx[0]
        return pooled, idx

    def parameters(self) -> dict[str, Tensor]:
        return {"p": self.p}


def _gather_rows_batched(x: Tensor, idx: np.ndarray) -> Tensor:
    """out[b, i, :] = x[b, idx[b, i], :] with gradient scatter."""
    idx3 = idx[:, :, None]
    data = np.take_along_axis(x.data, idx3, axis=1)
    out = Tensor._from_op(data, (x,), None)
    if out.requires_grad:
        def backward(g):
            buf = np.zeros_like(x.data)
            np.put_along_axis(buf, np.broadcast_to(idx3, g.shape), g, axis=1)
            x.grad += buf
        out._backward = backward
    return out


def scatter_rows_batched(x: Tensor, idx: np.ndarray, num_nodes: int) -> Tensor:
    """Inverse of the batched gather: place rows at idx, zeros elsewhere."""
    if x.ndim != 3:
        raise DimensionError(f"scatter expects batched (B, k, f) input, got {x.shape}")
    idx3 = idx[:, :, None]
    shape = (x.shape[0], num_nodes, x.shape[2])
    buf = np.zeros(shape, dtype=np.float64)
    np.put_along_axis(buf, np.broadcast_to(idx3, x.data.shape), x.data, axis=1)
    out = Tensor._from_op(buf, (x,), None)
    if out.requires_grad:
        def backward(g):
            x.grad += np.take_along_axis(g, idx3, axis=1)
        out._backward = backward
    return out


# ---- fixed group-mean baseline -------------------------------------------


def _validate_partition(grouping, n_in: int) -> list[list[int]]:
    groups = [list(g) for g in grouping]
    seen: set[int] = set()
    for g in groups:
        if not g:
            raise DomainError("empty group in partition")
        for i in g:
            if not (0 <= i < n_in):
                raise DomainError(f"group index {i} out of range for {n_in} nodes")
            if i in seen:
                raise DomainError(f"node {i} appears in more than one group")
            seen.add(i)
    if len(seen) != n_in:
        raise DomainError(f"partition covers {len(seen)} of {n_in} nodes")
    return groups


def partition_matrix(grouping, n_in: int, mode: str = "mean") -> np.ndarray:
    """Constant pooling matrix for a node partition.

    mode 'mean': (n_groups x n_in) row per group with 1/len(group) weights.
    mode 'broadcast': its transpose pattern with unit weights, the matching
    unpooling map (each member copies its group's row).
    """
    groups = _validate_partition(grouping, n_in)
    if mode == "mean":
        m = np.zeros((len(groups), n_in))
        for gi, g in enumerate(groups):
            m[gi, g] = 1.0 / len(g)
        return m
    if mode == "broadcast":
        m = np.zeros((n_in, len(groups)))
        for gi, g in enumerate(groups):
            m[g, gi] = 1.0
        return m
    raise DomainError(f"unknown partition matrix mode {mode!r}")


def fixed_pool_forward(x: Tensor, grouping) -> Tensor:
    """Each output node is the mean of its group's feature rows."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    m = partition_matrix(grouping, x.shape[-2], "mean")
    return matmul(Tensor(m), x)


class FixedPoolLayer:
    """Constant group-mean pooling (no trainable state)."""

    def __init__(self, grouping, n_in: int):
        self.matrix = Tensor(partition_matrix(grouping, n_in, "mean"))
        self.n_in = n_in
        self.n_out = self.matrix.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        _check_node_features(x, self.n_in, "fixed pooling")
        return matmul(self.matrix, x)

    def parameters(self) -> dict[str, Tensor]:
        return {}


class FixedUnpoolLayer:
    """Constant unpooling for a partition: every member node copies its
    group's pooled row."""

    def __init__(self, grouping, n_out: int):
        self.matrix = Tensor(partition_matrix(grouping, n_out, "broadcast"))
        self.n_in = self.matrix.shape[1]
        self.n_out = n_out

    def forward(self, x: Tensor) -> Tensor:
        _check_node_features(x, self.n_in, "fixed unpooling")
        return matmul(self.matrix, x)

    def parameters(self) -> dict[str, Tensor]:
        return {}
