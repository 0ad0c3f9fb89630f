"""Ablation harness: trains a family of model variants under identical
budgets and seeds and tabulates mean 3D error per variant.

Three suites:

* architecture    -- dense baseline / plain GCN / graph U-Net
* pooling         -- trainable / fixed grouping / gpool inside the U-Net
* adjacency_init  -- zeros / random / ones / skeleton / identity kernels

Each (variant, seed) run trains the lifting network on noiseless
gt2d -> gt3d pairs and reports mean 3D keypoint error on a held-out
slice.  Divergent runs are recorded with status 'diverged'; runs whose
error never moves off its initial value are flagged 'frozen'.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adjacency import ADJACENCY_INIT_VARIANTS
from .errors import DomainError, TrainingDiverged
from .models import FcBaselineModel, PlainGcnModel
from .synth import SampleRecord
from .training import eval_unet_mean_error, train_unet_stage2
from .unet import POOLING_VARIANTS, UNetConfig, GraphUNetModel

__all__ = [
    "AblationConfig", "AblationRun", "SUITES", "run_ablation",
    "summarize", "write_runs_csv", "write_summary_csv",
]

SUITES = {
    "architecture": ("fc", "gcn", "unet"),
    "pooling": tuple(POOLING_VARIANTS),
    "adjacency_init": tuple(ADJACENCY_INIT_VARIANTS),
}

DEFAULT_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class AblationConfig:
    """Shared training budget for every variant in a suite.

    The default widths are a quarter of the full model so a whole suite
    fits in a desk-scale run; every variant sees the same budget, so the
    comparison stays fair.
    """

    epochs: int = 30
    batch_size: int = 64
    noise_sigma: float = 0.0
    optimizer: str = "adam"
    unet_widths: tuple = (16, 32, 64, 128)
    eval_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError("epochs must be positive")
        if not 0.0 < self.eval_fraction < 1.0:
            raise DomainError("eval_fraction must be in (0, 1)")


@dataclass(frozen=True)
class AblationRun:
    suite: str
    variant: str
    seed: int
    status: str              # 'ok' | 'diverged' | 'frozen'
    initial_error_mm: float
    mean_error_mm: float


def _build_model(suite: str, variant: str, seed: int, config: AblationConfig):
    if suite == "architecture":
        if variant == "fc":
            return FcBaselineModel(seed=seed)
        if variant == "gcn":
            return PlainGcnModel(seed=seed)
        if variant == "unet":
            return GraphUNetModel(UNetConfig(feature_schedule=config.unet_widths), seed=seed)
        raise DomainError(f"unknown architecture variant {variant!r}")
    if suite == "pooling":
        cfg = UNetConfig(feature_schedule=config.unet_widths, pooling=variant)
        return GraphUNetModel(cfg, seed=seed)
    if suite == "adjacency_init":
        cfg = UNetConfig(feature_schedule=config.unet_widths, adjacency_init=variant)
        return GraphUNetModel(cfg, seed=seed)
    raise DomainError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)}")


def _split(records: list[SampleRecord], eval_fraction: float):
    n_eval = max(1, int(round(len(records) * eval_fraction)))
    if n_eval >= len(records):
        raise DomainError("dataset too small to hold out an eval slice")
    return records[:-n_eval], records[-n_eval:]


def run_one(suite: str, variant: str, seed: int, records: list[SampleRecord],
            config: AblationConfig = AblationConfig()) -> AblationRun:
    """Train and evaluate a single (variant, seed) cell."""
    train_recs, eval_recs = _split(records, config.eval_fraction)
    model = _build_model(suite, variant, seed, config)
    initial = eval_unet_mean_error(model, eval_recs, config.noise_sigma, seed)
    status = "ok"
    try:
        train_unet_stage2(model, train_recs, config.epochs, config.batch_size,
                          config.noise_sigma, config.optimizer, seed=seed)
        final = eval_unet_mean_error(model, eval_recs, config.noise_sigma, seed)
        if not math.isfinite(final):
            status, final = "diverged", math.inf
        elif abs(final - initial) < 1e-9 * max(1.0, abs(initial)):
            status = "frozen"
    except TrainingDiverged:
        status, final = "diverged", math.inf
    return AblationRun(suite, variant, seed, status, initial, final)


def _run_one_star(args) -> AblationRun:
    return run_one(*args)


def run_ablation(suite: str, records: list[SampleRecord],
                 seeds=DEFAULT_SEEDS, config: AblationConfig = AblationConfig(),
                 jobs: int = 1) -> list[AblationRun]:
    """All (variant, seed) runs for one suite, deterministic per cell.

    jobs > 1 trains the independent cells in separate processes.
    """
    if suite not in SUITES:
        raise DomainError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)}")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise DomainError("need at least one seed")
    tasks = [(suite, variant, seed, records, config)
             for variant in SUITES[suite] for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one_star, tasks))
    return [_run_one_star(t) for t in tasks]


def summarize(runs: list[AblationRun]) -> list[dict]:
    """Seed-averaged table: one row per variant, in suite order.

    Divergent seeds are excluded from the mean; a variant with no finite
    seed reports inf. std_over_seeds is the population std.
    """
    by_variant: dict[str, list[AblationRun]] = {}
    for r in runs:
        by_variant.setdefault(r.variant, []).append(r)
    table = []
    for variant, cells in by_variant.items():
        finite = [c.mean_error_mm for c in cells if math.isfinite(c.mean_error_mm)]
        if finite:
            mean = float(np.mean(finite))
            std = float(np.std(finite))
        else:
            mean, std = math.inf, math.nan
        table.append({"variant": variant, "mean_error_mm": mean,
                      "std_over_seeds": std})
    return table


def write_summary_csv(runs: list[AblationRun], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["variant", "mean_error_mm", "std_over_seeds"])
        w.writeheader()
        for row in summarize(runs):
            w.writerow({k: repr(v) if isinstance(v, float) else v
                        for k, v in row.items()})


def write_runs_csv(runs: list[AblationRun], path) -> None:
    cols = ["suite", "variant", "seed", "status", "initial_error_mm", "mean_error_mm"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in runs:
            w.writerow([r.suite, r.variant, r.seed, r.status,
                        repr(r.initial_error_mm), repr(r.mean_error_mm)])
