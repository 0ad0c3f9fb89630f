"""Training loops: the three-stage schedule for the full cascade, a
standalone stage-2 trainer for U-Net-style models, presets, the CSV
training log, and evaluation helpers.

Stages follow the staged recipe: (1) the stub encoder and 2D refinement
train on the 2D losses; (2) the graph U-Net alone trains on noisy
ground-truth-2D -> 3D pairs; (3) everything fine-tunes end to end on the
weighted three-term loss.  Learning rates step-decay per stage; the
"paper" preset uses the literal decay periods (0.9 every 100 steps for
2D stages, 0.1 every 4000 steps for the U-Net stage) while shorter
presets compress the periods proportionally to the epoch budget so the
decay trajectory keeps its shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, TrainingDiverged
from .optim import Adam, SgdSchedule, sgd_step
from .pipeline import HopeLossWeights, HopePipeline, hope_loss_terms
from .synth import SampleRecord, add_noise, records_to_arrays
from .tensor import mse

__all__ = [
    "TrainConfig", "TrainingLog", "train", "train_unet_stage2",
    "stage_schedule", "eval_unet_mean_error", "eval_pipeline_errors",
    "unet_predictions", "pipeline_predictions", "PRESET_EPOCHS",
]

PRESET_EPOCHS = {"desk": (30, 200, 30), "paper": (5000, 10000, 5000)}

# per-stage (initial lr, decay factor, decay period in 'paper'-preset steps)
STAGE_LR = ((0.001, 0.9, 100), (0.001, 0.1, 4000), (0.001, 0.9, 100))

LOG_COLUMNS = ("step", "stage", "lr", "loss_init2d", "loss_2d", "loss_3d", "total")


@dataclass(frozen=True)
class TrainConfig:
    stage_epochs: tuple = PRESET_EPOCHS["desk"]
    preset: str = "desk"
    batch_size: int = 32
    optimizer: str = "adam"     # 'adam' | 'sgd'; mm^2-scale losses blow up plain
                                # SGD at the stock 0.001 rate, so adam is the default
    noise_sigma: float = 10.0
    weights: HopeLossWeights = field(default_factory=HopeLossWeights)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stage_epochs", tuple(int(e) for e in self.stage_epochs))
        if len(self.stage_epochs) != 3 or any(e < 0 for e in self.stage_epochs):
            raise DomainError(f"stage_epochs must be three non-negative ints, "
                              f"got {self.stage_epochs}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be positive, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be non-negative")

    @classmethod
    def from_preset(cls, preset: str, **overrides) -> "TrainConfig":
        if preset not in PRESET_EPOCHS:
            raise DomainError(f"unknown preset {preset!r}; expected one of "
                              f"{sorted(PRESET_EPOCHS)}")
        cfg = cls(stage_epochs=PRESET_EPOCHS[preset], preset=preset)
        return replace(cfg, **overrides) if overrides else cfg


def stage_schedule(stage: int, epochs: int, steps_per_epoch: int,
                   literal_steps: bool = False) -> SgdSchedule:
    """The lr schedule for one stage (1-based).

    literal_steps uses the decay period as raw optimizer steps, which
    is what the 'paper' preset wants; otherwise the period is rescaled
    by epochs/full_epochs and converted to steps, which preserves the
    end-of-run decay depth.
    """
    if stage not in (1, 2, 3):
        raise DomainError(f"stage must be 1, 2 or 3, got {stage}")
    lr0, factor, full_steps = STAGE_LR[stage - 1]
    if literal_steps:
        return SgdSchedule(lr0, factor, full_steps)
    full_epochs = PRESET_EPOCHS["paper"][stage - 1]
    period_epochs = full_steps * epochs / full_epochs
    decay_every = max(1, round(period_epochs * steps_per_epoch))
    return SgdSchedule(lr0, factor, decay_every)


class TrainingLog:
    """Per-step rows; stages leave their inapplicable loss columns blank."""

    def __init__(self):
        self.rows: list[dict] = []

    def add(self, step: int, stage: int, lr: float, loss_init2d=None,
            loss_2d=None, loss_3d=None, total=None) -> None:
        self.rows.append({
            "step": step, "stage": stage, "lr": lr,
            "loss_init2d": loss_init2d, "loss_2d": loss_2d,
            "loss_3d": loss_3d, "total": total,
        })

    def stage_rows(self, stage: int) -> list[dict]:
        return [r for r in self.rows if r["stage"] == stage]

    def totals(self, stage: int | None = None) -> np.ndarray:
        rows = self.rows if stage is None else self.stage_rows(stage)
        return np.array([r["total"] for r in rows], dtype=np.float64)

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(",".join(LOG_COLUMNS) + "\n")
            for r in self.rows:
                cells = []
                for c in LOG_COLUMNS:
                    v = r[c]
                    cells.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
                f.write(",".join(cells) + "\n")


class _SgdRunner:
    """Adapter giving plain SGD the same step(lr) surface as Adam."""

    def __init__(self, params):
        self.params = dict(params)

    def step(self, lr: float) -> None:
        sgd_step(self.params, SgdSchedule(lr), 0)


def _make_optimizer(kind: str, params) -> object:
    if kind == "adam":
        return Adam(params)
    if kind == "sgd":
        return _SgdRunner(params)
    raise DomainError(f"unknown optimizer {kind!r}")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def _check_finite(value: float, stage: int, step: int, log: TrainingLog) -> None:
    if not math.isfinite(value):
        err = TrainingDiverged(
            f"loss became non-finite at stage {stage}, step {step}; "
            "parameters keep their last finite values"
        )
        err.log = log
        raise err


def train_unet_stage2(model, records: list[SampleRecord], epochs: int,
                      batch_size: int = 32, noise_sigma: float = 10.0,
                      optimizer: str = "adam", seed: int = 0,
                      schedule: SgdSchedule | None = None,
                      log: TrainingLog | None = None, start_step: int = 0,
                      stage: int = 2, literal_steps: bool = False,
                      on_step=None) -> TrainingLog:
    """Train a 2D->3D node model on (noisy gt2d -> gt3d) pairs.

    Works for any model exposing forward(x)->Tensor over (B, 29, 2)
    inputs and parameters().  on_step(step, params) runs right after each
    backward pass, before the optimizer update.
    """
    if not records:
        raise DomainError("empty dataset")
    if log is None:
        log = TrainingLog()
    gt2d, gt3d = records_to_arrays(records)
    n = gt2d.shape[0]
    steps_per_epoch = math.ceil(n / batch_size)
    if schedule is None:
        schedule = stage_schedule(2, epochs, steps_per_epoch, literal_steps)
    params = model.parameters()
    opt = _make_optimizer(optimizer, params)
    shuffle_rng = np.random.default_rng([seed, 1])
    noise_rng = np.random.default_rng([seed, 2])
    t = 0
    step = start_step
    for _ in range(epochs):
        for idx in _batches(n, batch_size, shuffle_rng):
            inputs = add_noise(gt2d[idx], noise_sigma, noise_rng)
            loss = mse(model.forward(inputs), gt3d[idx])
            value = loss.item()
            step += 1
            _check_finite(value, stage, step, log)
            loss.backward()
            if on_step is not None:
                on_step(step, params)
            lr = schedule.lr_at(t)
            opt.step(lr)
            t += 1
            log.add(step, stage, lr, loss_3d=value, total=value)
    return log


def train(pipeline: HopePipeline, records: list[SampleRecord],
          config: TrainConfig = TrainConfig(), log_path: str | None = None) -> TrainingLog:
    """Run the three-stage schedule on the full cascade.

    Raises TrainingDiverged (with the partial log attached) on a
    non-finite loss; the check runs before the optimizer update, so
    parameters always hold the last finite state.
    """
    if not records:
        raise DomainError("empty dataset")
    gt2d, gt3d = records_to_arrays(records)
    n = gt2d.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)
    literal = config.preset == "paper"
    log = TrainingLog()
    w = config.weights
    step = 0

    # stage 1: stub + 2D refinement on the 2D losses
    e1 = config.stage_epochs[0]
    if e1 > 0:
        params = pipeline.stub_refine_parameters()
        opt = _make_optimizer(config.optimizer, params)
        sched = stage_schedule(1, e1, steps_per_epoch, literal)
        rng = np.random.default_rng([config.seed, 11])
        t = 0
        for _ in range(e1):
            for idx in _batches(n, config.batch_size, rng):
                features, init2d = pipeline.stub.encode_batch(gt2d[idx])
                refined = pipeline.refine.forward(features, init2d)
                l_init = mse(init2d, gt2d[idx])
                l_2d = mse(refined, gt2d[idx])
                loss = l_init * w.alpha + l_2d * w.beta
                value = loss.item()
                step += 1
                _check_finite(value, 1, step, log)
                loss.backward()
                lr = sched.lr_at(t)
                opt.step(lr)
                t += 1
                log.add(step, 1, lr, loss_init2d=l_init.item(), loss_2d=l_2d.item(),
                        total=value)

    # stage 2: U-Net alone on noisy gt2d -> gt3d
    e2 = config.stage_epochs[1]
    if e2 > 0:
        train_unet_stage2(pipeline.unet, records, e2, config.batch_size,
                          config.noise_sigma, config.optimizer,
                          seed=config.seed, log=log, start_step=step,
                          literal_steps=literal)
        step = log.rows[-1]["step"] if log.rows else step

    # stage 3: end to end on the weighted three-term loss
    e3 = config.stage_epochs[2]
    if e3 > 0:
        params = pipeline.parameters()
        opt = _make_optimizer(config.optimizer, params)
        sched = stage_schedule(3, e3, steps_per_epoch, literal)
        rng = np.random.default_rng([config.seed, 33])
        t = 0
        for _ in range(e3):
            for idx in _batches(n, config.batch_size, rng):
                init2d, refined, pred3d = pipeline.forward_batch(gt2d[idx])
                total, l_init, l_2d, l_3d = hope_loss_terms(
                    init2d, refined, pred3d, gt2d[idx], gt3d[idx], w)
                value = total.item()
                step += 1
                _check_finite(value, 3, step, log)
                total.backward()
                lr = sched.lr_at(t)
                opt.step(lr)
                t += 1
                log.add(step, 3, lr, loss_init2d=l_init.item(), loss_2d=l_2d.item(),
                        loss_3d=l_3d.item(), total=value)

    if log_path is not None:
        log.write_csv(log_path)
    return log


# ---- evaluation helpers ----------------------------------------------------


def unet_predictions(model, inputs2d: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Forward a (S, 29, 2) array through a 2D->3D model without autodiff
    bookkeeping beyond one chunk at a time."""
    outs = []
    for lo in range(0, inputs2d.shape[0], chunk):
        outs.append(model.forward(inputs2d[lo:lo + chunk]).data)
    return np.concatenate(outs, axis=0)


def mean_keypoint_error(preds: np.ndarray, gts: np.ndarray) -> float:
    """Mean over samples of the mean per-keypoint Euclidean distance."""
    if preds.shape != gts.shape:
        raise DomainError(f"prediction shape {preds.shape} != ground truth {gts.shape}")
    return float(np.linalg.norm(preds - gts, axis=-1).mean())


def eval_unet_mean_error(model, records: list[SampleRecord], noise_sigma: float = 0.0,
                         seed: int = 0, chunk: int = 128) -> float:
    """Mean 3D keypoint error (mm) of a 2D->3D model on noisy 2D inputs."""
    gt2d, gt3d = records_to_arrays(records)
    inputs = add_noise(gt2d, noise_sigma, np.random.default_rng([seed, 3]))
    return mean_keypoint_error(unet_predictions(model, inputs, chunk), gt3d)


def pipeline_predictions(pipeline: HopePipeline, records: list[SampleRecord],
                         chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Batched full-cascade inference: refined 2D (S, 29, 2) and 3D (S, 29, 3)."""
    gt2d, _ = records_to_arrays(records)
    refined_out, pred_out = [], []
    for lo in range(0, gt2d.shape[0], chunk):
        _, refined, pred3d = pipeline.forward_batch(gt2d[lo:lo + chunk])
        refined_out.append(refined.data)
        pred_out.append(pred3d.data)
    return np.concatenate(refined_out, axis=0), np.concatenate(pred_out, axis=0)


def eval_pipeline_errors(pipeline: HopePipeline, records: list[SampleRecord],
                         chunk: int = 64) -> tuple[float, float]:
    """(mean 2D refined error px, mean 3D error mm) over the records."""
    gt2d, gt3d = records_to_arrays(records)
    refined, pred3d = pipeline_predictions(pipeline, records, chunk)
    return mean_keypoint_error(refined, gt2d), mean_keypoint_error(pred3d, gt3d)
