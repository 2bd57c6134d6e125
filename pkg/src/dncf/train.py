"""Training orchestration: run configuration, the epoch loop with
validation tracking and early stopping, checkpointing, the
pretrain-and-fuse workflow and hyperparameter sweeps.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .data import (InteractionStore, TestInstance, holdout_validation,
                   load_dataset, sample_candidate_negatives, sample_epoch)
from .errors import ConfigError, DncfError
from .evaluate import DEFAULT_K_MAX, EvalReport, evaluate
from .models import Model, ModelSpec, build_model, fuse, load_params
from .nn import bce_grad, bce_loss
from .optim import make_optimizer
from .tensor import SeededRng

log = logging.getLogger(__name__)

# spawn keys for the independent random streams of one run
_INIT_STREAM = 1
_EPOCH_STREAM = 2
_VAL_STREAM = 3

SWEEP_AXES = ("factors", "neg_ratio", "layers", "combiner")
SWEEP_HEADER = ("axis_value", "hr@10", "ndcg@10", "epochs", "seconds")


@dataclass
class RunConfig:
    """One training run; the defaults are the benchmark protocol values
    (batch 256, learning rate 0.001, L2 1e-6, 4 negatives per positive)."""

    train_path: str
    test_path: str
    negatives_path: str
    model: str = "dgmf"
    factors: int = 64
    layers: tuple[int, ...] | None = None
    combiner: str = "sum"
    dmlp_embed: int | None = None
    attn_hidden: int | None = None
    mask_history_target: bool = False
    epochs: int = 50
    batch_size: int = 256
    lr: float = 0.001
    l2: float = 1e-6
    neg_ratio: int = 4
    seed: int = 42
    optimizer: str = "adam"
    eval_every: int = 1
    patience: int = 5
    checkpoint_path: str | None = None
    metrics_path: str | None = None
    deterministic: bool = False
    k_max: int = DEFAULT_K_MAX
    init_std: float = 0.01
    val_negatives: int = 99
    use_validation: bool = True

    def __post_init__(self):
        for name in ("factors", "batch_size", "neg_ratio", "eval_every", "k_max"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("epochs", "patience"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got "
                              f"{self.optimizer!r}")
        if self.layers is not None:
            self.layers = tuple(int(w) for w in self.layers)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(kind=self.model, factors=self.factors,
                         mlp_layers=self.layers, combiner=self.combiner,
                         dmlp_embed=self.dmlp_embed, attn_hidden=self.attn_hidden,
                         mask_history_target=self.mask_history_target)


@dataclass
class TrainResult:
    config: RunConfig
    best_epoch: int
    best_val_hr10: float
    epochs_run: int
    seconds: float
    test_report: EvalReport
    val_reports: list[EvalReport] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)
    best_params: dict[str, np.ndarray] = field(default_factory=dict)
    checkpoint_path: str | None = None


class _MetricsLog:
    """Append-only JSON-lines sink; each line is written durably."""

    def __init__(self, path: str | None, zero_seconds: bool):
        self.path = Path(path) if path else None
        self.zero_seconds = zero_seconds
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, report: EvalReport) -> None:
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(report.to_json_line(self.zero_seconds) + "\n")


def load_run_data(config: RunConfig) -> tuple[InteractionStore, list[TestInstance]]:
    return load_dataset(config.train_path, config.test_path,
                        config.negatives_path)


def train_model(config: RunConfig,
                dataset: tuple[InteractionStore, list[TestInstance]] | None = None,
                initial_model: Model | None = None) -> TrainResult:
    """Run one training job and return the best-validation model's test report.

    The job holds out each user's most recent training interaction for
    validation (unless ``use_validation`` is off), evaluates every
    ``eval_every`` epochs, keeps the parameters with the best validation
    HR@10, stops early after ``patience`` evaluations without improvement
    and finally reports test metrics with the best parameters restored.
    """
    t_start = time.perf_counter()
    store, test_instances = dataset if dataset is not None else load_run_data(config)
    rng = SeededRng(config.seed)

    if config.use_validation:
        train_store, val_pairs = holdout_validation(store)
        val_instances = sample_candidate_negatives(
            store, val_pairs, config.val_negatives, rng.spawn(_VAL_STREAM))
    else:
        train_store, val_instances = store, []

    spec = config.model_spec()
    if initial_model is not None:
        model = initial_model
        if model.spec.kind != spec.kind:
            raise ConfigError(f"initial model is {model.spec.kind!r} but the "
                              f"config asks for {spec.kind!r}")
    else:
        model = build_model(spec, store.num_users, store.num_items,
                            rng.spawn(_INIT_STREAM), init_std=config.init_std)
    model.attach(train_store)

    optimizer = make_optimizer(config.optimizer, config.lr, config.l2)
    metrics = _MetricsLog(config.metrics_path, config.deterministic)

    best_epoch = 0
    best_hr10 = -1.0
    best_params: dict[str, np.ndarray] = {}
    val_reports: list[EvalReport] = []
    loss_history: list[float] = []
    since_best = 0

    def run_validation(epoch: int) -> bool:
        """Evaluate, log, snapshot on improvement; True if improved."""
        nonlocal best_epoch, best_hr10, best_params, since_best
        if not val_instances:
            best_epoch = epoch
            best_params = {p.name: p.value.copy() for p in model.params()}
            return True
        report = evaluate(model, val_instances, k_max=config.k_max, epoch=epoch)
        val_reports.append(report)
        metrics.write(report)
        hr10 = report.hr_at(min(10, config.k_max))
        if hr10 > best_hr10:
            best_hr10 = hr10
            best_epoch = epoch
            best_params = {p.name: p.value.copy() for p in model.params()}
            since_best = 0
            return True
        since_best += 1
        return False

    run_validation(0)
    epochs_run = 0
    if model.trainable:
        for epoch in range(1, config.epochs + 1):
            loss_sum = 0.0
            count = 0
            for batch in sample_epoch_batches(train_store, config, epoch):
                y_hat = model.forward(batch.users, batch.items, batch.labels)
                loss_sum += float(bce_loss(y_hat, batch.labels).sum())
                count += len(batch)
                model.backward(bce_grad(y_hat, batch.labels))
                optimizer.step(model.params(), len(batch))
            epochs_run = epoch
            loss_history.append(loss_sum / max(count, 1))
            if epoch % config.eval_every == 0:
                run_validation(epoch)
                if config.patience and since_best >= config.patience:
                    log.info("early stop at epoch %d (no improvement for %d "
                             "evaluations)", epoch, config.patience)
                    break
    elif config.epochs:
        log.info("%s has no trainable parameters; skipping training epochs",
                 model.kind)

    load_params(model, best_params)
    if config.checkpoint_path:
        ckpt.save_model(config.checkpoint_path, model)

    # test-time histories come from the full training file (the held-out
    # validation interactions are known by then), matching `eval` runs
    # against the saved checkpoint
    model.attach(store)
    test_report = evaluate(model, test_instances, k_max=config.k_max,
                           epoch=best_epoch)
    return TrainResult(config=config, best_epoch=best_epoch,
                       best_val_hr10=best_hr10, epochs_run=epochs_run,
                       seconds=time.perf_counter() - t_start,
                       test_report=test_report, val_reports=val_reports,
                       loss_history=loss_history, best_params=best_params,
                       checkpoint_path=config.checkpoint_path)


def sample_epoch_batches(train_store: InteractionStore, config: RunConfig,
                         epoch: int):
    """Deterministic per-epoch batch stream derived from the run seed."""
    epoch_seed = SeededRng(config.seed, _EPOCH_STREAM, epoch)
    # use the derived stream's first draw as the sampler seed
    seed = int(epoch_seed.integers(0, 2 ** 62))
    return sample_epoch(train_store, config.neg_ratio, seed, config.batch_size)


@dataclass
class PretrainFuseResult:
    dgmf: TrainResult
    dmlp: TrainResult
    fused_val_report: EvalReport | None
    dnmf: TrainResult


def pretrain_fuse(dgmf_config: RunConfig, dmlp_config: RunConfig,
                  dnmf_config: RunConfig) -> PretrainFuseResult:
    """Train both parts with Adam, fuse them, fine-tune with plain SGD.

    The fused model's epoch-0 validation report (first entry of the dnmf
    result's ``val_reports``) reflects the pure fusion before any SGD
    step.
    """
    if dgmf_config.model != "dgmf" or dmlp_config.model != "dmlp" \
            or dnmf_config.model != "dnmf":
        raise ConfigError("pretrain_fuse expects dgmf, dmlp and dnmf configs")
    dataset = load_run_data(dnmf_config)
    store, _ = dataset

    dgmf_result = train_model(dgmf_config, dataset=dataset)
    dmlp_result = train_model(dmlp_config, dataset=dataset)

    fused = fuse(dgmf_result.best_params, dmlp_result.best_params,
                 dnmf_config.model_spec(), store.num_users, store.num_items)

    if dnmf_config.optimizer != "sgd":
        log.info("fused model is fine-tuned with plain SGD (moment state of "
                 "the parts is not carried over)")
        dnmf_config = replace(dnmf_config, optimizer="sgd")
    dnmf_result = train_model(dnmf_config, dataset=dataset, initial_model=fused)
    fused_report = dnmf_result.val_reports[0] if dnmf_result.val_reports else None
    return PretrainFuseResult(dgmf=dgmf_result, dmlp=dmlp_result,
                              fused_val_report=fused_report, dnmf=dnmf_result)


def run_sweep(base_config: RunConfig, axis: str, values: list,
              csv_path: str | None = None) -> list[dict]:
    """Sequential runs over one axis; one CSV row per value.

    Run ``i`` uses seed ``base.seed + i`` so any row can be reproduced by a
    standalone run with that seed. A failed run records its error in the
    metric columns and the sweep continues.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of "
                          f"{SWEEP_AXES}")
    rows: list[dict] = []
    for idx, value in enumerate(values):
        label = _axis_label(value)
        t0 = time.perf_counter()
        cfg = base_config
        try:
            cfg = replace(base_config, seed=base_config.seed + idx,
                          checkpoint_path=None, metrics_path=None,
                          **{axis: value})
            result = train_model(cfg)
            rows.append({
                "axis_value": label,
                "hr@10": f"{result.test_report.hr_at(min(10, cfg.k_max)):.6f}",
                "ndcg@10": f"{result.test_report.ndcg_at(min(10, cfg.k_max)):.6f}",
                "epochs": str(result.epochs_run),
                "seconds": "0.000" if cfg.deterministic else f"{result.seconds:.3f}",
            })
        except DncfError as exc:
            log.error("sweep value %s failed: %s", label, exc)
            rows.append({"axis_value": label, "hr@10": f"error: {exc}",
                         "ndcg@10": "", "epochs": "0",
                         "seconds": "0.000" if cfg.deterministic
                         else f"{time.perf_counter() - t0:.3f}"})
    if csv_path:
        path = Path(csv_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_HEADER)
            writer.writeheader()
            writer.writerows(rows)
    return rows


def _axis_label(value) -> str:
    if isinstance(value, (tuple, list)):
        return "x".join(str(v) for v in value) if value else "0"
    if value is None:
        return "default"
    return str(value)
