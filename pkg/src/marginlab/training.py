"""Training loops (plain surrogate minimization, surrogate-attack training,
margin-attack training and its smoothed variant), robust evaluation, and
best-vs-last checkpoint selection."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .attacks import (AttackConfig, beta_attack_batch, fgsm,
                      grid_oracle_attack, pgd_surrogate_batch,
                      targeted_ascent_batch)
from .data import Dataset, train_val_split
from .models import Checkpoint, ModelSpec, ParamSet, forward_logits, init_params, predict
from .objectives import cross_entropy
from .optim import LrSchedule, OptimState, lr_at
from .optim import step as opt_step
from .tensor import Tensor, sub, take_per_row, texp, tsum, mul, div

ALGORITHMS = ("erm", "pgd_at", "beta_at", "sbeta_at")


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str
    epochs: int
    batch_size: int = 64
    optimizer: str = "sgd"
    lr: float = 0.5
    decay_epochs: tuple = ()
    decay_factor: float = 0.1
    attack: AttackConfig = None
    mu: float = 1.0
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if self.algorithm == "sbeta_at" and self.mu <= 0:
            raise ValueError("sbeta_at needs mu > 0")
        if self.attack is None and self.algorithm != "erm":
            raise ValueError(f"{self.algorithm} needs an attack config")


@dataclass
class EpochMetrics:
    epoch: int
    train_clean: float
    train_robust: float
    val_clean: float
    val_robust: float
    test_clean: float
    test_robust: float
    loss: float
    seconds: float


@dataclass
class SelectionReport:
    best: Checkpoint
    best_metrics: EpochMetrics
    last: Checkpoint
    last_metrics: EpochMetrics


@dataclass
class TrainingRun:
    checkpoints: list
    metrics: list
    selection: SelectionReport


def accuracy(spec: ModelSpec, params: ParamSet, data: Dataset) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(predict(spec, params, data.X) == data.y))


def _robust_accuracy_batched(spec, params, data, attack_kind, cfg, seed):
    if len(data) == 0:
        return float("nan")
    if cfg is None or cfg.epsilon == 0:
        return accuracy(spec, params, data)
    if attack_kind in ("pgd", "pgd_at", "erm"):
        etas = pgd_surrogate_batch(spec, params, data.X, data.y, cfg, seed=seed)
    else:
        etas, _, _ = beta_attack_batch(spec, params, data.X, data.y, cfg, seed=seed)
    preds = predict(spec, params, data.X + etas)
    clean_preds = predict(spec, params, data.X)
    survived = (preds == data.y) & (clean_preds == data.y)
    return float(np.mean(survived))


def evaluate_robust(spec: ModelSpec, params: ParamSet, data: Dataset,
                    attack_kind: str, cfg: AttackConfig, resolution: int = 41,
                    seed: int = 0) -> dict:
    """Clean accuracy and the fraction surviving the chosen attack."""
    clean = accuracy(spec, params, data)
    if cfg.epsilon == 0:
        return {"clean": clean, "robust": clean}
    if attack_kind in ("pgd", "beta"):
        robust = _robust_accuracy_batched(spec, params, data, attack_kind, cfg, seed)
    elif attack_kind == "fgsm":
        ok = [not fgsm(spec, params, x, y, cfg).success
              for x, y in zip(data.X, data.y)]
        robust = float(np.mean(ok))
    elif attack_kind == "grid_oracle":
        if data.dim > 3:
            raise ValueError("grid oracle evaluation is limited to d <= 3")
        ok = [not grid_oracle_attack(spec, params, x, y, cfg.epsilon, resolution,
                                     cfg.norm, cfg.box).success
              for x, y in zip(data.X, data.y)]
        robust = float(np.mean(ok))
    else:
        raise ValueError(f"unknown attack kind {attack_kind!r}")
    return {"clean": clean, "robust": robust}


def _wrong_class_table(y, k):
    return np.array([[j for j in range(k) if j != yi] for yi in y], dtype=np.intp)


def _batch_update(spec, params, optimizers, X_pert, y, lr):
    """One surrogate-descent step on mean cross-entropy; returns new params."""
    params_g = params.with_grad()
    loss = mul(tsum(cross_entropy(forward_logits(spec, params_g, X_pert), y)),
               1.0 / X_pert.shape[0])
    loss.backward()
    updates = {}
    for name, tensor in params_g:
        opt = optimizers[name]
        opt.lr = lr
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        updates[name] = opt_step(opt, tensor.data, grad, "descend")
    return params.replaced(updates), float(loss.item())


def _sbeta_update(spec, params, optimizers, X, y, slot_etas, wrong, mu, lr):
    """Descent on the margin-softmax weighted loss over all per-class
    perturbations; the weights stay inside the graph, so gradients flow
    through them as well as through the per-term losses."""
    n, n_slots = X.shape[0], len(slot_etas)
    params_g = params.with_grad()
    margins, ces = [], []
    for s in range(n_slots):
        logits = forward_logits(spec, params_g, X + slot_etas[s])
        m = sub(take_per_row(logits, wrong[:, s]), take_per_row(logits, y))
        margins.append(m)
        ces.append(cross_entropy(logits, y))
    shift = np.max(np.stack([m.data for m in margins]) * mu, axis=0)
    exps = [texp(sub(mul(m, mu), Tensor(shift))) for m in margins]
    denom = exps[0]
    for e in exps[1:]:
        denom = denom + e
    weighted = None
    for e, ce in zip(exps, ces):
        term = mul(div(e, denom), ce)
        weighted = term if weighted is None else weighted + term
    loss = mul(tsum(weighted), 1.0 / n)
    loss.backward()
    updates = {}
    for name, tensor in params_g:
        opt = optimizers[name]
        opt.lr = lr
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        updates[name] = opt_step(opt, tensor.data, grad, "descend")
    return params.replaced(updates), float(loss.item())


def sbeta_weighted_loss(spec, params, X, y, slot_etas, wrong, mu) -> Tensor:
    """The smoothed weighted loss as a differentiable scalar (used by the
    gradient-check suite)."""
    n, n_slots = np.atleast_2d(X).shape[0], len(slot_etas)
    margins, ces = [], []
    for s in range(n_slots):
        logits = forward_logits(spec, params, np.atleast_2d(X) + slot_etas[s])
        m = sub(take_per_row(logits, wrong[:, s]), take_per_row(logits, y))
        margins.append(m)
        ces.append(cross_entropy(logits, y))
    shift = np.max(np.stack([m.data for m in margins]) * mu, axis=0)
    exps = [texp(sub(mul(m, mu), Tensor(shift))) for m in margins]
    denom = exps[0]
    for e in exps[1:]:
        denom = denom + e
    weighted = None
    for e, ce in zip(exps, ces):
        term = mul(div(e, denom), ce)
        weighted = term if weighted is None else weighted + term
    return mul(tsum(weighted), 1.0 / n)


def run_training(spec: ModelSpec, train_data: Dataset, cfg: TrainConfig,
                 test_data: Dataset = None, hook=None,
                 init: ParamSet = None) -> TrainingRun:
    """Train per the configured algorithm; returns per-epoch checkpoints,
    metrics, and the best/last selection.

    The optional hook is called as hook(epoch, step, X, y, etas, j_stars)
    after each batch attack (beta_at only; j_stars is None otherwise).
    """
    if len(train_data) == 0:
        raise ValueError("empty dataset")
    test_data = test_data if test_data is not None else Dataset(
        np.zeros((0, train_data.dim)), np.zeros(0, dtype=np.intp))
    tr, val = train_val_split(train_data, cfg.val_fraction, cfg.seed)
    schedule = LrSchedule(cfg.lr, tuple(cfg.decay_epochs), cfg.decay_factor)
    params = init.copy() if init is not None else init_params(spec, cfg.seed)
    optimizers = {name: OptimState(cfg.optimizer, cfg.lr) for name, _ in params}
    k = spec.class_count
    atk = cfg.attack
    eps0 = atk is None or atk.epsilon == 0

    checkpoints, metrics = [], []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at(schedule, epoch - 1)
        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, epoch, 0x5F0F)))
        order = shuffle_rng.permutation(len(tr))
        epoch_loss, n_batches = 0.0, 0
        for step_i, lo in enumerate(range(0, len(tr), cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            X, y = tr.X[idx], tr.y[idx]
            atk_seed = (cfg.seed << 20) ^ (epoch << 10) ^ step_i
            if cfg.algorithm == "erm" or eps0:
                params, loss = _batch_update(spec, params, optimizers, X, y, lr)
            elif cfg.algorithm == "pgd_at":
                etas = pgd_surrogate_batch(spec, params, X, y, atk, seed=atk_seed)
                if hook is not None:
                    hook(epoch, step_i, X, y, etas, None)
                params, loss = _batch_update(spec, params, optimizers, X + etas, y, lr)
            elif cfg.algorithm == "beta_at":
                etas, j_stars, _ = beta_attack_batch(spec, params, X, y, atk,
                                                     seed=atk_seed)
                if hook is not None:
                    hook(epoch, step_i, X, y, etas, j_stars)
                params, loss = _batch_update(spec, params, optimizers, X + etas, y, lr)
            else:  # sbeta_at
                wrong = _wrong_class_table(y, k)
                slot_etas = []
                for s in range(k - 1):
                    etas, _ = targeted_ascent_batch(
                        spec, params, X, y, wrong[:, s], atk,
                        seed=(atk_seed * (k - 1) + s))
                    slot_etas.append(etas)
                params, loss = _sbeta_update(spec, params, optimizers, X, y,
                                             slot_etas, wrong, cfg.mu, lr)
            epoch_loss += loss
            n_batches += 1

        monitor_kind = "pgd" if cfg.algorithm in ("erm", "pgd_at") else "beta"
        eval_seed = (cfg.seed << 20) ^ (epoch << 10) ^ 0xE7A1
        row = EpochMetrics(
            epoch=epoch,
            train_clean=accuracy(spec, params, tr),
            train_robust=accuracy(spec, params, tr) if eps0 else
            _robust_accuracy_batched(spec, params, tr, monitor_kind, atk, eval_seed),
            val_clean=accuracy(spec, params, val),
            val_robust=accuracy(spec, params, val) if eps0 else
            _robust_accuracy_batched(spec, params, val, monitor_kind, atk,
                                     eval_seed ^ 1),
            test_clean=accuracy(spec, params, test_data),
            test_robust=accuracy(spec, params, test_data) if eps0 else
            _robust_accuracy_batched(spec, params, test_data, monitor_kind, atk,
                                     eval_seed ^ 2),
            loss=epoch_loss / n_batches,
            seconds=time.perf_counter() - t0,
        )
        metrics.append(row)
        checkpoints.append(Checkpoint(spec, params.copy(), {
            "algorithm": cfg.algorithm, "epoch": epoch, "seed": cfg.seed}))

    selection = select_checkpoints(metrics, checkpoints)
    return TrainingRun(checkpoints, metrics, selection)


def select_checkpoints(metrics, checkpoints) -> SelectionReport:
    """Best = highest validation robust accuracy (earliest epoch on ties)."""
    if not metrics:
        raise ValueError("need at least one epoch")
    best_i = 0
    for i, row in enumerate(metrics):
        if row.val_robust > metrics[best_i].val_robust:
            best_i = i
    return SelectionReport(best=checkpoints[best_i], best_metrics=metrics[best_i],
                           last=checkpoints[-1], last_metrics=metrics[-1])


def _wrap(algorithm):
    def runner(spec, train_data, cfg: TrainConfig, test_data=None, hook=None):
        cfg = replace(cfg, algorithm=algorithm)
        run = run_training(spec, train_data, cfg, test_data, hook)
        return run.selection.last, run.metrics
    runner.__name__ = f"train_{algorithm}"
    return runner


train_erm = _wrap("erm")
train_pgd_at = _wrap("pgd_at")
train_beta_at = _wrap("beta_at")
train_sbeta_at = _wrap("sbeta_at")
