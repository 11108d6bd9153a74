"""Objective, optimizer, training loop, and the gradient-check harness.

Training minimizes mean absolute error with Adam.  The learning rate is held
at its base value for the first `decay_start_epoch` epochs and multiplied by
`lr_decay` every epoch after that; early stopping halts after `patience`
epochs without validation improvement and the best-epoch parameters are
returned.  Everything is deterministic given (seed, data, config) in
single-threaded use.
"""

from __future__ import annotations

import copy
import csv
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .cells import CellKind
from .data import WindowSample
from .errors import ConfigError, ShapeError
from .model import (ModelConfig, SegRnnParams, TRAIN, backward_pipeline,
                    forward_pipeline, named_params, clone_params, predict)
from .numerics import make_rng


@dataclass
class TrainConfig:
    base_lr: float
    batch_size: int
    epochs: int = 30
    lr_decay: float = 0.8
    decay_start_epoch: int = 3
    patience: int = 10
    dropout_rate: float = 0.0
    seed: int = 0
    clip_norm: Optional[float] = None

    def validate(self) -> None:
        problems = []
        if self.base_lr <= 0:
            problems.append(f"base_lr must be positive, got {self.base_lr}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.lr_decay <= 1:
            problems.append(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.decay_start_epoch < 1:
            problems.append(f"decay_start_epoch must be >= 1, got {self.decay_start_epoch}")
        if not 1 <= self.patience <= self.epochs:
            problems.append(f"patience must be in [1, epochs], got {self.patience}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            problems.append(f"clip_norm must be positive, got {self.clip_norm}")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr", "seconds"])
            for e in self.epochs:
                writer.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss),
                                 repr(e.lr), repr(e.seconds)])


# ---------------------------------------------------------------------------
# Loss and metrics.

def mae_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mae_loss shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def metrics(pred: np.ndarray, target: np.ndarray) -> dict[str, float]:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"metrics shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return {"mse": float(np.mean(diff * diff)), "mae": float(np.mean(np.abs(diff)))}


def lr_at(epoch: int, tc: TrainConfig) -> float:
    """Constant through decay_start_epoch, then one decay factor per epoch."""
    if epoch < 1:
        raise ConfigError(f"epoch numbering starts at 1, got {epoch}")
    return tc.base_lr * tc.lr_decay ** max(0, epoch - tc.decay_start_epoch)


# ---------------------------------------------------------------------------
# Adam.

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam_state(params: SegRnnParams) -> AdamState:
    named = named_params(params)
    return AdamState(m={k: np.zeros_like(a) for k, a in named.items()},
                     v={k: np.zeros_like(a) for k, a in named.items()})


def adam_step(params: SegRnnParams, grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> tuple[SegRnnParams, AdamState]:
    """Bias-corrected Adam update, applied in place to every learnable tensor."""
    named = named_params(params)
    if set(grads) != set(named):
        raise ShapeError(f"gradient keys {sorted(grads)} != parameter keys {sorted(named)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for k, p in named.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"gradient {k} has shape {g.shape}, parameter is {p.shape}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients down to a global L2 norm of max_norm if exceeded."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return grads


# ---------------------------------------------------------------------------
# Gradients through the full pipeline.

def _stack_batch(batch: Sequence[WindowSample]):
    xs = np.stack([s.x for s in batch])
    ys = np.stack([s.y for s in batch])
    channels = np.asarray([s.channel for s in batch], dtype=np.intp)
    return xs, ys, channels


def compute_gradients_arrays(xs: np.ndarray, ys: np.ndarray, channels: np.ndarray,
                             params: SegRnnParams, cfg: ModelConfig,
                             mode: str = TRAIN,
                             rng: Optional[np.random.Generator] = None
                             ) -> tuple[float, dict[str, np.ndarray]]:
    """Batch MAE loss and its exact parameter gradients (rows = samples)."""
    pred, cache = forward_pipeline(xs, channels, params, cfg, mode, rng)
    diff = pred - ys
    loss = float(np.mean(np.abs(diff)))
    # Subgradient of |.| at 0 is taken as 0.
    dpred = np.sign(diff) / diff.size
    return loss, backward_pipeline(dpred, cache, params, cfg)


def compute_gradients(batch: Sequence[WindowSample], params: SegRnnParams,
                      cfg: ModelConfig, mode: str = TRAIN,
                      rng: Optional[np.random.Generator] = None
                      ) -> tuple[float, dict[str, np.ndarray]]:
    if len(batch) == 0:
        raise ConfigError("compute_gradients needs a non-empty batch")
    xs, ys, channels = _stack_batch(batch)
    return compute_gradients_arrays(xs, ys, channels, params, cfg, mode, rng)


def grad_check(params: SegRnnParams, sample: WindowSample, cfg: ModelConfig,
               eps: float = 1e-5) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    Runs with dropout disabled; relative error is |a - f| / max(|a|, |f|, 1e-8).
    """
    cfg = replace(cfg, dropout_rate=0.0)
    _, analytic = compute_gradients([sample], params, cfg, mode=TRAIN, rng=None)

    def loss_fn() -> float:
        pred = predict(sample.x, sample.channel, params, cfg)
        return mae_loss(pred, sample.y)

    worst = 0.0
    for name, arr in named_params(params).items():
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            fd = (up - down) / (2.0 * eps)
            err = abs(a_flat[i] - fd) / max(abs(a_flat[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


def sample_grad_check_case(rng: np.random.Generator):
    """One random tiny configuration plus a random window sample.

    Cell kinds, decode modes, and embedding flags all rotate through the
    draw so repeated trials cover every combination.
    """
    from .model import PMF, RMF, init_params

    seg_len = int(rng.choice([2, 4]))
    lookback = seg_len * int(rng.integers(1, 16 // seg_len + 1))
    horizon = seg_len * int(rng.integers(1, 8 // seg_len + 1))
    hidden = int(rng.choice([4, 8]))
    channels = int(rng.integers(1, 3))
    cfg = ModelConfig(
        lookback=lookback, horizon=horizon, seg_len=seg_len, hidden_dim=hidden,
        cell=CellKind(rng.choice([k.value for k in CellKind])),
        dropout_rate=0.0,
        use_channel_pe=channels > 1 and bool(rng.integers(0, 2)),
        use_relative_pe=bool(rng.integers(0, 4)),  # mostly on
        num_channels=channels,
        decode_mode=PMF if rng.integers(0, 2) else RMF)
    cfg.validate()
    params = init_params(cfg, rng)
    sample = WindowSample(
        x=rng.standard_normal(lookback), y=rng.standard_normal(horizon),
        channel=int(rng.integers(0, channels)), origin_t=0)
    return cfg, params, sample


def random_grad_check(trials: int = 20, seed: int = 0,
                      eps: float = 1e-5) -> list[tuple[str, float]]:
    """grad_check over `trials` random tiny configs; returns (label, error) rows."""
    rng = make_rng(seed)
    results = []
    for _ in range(trials):
        cfg, params, sample = sample_grad_check_case(rng)
        err = grad_check(params, sample, cfg, eps=eps)
        label = (f"{cfg.cell.value}/{cfg.decode_mode} L={cfg.lookback} "
                 f"w={cfg.seg_len} d={cfg.hidden_dim} H={cfg.horizon} C={cfg.num_channels}")
        results.append((label, err))
    return results


# ---------------------------------------------------------------------------
# Evaluation helpers.

def evaluate_forecasts(xs: np.ndarray, ys: np.ndarray, channels: np.ndarray,
                       params: SegRnnParams, cfg: ModelConfig,
                       batch_size: int = 1024) -> dict[str, float]:
    """Eval-mode test metrics accumulated over minibatches."""
    n = xs.shape[0]
    se = 0.0
    ae = 0.0
    count = 0
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        pred = predict(xs[lo:hi], channels[lo:hi], params, cfg)
        diff = pred - ys[lo:hi]
        se += float(np.sum(diff * diff))
        ae += float(np.sum(np.abs(diff)))
        count += diff.size
    return {"mse": se / count, "mae": ae / count}


def repeat_last_baseline(xs: np.ndarray, ys: np.ndarray) -> dict[str, float]:
    """Repeat the final look-back value across the horizon."""
    pred = np.repeat(xs[:, -1:], ys.shape[1], axis=1)
    return metrics(pred, ys)


# ---------------------------------------------------------------------------
# Training loop.

def _coerce_split(split) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(split, tuple) and len(split) == 3:
        return split
    if len(split) == 0:
        raise ConfigError("training split is empty")
    return _stack_batch(list(split))


def train(train_set, val_set, params: SegRnnParams, cfg: ModelConfig,
          tc: TrainConfig, log=None) -> tuple[SegRnnParams, TrainHistory]:
    """Minibatch Adam with the decayed-LR schedule and patience-based stopping.

    train_set / val_set are sequences of WindowSample or pre-stacked
    (x, y, channel) array triples.  Returns the best-epoch parameters.
    """
    tc.validate()
    cfg = replace(cfg, dropout_rate=tc.dropout_rate)
    xs, ys, chs = _coerce_split(train_set)
    vxs, vys, vchs = _coerce_split(val_set)
    if xs.shape[0] == 0 or vxs.shape[0] == 0:
        raise ConfigError("training and validation splits must be non-empty")

    rng = make_rng(tc.seed)
    adam = init_adam_state(params)
    history = TrainHistory()
    best_val = np.inf
    best_params = clone_params(params)
    best_epoch = 0
    epochs_since_improvement = 0
    n = xs.shape[0]

    for epoch in range(1, tc.epochs + 1):
        started = time.perf_counter()
        lr = lr_at(epoch, tc)
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, tc.batch_size):
            idx = order[lo:lo + tc.batch_size]
            loss, grads = compute_gradients_arrays(
                xs[idx], ys[idx], chs[idx], params, cfg, TRAIN, rng)
            if tc.clip_norm is not None:
                clip_gradients(grads, tc.clip_norm)
            adam_step(params, grads, adam, lr)
            loss_sum += loss * len(idx)
        train_loss = loss_sum / n
        val_loss = evaluate_forecasts(vxs, vys, vchs, params, cfg)["mae"]
        seconds = time.perf_counter() - started
        history.epochs.append(EpochStats(epoch, train_loss, val_loss, lr, seconds))
        if log is not None:
            log(f"epoch {epoch:3d}  train_mae {train_loss:.6f}  "
                f"val_mae {val_loss:.6f}  lr {lr:.2e}  {seconds:.1f}s")
        if val_loss < best_val:
            best_val = val_loss
            best_params = clone_params(params)
            best_epoch = epoch
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
            if epochs_since_improvement >= tc.patience:
                break

    history.best_epoch = best_epoch
    return best_params, history
