"""Experiment runner: train/evaluate from configs, sweep ablation axes,
time inference, and emit machine-readable reports.

Reports are JSON; training histories and sweeps are CSV so they can be
charted directly.  Exit codes: 0 success, 2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .cells import CellKind
from .data import (DatasetEntry, chronological_split, default_registry,
                   fit_standardizer, load_csv, load_registry, make_windows,
                   windows_to_arrays)
from .errors import ConfigError, DataError, DataFormatError, SegRnnError
from .model import (EVAL, ModelConfig, PMF, RMF, count_parameters, init_params,
                    load_checkpoint, predict, save_checkpoint)
from .numerics import make_rng
from .training import (TrainConfig, TrainHistory, evaluate_forecasts,
                       random_grad_check, repeat_last_baseline, train)

PE_CHOICES = ("rp+cp", "rp", "cp", "none")
ABLATION_AXES = ("seg_len", "decode_mode", "lookback", "cell", "pe")


@dataclass
class ExperimentSpec:
    """Everything one experiment needs; field names mirror the CLI flags."""
    dataset: str
    lookback: int
    horizon: int
    seg_len: int
    hidden_dim: int
    cell: CellKind = CellKind.GRU
    decode_mode: str = PMF
    dropout: float = 0.0
    channel_pe: bool = True
    relative_pe: bool = True
    epochs: int = 30
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 0.8
    decay_start_epoch: int = 3
    patience: Optional[int] = None
    clip_norm: Optional[float] = None
    seed: int = 0
    repeats: int = 1
    seeds: Optional[list[int]] = None
    stride: int = 1
    max_timesteps: Optional[int] = None
    out_dir: Optional[Path] = None

    def seeds_list(self) -> list[int]:
        if self.seeds is not None:
            if len(self.seeds) == 0:
                raise ConfigError("explicit seed list is empty")
            return list(self.seeds)
        return [self.seed + i for i in range(self.repeats)]

    def effective_patience(self) -> int:
        return self.patience if self.patience is not None else min(10, self.epochs)

    def model_config(self, num_channels: int) -> ModelConfig:
        cfg = ModelConfig(
            lookback=self.lookback, horizon=self.horizon, seg_len=self.seg_len,
            hidden_dim=self.hidden_dim, cell=self.cell,
            dropout_rate=self.dropout,
            use_channel_pe=self.channel_pe and num_channels > 1,
            use_relative_pe=self.relative_pe,
            num_channels=num_channels, decode_mode=self.decode_mode)
        cfg.validate()
        return cfg

    def train_config(self, seed: int) -> TrainConfig:
        tc = TrainConfig(
            base_lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
            lr_decay=self.lr_decay, decay_start_epoch=self.decay_start_epoch,
            patience=self.effective_patience(), dropout_rate=self.dropout,
            seed=seed, clip_norm=self.clip_norm)
        tc.validate()
        return tc

    def validate_static(self, registry: Optional[dict[str, DatasetEntry]] = None) -> None:
        """Everything checkable before touching the dataset file."""
        self.model_config(num_channels=1)
        self.train_config(seed=self.seed)
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.max_timesteps is not None and self.max_timesteps < self.lookback + self.horizon:
            raise ConfigError(f"max_timesteps {self.max_timesteps} smaller than one window")
        if registry is not None and self.dataset.lower() not in registry:
            raise ConfigError(
                f"dataset {self.dataset!r} is not registered "
                f"(known: {sorted(registry)})")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["cell"] = self.cell.value
        d["out_dir"] = None if self.out_dir is None else str(self.out_dir)
        return d


@dataclass
class RunResult:
    seed: int
    mse: float
    mae: float
    train_seconds_per_epoch: float
    inference_seconds: float
    parameter_count: int
    best_epoch: int
    history: TrainHistory

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "mse": self.mse, "mae": self.mae,
            "train_seconds_per_epoch": self.train_seconds_per_epoch,
            "inference_seconds": self.inference_seconds,
            "parameter_count": self.parameter_count,
            "best_epoch": self.best_epoch,
            "history": [dataclasses.asdict(e) for e in self.history.epochs],
        }


@dataclass
class Report:
    spec: dict
    dataset: dict
    baseline_repeat_last: dict
    runs: list[RunResult] = field(default_factory=list)

    @property
    def aggregate(self) -> dict:
        mses = np.asarray([r.mse for r in self.runs])
        maes = np.asarray([r.mae for r in self.runs])
        return {"mse_mean": float(mses.mean()), "mse_std": float(mses.std()),
                "mae_mean": float(maes.mean()), "mae_std": float(maes.std())}

    def to_dict(self) -> dict:
        return {"spec": self.spec, "dataset": self.dataset,
                "baseline_repeat_last": self.baseline_repeat_last,
                "runs": [r.to_dict() for r in self.runs],
                "aggregate": self.aggregate}


REPORT_SCHEMA = {
    "type": "object",
    "required": ["spec", "dataset", "baseline_repeat_last", "runs", "aggregate"],
    "properties": {
        "spec": {"type": "object"},
        "dataset": {
            "type": "object",
            "required": ["name", "num_timesteps", "num_channels"],
        },
        "baseline_repeat_last": {
            "type": "object",
            "required": ["mse", "mae"],
            "properties": {"mse": {"type": "number"}, "mae": {"type": "number"}},
        },
        "runs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["seed", "mse", "mae", "train_seconds_per_epoch",
                             "inference_seconds", "parameter_count", "best_epoch",
                             "history"],
                "properties": {
                    "seed": {"type": "integer"},
                    "mse": {"type": "number"},
                    "mae": {"type": "number"},
                    "parameter_count": {"type": "integer"},
                    "history": {"type": "array"},
                },
            },
        },
        "aggregate": {
            "type": "object",
            "required": ["mse_mean", "mse_std", "mae_mean", "mae_std"],
        },
    },
}


# ---------------------------------------------------------------------------
# Dataset assembly.

@dataclass
class PreparedData:
    name: str
    num_timesteps: int
    num_channels: int
    train: tuple
    val: tuple
    test: tuple

    def summary(self) -> dict:
        return {"name": self.name, "num_timesteps": self.num_timesteps,
                "num_channels": self.num_channels,
                "train_samples": int(self.train[0].shape[0]),
                "val_samples": int(self.val[0].shape[0]),
                "test_samples": int(self.test[0].shape[0])}


def prepare_dataset(spec: ExperimentSpec,
                    registry: dict[str, DatasetEntry]) -> PreparedData:
    """Load, optionally truncate, split chronologically, standardize on the
    train split, and window each split into stacked sample arrays."""
    entry = registry[spec.dataset.lower()]
    series = load_csv(entry.path)
    values = series.values
    if spec.max_timesteps is not None:
        values = values[:spec.max_timesteps]
    ranges = chronological_split(values.shape[0], entry.split)
    scaler = fit_standardizer(values[ranges[0][0]:ranges[0][1]])
    splits = []
    for lo, hi in ranges:
        windows = make_windows(scaler.apply(values[lo:hi]), spec.lookback,
                               spec.horizon, spec.stride)
        splits.append(windows_to_arrays(windows))
    return PreparedData(name=spec.dataset, num_timesteps=values.shape[0],
                        num_channels=values.shape[1],
                        train=splits[0], val=splits[1], test=splits[2])


# ---------------------------------------------------------------------------
# Experiment and ablation runners.

def run_experiment(spec: ExperimentSpec, registry: dict[str, DatasetEntry],
                   log=None) -> Report:
    spec.validate_static(registry)
    data = prepare_dataset(spec, registry)
    cfg = spec.model_config(data.num_channels)
    report = Report(spec=spec.to_dict(), dataset=data.summary(),
                    baseline_repeat_last=repeat_last_baseline(data.test[0], data.test[1]))

    artifacts = []
    for seed in spec.seeds_list():
        tc = spec.train_config(seed)
        params = init_params(cfg, make_rng(seed))
        best, history = train(data.train, data.val, params, cfg, tc, log=log)
        started = time.perf_counter()
        test_metrics = evaluate_forecasts(*data.test, best, cfg)
        inference_seconds = time.perf_counter() - started
        epoch_seconds = [e.seconds for e in history.epochs]
        report.runs.append(RunResult(
            seed=seed, mse=test_metrics["mse"], mae=test_metrics["mae"],
            train_seconds_per_epoch=float(np.mean(epoch_seconds)),
            inference_seconds=inference_seconds,
            parameter_count=count_parameters(best, cfg),
            best_epoch=history.best_epoch, history=history))
        artifacts.append((seed, best, history))
        if log is not None:
            log(f"seed {seed}: test mse {test_metrics['mse']:.4f} "
                f"mae {test_metrics['mae']:.4f} (best epoch {history.best_epoch})")

    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as f:
            json.dump(report.to_dict(), f, indent=2)
        for seed, best, history in artifacts:
            history.write_csv(out / f"history_seed{seed}.csv")
            save_checkpoint(out / f"checkpoint_seed{seed}.npz", best, cfg)
    return report


def apply_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    """A copy of spec with one ablation axis changed; out_dir is cleared so
    only the sweep writes artifacts."""
    if axis == "seg_len":
        derived = replace(spec, seg_len=int(value))
    elif axis == "lookback":
        derived = replace(spec, lookback=int(value))
    elif axis == "decode_mode":
        mode = str(value).lower()
        if mode not in (PMF, RMF):
            raise ConfigError(f"decode_mode value must be pmf or rmf, got {value!r}")
        derived = replace(spec, decode_mode=mode)
    elif axis == "cell":
        try:
            derived = replace(spec, cell=CellKind(str(value).lower()))
        except ValueError:
            raise ConfigError(f"unknown cell kind {value!r}") from None
    elif axis == "pe":
        choice = str(value).lower()
        if choice not in PE_CHOICES:
            raise ConfigError(f"pe value must be one of {PE_CHOICES}, got {value!r}")
        derived = replace(spec, relative_pe="rp" in choice,
                          channel_pe="cp" in choice)
    else:
        raise ConfigError(f"unknown ablation axis {axis!r} (choose from {ABLATION_AXES})")
    return replace(derived, out_dir=None)


def run_ablation(base_spec: ExperimentSpec, axis: str, values,
                 registry: dict[str, DatasetEntry], log=None) -> dict[str, Report]:
    """One experiment per axis value with shared seeds; validates every value
    before any training starts."""
    if len(values) == 0:
        raise ConfigError("ablation needs at least one axis value")
    derived = {}
    for value in values:
        d = apply_axis(base_spec, axis, value)
        d.validate_static(registry)
        derived[str(value)] = d

    reports = {}
    for key, d in derived.items():
        if log is not None:
            log(f"--- {axis} = {key} ---")
        reports[key] = run_experiment(d, registry, log=log)

    if base_spec.out_dir is not None:
        out = Path(base_spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"sweep_{axis}.json", "w") as f:
            json.dump({k: r.to_dict() for k, r in reports.items()}, f, indent=2)
        with open(out / f"sweep_{axis}.csv", "w") as f:
            f.write("axis,value,seed,mse,mae,parameter_count,"
                    "train_seconds_per_epoch,inference_seconds\n")
            for key, rep in reports.items():
                for r in rep.runs:
                    f.write(f"{axis},{key},{r.seed},{r.mse!r},{r.mae!r},"
                            f"{r.parameter_count},{r.train_seconds_per_epoch!r},"
                            f"{r.inference_seconds!r}\n")
    return reports


def time_inference(params, cfg: ModelConfig, batch: int, repeats: int,
                   warmup: int = 3, seed: int = 0) -> dict[str, float]:
    """Wall-clock statistics of eval-mode prediction on a random batch."""
    if batch < 1 or repeats < 1:
        raise ConfigError("batch and repeats must be >= 1")
    rng = make_rng(seed)
    xs = rng.standard_normal((batch, cfg.lookback))
    channels = np.arange(batch, dtype=np.intp) % cfg.num_channels
    for _ in range(max(warmup, 3)):
        predict(xs, channels, params, cfg, EVAL)
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        predict(xs, channels, params, cfg, EVAL)
        times.append(time.perf_counter() - started)
    times = np.asarray(times)
    return {"mean_seconds": float(times.mean()), "std_seconds": float(times.std())}


# ---------------------------------------------------------------------------
# Command-line interface.

def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", type=str, help="registered dataset name")
    p.add_argument("--data-dir", type=str, help="directory with the benchmark CSVs")
    p.add_argument("--registry", type=str, help="JSON dataset registry file")
    p.add_argument("--lookback", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seg-len", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--cell", choices=[k.value for k in CellKind])
    p.add_argument("--decode-mode", choices=[PMF, RMF])
    p.add_argument("--dropout", type=float)
    p.add_argument("--channel-pe", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--relative-pe", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", type=float)
    p.add_argument("--decay-start-epoch", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--max-timesteps", type=int)
    p.add_argument("--out", type=str, help="output directory for report/history/checkpoints")
    p.add_argument("--config", type=str,
                   help="JSON config file; explicit flags override its values")


_SPEC_DEFAULTS = {
    "dataset": None, "lookback": 720, "horizon": 96, "seg_len": 48,
    "hidden_dim": 512, "cell": "gru", "decode_mode": PMF, "dropout": 0.0,
    "channel_pe": True, "relative_pe": True, "epochs": 30, "batch_size": 256,
    "lr": 1e-3, "lr_decay": 0.8, "decay_start_epoch": 3, "patience": None,
    "clip_norm": None, "seed": 0, "repeats": 1, "stride": 1,
    "max_timesteps": None, "out": None,
}


def _merge_spec_args(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicitly passed flags."""
    merged = dict(_SPEC_DEFAULTS)
    if args.config is not None:
        try:
            with open(args.config) as f:
                file_values = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
        unknown = set(file_values) - set(merged) - {"data_dir", "registry"}
        if unknown:
            raise ConfigError(f"{args.config}: unknown config keys {sorted(unknown)}")
        merged.update(file_values)
    for key in merged:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    merged = _merge_spec_args(args)
    if merged["dataset"] is None:
        raise ConfigError("--dataset is required (flag or config file)")
    return ExperimentSpec(
        dataset=merged["dataset"], lookback=merged["lookback"],
        horizon=merged["horizon"], seg_len=merged["seg_len"],
        hidden_dim=merged["hidden_dim"], cell=CellKind(merged["cell"]),
        decode_mode=merged["decode_mode"], dropout=merged["dropout"],
        channel_pe=merged["channel_pe"], relative_pe=merged["relative_pe"],
        epochs=merged["epochs"], batch_size=merged["batch_size"],
        lr=merged["lr"], lr_decay=merged["lr_decay"],
        decay_start_epoch=merged["decay_start_epoch"], patience=merged["patience"],
        clip_norm=merged["clip_norm"], seed=merged["seed"],
        repeats=merged["repeats"], stride=merged["stride"],
        max_timesteps=merged["max_timesteps"],
        out_dir=None if merged["out"] is None else Path(merged["out"]))


def _registry_from_args(args: argparse.Namespace) -> dict[str, DatasetEntry]:
    if getattr(args, "registry", None):
        return load_registry(args.registry)
    data_dir = getattr(args, "data_dir", None) or "data"
    return default_registry(data_dir)


def _cmd_train(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    registry = _registry_from_args(args)
    report = run_experiment(spec, registry, log=print)
    agg = report.aggregate
    print(json.dumps({"aggregate": agg,
                      "baseline_repeat_last": report.baseline_repeat_last}, indent=2))
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    params, cfg = load_checkpoint(args.checkpoint)
    spec = _spec_from_args(args)
    spec = replace(spec, lookback=cfg.lookback, horizon=cfg.horizon,
                   seg_len=cfg.seg_len, hidden_dim=cfg.hidden_dim)
    registry = _registry_from_args(args)
    spec.validate_static(registry)
    data = prepare_dataset(spec, registry)
    if data.num_channels != cfg.num_channels:
        raise ConfigError(f"checkpoint expects {cfg.num_channels} channels, "
                          f"dataset has {data.num_channels}")
    result = evaluate_forecasts(*data.test, params, cfg)
    print(json.dumps({"dataset": data.summary(), "test": result}, indent=2))
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    registry = _registry_from_args(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    reports = run_ablation(spec, args.axis, values, registry, log=print)
    print(json.dumps({k: r.aggregate for k, r in reports.items()}, indent=2))
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    results = random_grad_check(trials=args.trials, seed=args.seed, eps=args.eps)
    worst = 0.0
    for desc, err in results:
        print(f"{desc}: max relative error {err:.3e}")
        worst = max(worst, err)
    print(f"overall max relative error {worst:.3e} (tolerance {args.tol:.1e})")
    return 0 if worst <= args.tol else 1


def _cmd_params_count(args: argparse.Namespace) -> int:
    merged = _merge_spec_args(args)
    cfg = ModelConfig(
        lookback=merged["lookback"], horizon=merged["horizon"],
        seg_len=merged["seg_len"], hidden_dim=merged["hidden_dim"],
        cell=CellKind(merged["cell"]), dropout_rate=merged["dropout"],
        use_channel_pe=merged["channel_pe"] and args.num_channels > 1,
        use_relative_pe=merged["relative_pe"],
        num_channels=args.num_channels, decode_mode=merged["decode_mode"])
    cfg.validate()
    params = init_params(cfg, make_rng(merged["seed"]))
    print(count_parameters(params, cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segrnn",
        description="Segment-wise recurrent long-horizon forecaster")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and evaluate one experiment")
    _add_spec_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    _add_spec_flags(p_eval)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_abl = sub.add_parser("ablate", help="sweep one ablation axis")
    p_abl.add_argument("--axis", required=True, choices=ABLATION_AXES)
    p_abl.add_argument("--values", required=True,
                       help="comma-separated axis values, e.g. 1,12,48")
    _add_spec_flags(p_abl)
    p_abl.set_defaults(func=_cmd_ablate)

    p_gc = sub.add_parser("gradcheck",
                          help="finite-difference check of analytic gradients")
    p_gc.add_argument("--trials", type=int, default=20)
    p_gc.add_argument("--eps", type=float, default=1e-5)
    p_gc.add_argument("--tol", type=float, default=1e-4)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.set_defaults(func=_cmd_gradcheck)

    p_pc = sub.add_parser("params-count", help="count learnable parameters")
    _add_spec_flags(p_pc)
    p_pc.add_argument("--num-channels", type=int, default=1)
    p_pc.set_defaults(func=_cmd_params_count)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (OSError, DataError, DataFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except SegRnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())
