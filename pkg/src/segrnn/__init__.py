"""Segment-wise recurrent forecasting for long horizons.

A look-back window is cut into segments, each segment is projected and fed
to a single recurrent cell (one iteration per segment instead of one per
time point), and the horizon is decoded either in parallel from the final
state with positional embeddings (PMF) or recursively (RMF).  Gradients are
hand-derived; nothing here depends on an autodiff framework.
"""

from .cells import (CellKind, CellParams, StepCache, cell_backward, cell_forward,
                    init_cell, parameter_count, sequence_backward, sequence_forward)
from .data import (DatasetEntry, RawSeries, SplitSpec, Standardizer, WindowSample,
                   chronological_split, default_registry, fit_standardizer,
                   load_csv, load_registry, make_windows, synthetic_sine,
                   windows_to_arrays)
from .errors import (ConfigError, ConsistencyError, DataError, DataFormatError,
                     SegRnnError, ShapeError)
from .model import (EVAL, ModelConfig, NormAnchor, PMF, RMF, SegRnnParams, TRAIN,
                    build_pe, count_parameters, decode_pmf, decode_rmf, dropout,
                    encode, init_params, instance_denormalize, instance_normalize,
                    load_checkpoint, named_params, predict, save_checkpoint,
                    segment_partition)
from .numerics import (Matrix, apply_activation, init_uniform, make_rng, matmul,
                       matmul_reference)
from .training import (AdamState, TrainConfig, TrainHistory, adam_step,
                       compute_gradients, evaluate_forecasts, grad_check,
                       init_adam_state, lr_at, mae_loss, metrics,
                       random_grad_check, repeat_last_baseline, train)
from .cli import (ExperimentSpec, Report, run_ablation, run_experiment,
                  time_inference)

__version__ = "0.1.0"
