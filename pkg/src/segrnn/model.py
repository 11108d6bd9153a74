"""Segment-recurrent forecasting pipeline.

Forward path: subtract-last-value instance normalization, partition of the
look-back window into segments, linear projection + ReLU per segment, a
recurrent encoder over the projected segments, then one of two decoders:

* PMF (parallel multi-step): the final encoder state is duplicated once per
  output segment and stepped through the shared cell, each copy fed a
  positional embedding (relative-position half plus channel half) as input.
* RMF (recurrent multi-step): segments are predicted sequentially, each
  predicted segment re-projected through the encoder's projection to become
  the next step's input.

Decoder hidden outputs pass dropout, a linear prediction head maps them back
to segment space, and the flattened horizon is denormalized by adding the
stored anchor back.

Every forward function has an exact analytic backward counterpart; the
public entry points accept a single series (1-D) or a batch (one row per
sample).  Channel independence: a sample is one (window, channel) pair and
the channel index only selects the channel half of the positional embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cells import (CellKind, CellParams, StepCache, cell_backward, cell_forward,
                    hidden_part, init_cell, state_size, zero_grads)
from .errors import ConfigError, DataFormatError, ShapeError
from .numerics import Matrix, relu

CHECKPOINT_VERSION = 1

PMF = "pmf"
RMF = "rmf"
TRAIN = "train"
EVAL = "eval"


@dataclass
class ModelConfig:
    lookback: int
    horizon: int
    seg_len: int
    hidden_dim: int
    cell: CellKind = CellKind.GRU
    dropout_rate: float = 0.0
    use_channel_pe: bool = True
    use_relative_pe: bool = True
    num_channels: int = 1
    decode_mode: str = PMF

    @property
    def n_segments(self) -> int:
        return self.lookback // self.seg_len

    @property
    def m_segments(self) -> int:
        return self.horizon // self.seg_len

    def validate(self) -> None:
        """Raise ConfigError listing every violated constraint."""
        problems = []
        for name in ("lookback", "horizon", "seg_len", "hidden_dim", "num_channels"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seg_len >= 1:
            if self.lookback % self.seg_len != 0:
                problems.append(f"lookback {self.lookback} not divisible by seg_len {self.seg_len}")
            if self.horizon % self.seg_len != 0:
                problems.append(f"horizon {self.horizon} not divisible by seg_len {self.seg_len}")
        if self.hidden_dim % 2 != 0:
            problems.append(f"hidden_dim must be even (two embedding halves), got {self.hidden_dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.use_channel_pe and self.num_channels == 1:
            problems.append("channel positional embedding requires more than one channel")
        if self.decode_mode not in (PMF, RMF):
            problems.append(f"decode_mode must be '{PMF}' or '{RMF}', got {self.decode_mode!r}")
        if not isinstance(self.cell, CellKind):
            problems.append(f"cell must be a CellKind, got {self.cell!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "lookback": self.lookback, "horizon": self.horizon,
            "seg_len": self.seg_len, "hidden_dim": self.hidden_dim,
            "cell": self.cell.value, "dropout_rate": self.dropout_rate,
            "use_channel_pe": self.use_channel_pe,
            "use_relative_pe": self.use_relative_pe,
            "num_channels": self.num_channels, "decode_mode": self.decode_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["cell"] = CellKind(d.get("cell", "gru"))
        return cls(**d)


@dataclass
class SegRnnParams:
    """All learnable tensors; weight matrices are stored (out_dim, in_dim)."""
    w_prj: Matrix        # (hidden_dim, seg_len)
    b_prj: Matrix        # (hidden_dim,)
    cell: CellParams
    rp: Optional[Matrix]  # (m_segments, hidden_dim // 2) relative-position table
    cp: Optional[Matrix]  # (num_channels, hidden_dim // 2) channel table
    w_prd: Matrix        # (seg_len, hidden_dim)
    b_prd: Matrix        # (seg_len,)


def init_params(cfg: ModelConfig, rng: np.random.Generator,
                dtype=np.float64) -> SegRnnParams:
    """Fan-in-scaled uniform weights, zero biases; draw order is fixed."""
    cfg.validate()
    from .numerics import init_uniform
    d, w = cfg.hidden_dim, cfg.seg_len
    w_prj = init_uniform(d, w, rng, dtype)
    cell = init_cell(cfg.cell, d, d, rng, dtype)
    rp = init_uniform(cfg.m_segments, d // 2, rng, dtype) if cfg.use_relative_pe else None
    cp = init_uniform(cfg.num_channels, d // 2, rng, dtype) if cfg.use_channel_pe else None
    w_prd = init_uniform(w, d, rng, dtype)
    return SegRnnParams(
        w_prj=w_prj, b_prj=np.zeros(d, dtype=dtype), cell=cell,
        rp=rp, cp=cp, w_prd=w_prd, b_prd=np.zeros(w, dtype=dtype))


def named_params(params: SegRnnParams) -> dict[str, Matrix]:
    """Flat name -> array view of every learnable tensor, in a fixed order."""
    out = {"w_prj": params.w_prj, "b_prj": params.b_prj}
    for k, v in params.cell.weights.items():
        out[f"cell.{k}"] = v
    if params.rp is not None:
        out["rp"] = params.rp
    if params.cp is not None:
        out["cp"] = params.cp
    out["w_prd"] = params.w_prd
    out["b_prd"] = params.b_prd
    return out


def zero_param_grads(params: SegRnnParams) -> dict[str, Matrix]:
    return {k: np.zeros_like(v) for k, v in named_params(params).items()}


def clone_params(params: SegRnnParams) -> SegRnnParams:
    return SegRnnParams(
        w_prj=params.w_prj.copy(), b_prj=params.b_prj.copy(),
        cell=CellParams(params.cell.kind, params.cell.input_dim, params.cell.hidden_dim,
                        {k: v.copy() for k, v in params.cell.weights.items()}),
        rp=None if params.rp is None else params.rp.copy(),
        cp=None if params.cp is None else params.cp.copy(),
        w_prd=params.w_prd.copy(), b_prd=params.b_prd.copy())


def count_parameters(params: SegRnnParams, cfg: Optional[ModelConfig] = None) -> int:
    return sum(int(v.size) for v in named_params(params).values())


# ---------------------------------------------------------------------------
# Instance normalization (subtract the last look-back value, add it back).

@dataclass
class NormAnchor:
    last_value: Matrix  # scalar for a single series, (B,) for a batch


def instance_normalize(x: Matrix) -> tuple[Matrix, NormAnchor]:
    x = np.asarray(x)
    if x.size == 0 or x.shape[-1] == 0:
        raise ShapeError("instance_normalize needs a non-empty series")
    last = x[..., -1]
    return x - last[..., None], NormAnchor(last_value=last)


def instance_denormalize(y_norm: Matrix, anchor: NormAnchor) -> Matrix:
    return np.asarray(y_norm) + np.asarray(anchor.last_value)[..., None]


def segment_partition(x: Matrix, seg_len: int) -> Matrix:
    """Reshape a series of length L into (L/seg_len, seg_len) segment rows."""
    x = np.asarray(x)
    length = x.shape[-1]
    if seg_len < 1 or length % seg_len != 0:
        raise ConfigError(f"series length {length} not divisible by segment length {seg_len}")
    return x.reshape(x.shape[:-1] + (length // seg_len, seg_len))


# ---------------------------------------------------------------------------
# Dropout (inverted: scaling happens at train time, eval is the identity).

def _check_mode(mode: str) -> None:
    if mode not in (TRAIN, EVAL):
        raise ConfigError(f"mode must be '{TRAIN}' or '{EVAL}', got {mode!r}")


def _drop_scale(shape, rate: float, mode: str,
                rng: Optional[np.random.Generator], dtype) -> Optional[Matrix]:
    """Multiplier array mask/(1-rate), or None when dropout is inactive."""
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == EVAL or rate == 0.0:
        return None
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / (1.0 - rate)


def dropout(v: Matrix, rate: float, mode: str,
            rng: Optional[np.random.Generator] = None) -> Matrix:
    v = np.asarray(v)
    scale = _drop_scale(v.shape, rate, mode, rng, v.dtype)
    return v if scale is None else v * scale


# ---------------------------------------------------------------------------
# Positional embeddings.

def build_pe(j: int, channel: int, params: SegRnnParams, cfg: ModelConfig) -> Matrix:
    """Embedding for output segment j of a given channel: [rp_j | cp_channel]."""
    if not 0 <= j < cfg.m_segments:
        raise IndexError(f"segment index {j} out of range [0, {cfg.m_segments})")
    if not 0 <= channel < cfg.num_channels:
        raise IndexError(f"channel {channel} out of range [0, {cfg.num_channels})")
    half = cfg.hidden_dim // 2
    pe = np.zeros(cfg.hidden_dim, dtype=params.w_prj.dtype)
    if params.rp is not None:
        pe[:half] = params.rp[j]
    if params.cp is not None:
        pe[half:] = params.cp[channel]
    return pe


def _pe_batch(channels: np.ndarray, params: SegRnnParams, cfg: ModelConfig) -> Matrix:
    """(B, m, hidden_dim) embeddings for a batch of channel indices."""
    b = channels.shape[0]
    half = cfg.hidden_dim // 2
    pe = np.zeros((b, cfg.m_segments, cfg.hidden_dim), dtype=params.w_prj.dtype)
    if params.rp is not None:
        pe[:, :, :half] = params.rp[None, :, :]
    if params.cp is not None:
        pe[:, :, half:] = params.cp[channels][:, None, :]
    return pe


# ---------------------------------------------------------------------------
# Encoder.

@dataclass
class EncodeCache:
    segments: Matrix          # (B, n, seg_len)
    proj_pre: Matrix          # (B, n, hidden_dim), before ReLU
    enc_in: Matrix            # (B, n, hidden_dim), after ReLU
    steps: list[StepCache]
    state: Matrix             # (B, state_size)


def _encode_batch(x_norm: Matrix, params: SegRnnParams, cfg: ModelConfig) -> EncodeCache:
    segs = segment_partition(x_norm, cfg.seg_len)              # (B, n, w)
    proj_pre = segs @ params.w_prj.T + params.b_prj            # (B, n, d)
    enc_in = relu(proj_pre)
    b = x_norm.shape[0]
    state = np.zeros((b, state_size(params.cell)), dtype=x_norm.dtype)
    steps = []
    for t in range(cfg.n_segments):
        state, cache = cell_forward(params.cell, enc_in[:, t, :], state)
        steps.append(cache)
    return EncodeCache(segments=segs, proj_pre=proj_pre, enc_in=enc_in,
                       steps=steps, state=state)


def encode(x_norm: Matrix, params: SegRnnParams,
           cfg: ModelConfig) -> tuple[Matrix, EncodeCache]:
    """Project segments and run the recurrent encoder from a zero state.

    Returns the final recurrent state (the hidden vector itself for GRU/RNN,
    [h | c] for LSTM) and the cache needed for backpropagation through time.
    """
    x = np.asarray(x_norm)
    squeeze = x.ndim == 1
    cache = _encode_batch(x[None, :] if squeeze else x, params, cfg)
    return (cache.state[0] if squeeze else cache.state), cache


def _encode_backward(dstate: Matrix, cache: EncodeCache, params: SegRnnParams,
                     grads: dict[str, Matrix],
                     dlast_input: Optional[Matrix] = None) -> None:
    """Accumulate encoder gradients given d(loss)/d(final state).

    dlast_input, when present, is an extra gradient into the last projected
    segment (the RMF decoder reuses it as its first input).
    """
    denc_in = np.empty_like(cache.enc_in)
    for t in range(len(cache.steps) - 1, -1, -1):
        dx, dstate, dcell = cell_backward(params.cell, cache.steps[t], dstate)
        denc_in[:, t, :] = dx
        for k, v in dcell.items():
            grads[f"cell.{k}"] += v
    if dlast_input is not None:
        denc_in[:, -1, :] += dlast_input
    dproj = denc_in * (cache.proj_pre > 0)
    d = dproj.shape[-1]
    w = cache.segments.shape[-1]
    grads["w_prj"] += dproj.reshape(-1, d).T @ cache.segments.reshape(-1, w)
    grads["b_prj"] += dproj.reshape(-1, d).sum(axis=0)


# ---------------------------------------------------------------------------
# Decoders.

@dataclass
class PmfCache:
    channels: np.ndarray
    step: StepCache           # one folded step over (B*m) rows
    y_hidden_dropped: Matrix  # (B*m, d) after dropout
    drop_scale: Optional[Matrix]
    batch: int


@dataclass
class RmfCache:
    steps: list[StepCache]
    hidden_dropped: list[Matrix]   # per step, (B, d)
    drop_scales: list[Optional[Matrix]]
    seg_preds: list[Matrix]        # per step, (B, seg_len)
    reproj_pre: list[Matrix]       # pre-ReLU re-projections, per step j < m-1
    first_input_from_encoder: bool


def _decode_pmf_batch(state: Matrix, channels: np.ndarray, params: SegRnnParams,
                      cfg: ModelConfig, mode: str,
                      rng: Optional[np.random.Generator]) -> tuple[Matrix, PmfCache]:
    b = state.shape[0]
    m, d, w = cfg.m_segments, cfg.hidden_dim, cfg.seg_len
    pe = _pe_batch(channels, params, cfg).reshape(b * m, d)
    rep_state = np.repeat(state, m, axis=0)                    # (B*m, S)
    new_state, step = cell_forward(params.cell, pe, rep_state)
    y_hidden = hidden_part(params.cell, new_state)             # (B*m, d)
    scale = _drop_scale(y_hidden.shape, cfg.dropout_rate, mode, rng, y_hidden.dtype)
    y_dropped = y_hidden if scale is None else y_hidden * scale
    y_seg = y_dropped @ params.w_prd.T + params.b_prd          # (B*m, w)
    y = y_seg.reshape(b, m * w)
    return y, PmfCache(channels=channels, step=step, y_hidden_dropped=y_dropped,
                       drop_scale=scale, batch=b)


def _decode_pmf_backward(dy: Matrix, cache: PmfCache, params: SegRnnParams,
                         cfg: ModelConfig, grads: dict[str, Matrix]) -> Matrix:
    """Returns d(loss)/d(encoder final state), accumulated over the m copies."""
    b, m, d, w = cache.batch, cfg.m_segments, cfg.hidden_dim, cfg.seg_len
    dseg = dy.reshape(b * m, w)
    grads["w_prd"] += dseg.T @ cache.y_hidden_dropped
    grads["b_prd"] += dseg.sum(axis=0)
    dy_dropped = dseg @ params.w_prd
    dy_hidden = dy_dropped if cache.drop_scale is None else dy_dropped * cache.drop_scale
    dstate_step = np.zeros((b * m, state_size(params.cell)), dtype=dy_hidden.dtype)
    dstate_step[:, :d] = dy_hidden
    dpe, dstate_rep, dcell = cell_backward(params.cell, cache.step, dstate_step)
    for k, v in dcell.items():
        grads[f"cell.{k}"] += v
    half = d // 2
    dpe3 = dpe.reshape(b, m, d)
    if params.rp is not None:
        grads["rp"] += dpe3[:, :, :half].sum(axis=0)
    if params.cp is not None:
        np.add.at(grads["cp"], cache.channels, dpe3[:, :, half:].sum(axis=1))
    return dstate_rep.reshape(b, m, -1).sum(axis=1)


def _decode_rmf_batch(state: Matrix, first_input: Matrix, params: SegRnnParams,
                      cfg: ModelConfig, mode: str, rng: Optional[np.random.Generator],
                      first_input_from_encoder: bool = True) -> tuple[Matrix, RmfCache]:
    b = state.shape[0]
    m, w = cfg.m_segments, cfg.seg_len
    cache = RmfCache(steps=[], hidden_dropped=[], drop_scales=[], seg_preds=[],
                     reproj_pre=[], first_input_from_encoder=first_input_from_encoder)
    y = np.empty((b, m * w), dtype=state.dtype)
    inp = first_input
    for j in range(m):
        state, step = cell_forward(params.cell, inp, state)
        h = hidden_part(params.cell, state)
        scale = _drop_scale(h.shape, cfg.dropout_rate, mode, rng, h.dtype)
        h_dropped = h if scale is None else h * scale
        seg = h_dropped @ params.w_prd.T + params.b_prd
        y[:, j * w:(j + 1) * w] = seg
        cache.steps.append(step)
        cache.hidden_dropped.append(h_dropped)
        cache.drop_scales.append(scale)
        cache.seg_preds.append(seg)
        if j < m - 1:
            pre = seg @ params.w_prj.T + params.b_prj
            cache.reproj_pre.append(pre)
            inp = relu(pre)
    return y, cache


def _decode_rmf_backward(dy: Matrix, cache: RmfCache, params: SegRnnParams,
                         cfg: ModelConfig,
                         grads: dict[str, Matrix]) -> tuple[Matrix, Matrix]:
    """Returns (d/d(first input), d/d(encoder final state))."""
    b = dy.shape[0]
    m, d, w = cfg.m_segments, cfg.hidden_dim, cfg.seg_len
    dstate_carry = np.zeros((b, state_size(params.cell)), dtype=dy.dtype)
    dinp_carry: Optional[Matrix] = None
    for j in range(m - 1, -1, -1):
        dseg = dy[:, j * w:(j + 1) * w].copy()
        if dinp_carry is not None:
            # The next step's input was relu(W_prj @ seg_j + b).
            dpre = dinp_carry * (cache.reproj_pre[j] > 0)
            grads["w_prj"] += dpre.T @ cache.seg_preds[j]
            grads["b_prj"] += dpre.sum(axis=0)
            dseg += dpre @ params.w_prj
        grads["w_prd"] += dseg.T @ cache.hidden_dropped[j]
        grads["b_prd"] += dseg.sum(axis=0)
        dh = dseg @ params.w_prd
        if cache.drop_scales[j] is not None:
            dh = dh * cache.drop_scales[j]
        dstate = dstate_carry.copy()
        dstate[:, :d] += dh
        dinp_carry, dstate_carry, dcell = cell_backward(params.cell, cache.steps[j], dstate)
        for k, v in dcell.items():
            grads[f"cell.{k}"] += v
    assert dinp_carry is not None
    return dinp_carry, dstate_carry


def _coerce_state_channels(h_n, channel):
    state = np.asarray(h_n)
    squeeze = state.ndim == 1
    if squeeze:
        state = state[None, :]
        channels = np.asarray([channel], dtype=np.intp)
    else:
        channels = np.asarray(channel, dtype=np.intp)
        if channels.shape != (state.shape[0],):
            raise ShapeError(f"need one channel index per state row, got {channels.shape}")
    return state, channels, squeeze


def decode_pmf(h_n: Matrix, channel, params: SegRnnParams, cfg: ModelConfig,
               mode: str = EVAL, rng: Optional[np.random.Generator] = None
               ) -> tuple[Matrix, PmfCache]:
    """Parallel decoding: all output segments from the duplicated final state."""
    state, channels, squeeze = _coerce_state_channels(h_n, channel)
    y, cache = _decode_pmf_batch(state, channels, params, cfg, mode, rng)
    return (y[0] if squeeze else y), cache


def decode_rmf(h_n: Matrix, channel, params: SegRnnParams, cfg: ModelConfig,
               mode: str = EVAL, rng: Optional[np.random.Generator] = None,
               last_segment: Optional[Matrix] = None,
               first_input: Optional[Matrix] = None) -> tuple[Matrix, RmfCache]:
    """Recurrent decoding; the first step consumes the projected last look-back
    segment (or an explicit first_input override, used by equivalence tests)."""
    state, channels, squeeze = _coerce_state_channels(h_n, channel)
    if first_input is None:
        if last_segment is None:
            raise ConfigError("decode_rmf needs last_segment (or a first_input override)")
        seg = np.asarray(last_segment)
        if squeeze:
            seg = seg[None, :]
        if seg.shape != (state.shape[0], cfg.seg_len):
            raise ShapeError(f"last_segment must be (batch, {cfg.seg_len}), got {seg.shape}")
        inp = relu(seg @ params.w_prj.T + params.b_prj)
        from_encoder = True
    else:
        inp = np.asarray(first_input)
        if squeeze:
            inp = inp[None, :]
        from_encoder = False
    y, cache = _decode_rmf_batch(state, inp, params, cfg, mode, rng, from_encoder)
    return (y[0] if squeeze else y), cache


# ---------------------------------------------------------------------------
# End-to-end forward/backward and the public predict.

@dataclass
class ForwardCache:
    anchors: Matrix
    encode: EncodeCache
    decode: object  # PmfCache | RmfCache
    squeeze: bool = False


def forward_pipeline(x: Matrix, channel, params: SegRnnParams, cfg: ModelConfig,
                     mode: str = EVAL, rng: Optional[np.random.Generator] = None
                     ) -> tuple[Matrix, ForwardCache]:
    """normalize -> encode -> decode -> denormalize, keeping every cache."""
    _check_mode(mode)
    xb = np.asarray(x)
    squeeze = xb.ndim == 1
    if squeeze:
        xb = xb[None, :]
        channels = np.asarray([channel], dtype=np.intp)
    else:
        channels = np.asarray(channel, dtype=np.intp)
    if xb.shape[1] != cfg.lookback:
        raise ShapeError(f"input window length {xb.shape[1]} != lookback {cfg.lookback}")
    x_norm, anchor = instance_normalize(xb)
    enc = _encode_batch(x_norm, params, cfg)
    if cfg.decode_mode == PMF:
        y_norm, dec = _decode_pmf_batch(enc.state, channels, params, cfg, mode, rng)
    else:
        y_norm, dec = _decode_rmf_batch(enc.state, enc.enc_in[:, -1, :], params, cfg,
                                        mode, rng, first_input_from_encoder=True)
    pred = instance_denormalize(y_norm, anchor)
    cache = ForwardCache(anchors=anchor.last_value, encode=enc, decode=dec, squeeze=squeeze)
    return (pred[0] if squeeze else pred), cache


def backward_pipeline(dpred: Matrix, cache: ForwardCache, params: SegRnnParams,
                      cfg: ModelConfig) -> dict[str, Matrix]:
    """Parameter gradients given d(loss)/d(prediction). The additive anchor
    has gradient 1, so dpred passes straight to the decoder output."""
    dy = np.asarray(dpred)
    if cache.squeeze:
        dy = dy[None, :]
    grads = zero_param_grads(params)
    if isinstance(cache.decode, PmfCache):
        dstate = _decode_pmf_backward(dy, cache.decode, params, cfg, grads)
        _encode_backward(dstate, cache.encode, params, grads)
    else:
        dfirst, dstate = _decode_rmf_backward(dy, cache.decode, params, cfg, grads)
        if not cache.decode.first_input_from_encoder:
            dfirst = None
        _encode_backward(dstate, cache.encode, params, grads, dlast_input=dfirst)
    return grads


def predict(x: Matrix, channel, params: SegRnnParams, cfg: ModelConfig,
            mode: str = EVAL, rng: Optional[np.random.Generator] = None) -> Matrix:
    """Forecast the horizon for a look-back window (or a batch of them).

    Eval mode is deterministic: dropout is the identity and no rng is touched.
    """
    pred, _ = forward_pipeline(x, channel, params, cfg, mode, rng)
    return pred


# ---------------------------------------------------------------------------
# Checkpoint I/O (flat .npz container: named arrays + JSON config + version).

def save_checkpoint(path, params: SegRnnParams, cfg: ModelConfig) -> None:
    arrays = {k: v for k, v in named_params(params).items()}
    np.savez(path,
             __version__=np.int64(CHECKPOINT_VERSION),
             __config__=np.str_(json.dumps(cfg.to_dict())),
             **arrays)


def _expected_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, w = cfg.hidden_dim, cfg.seg_len
    shapes = {"w_prj": (d, w), "b_prj": (d,), "w_prd": (w, d), "b_prd": (w,)}
    gate_cols = 2 * d
    from .cells import _GATES
    for g in _GATES[cfg.cell]:
        shapes[f"cell.w_{g}"] = (d, gate_cols)
        shapes[f"cell.b_{g}"] = (d,)
    if cfg.use_relative_pe:
        shapes["rp"] = (cfg.m_segments, d // 2)
    if cfg.use_channel_pe:
        shapes["cp"] = (cfg.num_channels, d // 2)
    return shapes


def load_checkpoint(path) -> tuple[SegRnnParams, ModelConfig]:
    with np.load(path, allow_pickle=False) as zf:
        if "__version__" not in zf or "__config__" not in zf:
            raise DataFormatError(f"{path}: not a model checkpoint")
        version = int(zf["__version__"])
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        cfg = ModelConfig.from_dict(json.loads(str(zf["__config__"])))
        cfg.validate()
        arrays = {k: zf[k] for k in zf.files if not k.startswith("__")}
    expected = _expected_shapes(cfg)
    missing = sorted(set(expected) - set(arrays))
    extra = sorted(set(arrays) - set(expected))
    if missing or extra:
        raise DataFormatError(f"{path}: missing keys {missing}, unexpected keys {extra}")
    for k, shape in expected.items():
        if arrays[k].shape != shape:
            raise DataFormatError(f"{path}: {k} has shape {arrays[k].shape}, expected {shape}")
    cell = CellParams(cfg.cell, cfg.hidden_dim, cfg.hidden_dim,
                      {k.split(".", 1)[1]: arrays[k] for k in expected if k.startswith("cell.")})
    return SegRnnParams(
        w_prj=arrays["w_prj"], b_prj=arrays["b_prj"], cell=cell,
        rp=arrays.get("rp"), cp=arrays.get("cp"),
        w_prd=arrays["w_prd"], b_prd=arrays["b_prd"]), cfg
