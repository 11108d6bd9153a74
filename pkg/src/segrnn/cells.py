"""Recurrent cell steps with exact analytic backward passes.

The GRU is the default cell; vanilla RNN and LSTM variants exist for the
cell ablation.  Each gate weight matrix is shaped
(hidden_dim, input_dim + hidden_dim) and acts on the concatenation
[h_prev, x] (hidden block first), with a per-gate bias.

All step functions accept a single sample (1-D arrays) or a batch
(2-D arrays, one row per sample) and are pure: parameters are never
mutated, and every intermediate needed for the backward pass is returned
in a StepCache.

The recurrent state passed between steps has length ``state_size(params)``:
the hidden vector itself for GRU/RNN, and the concatenation [h, c] of
hidden and cell-memory vectors for LSTM (both halves are carried so that
decoding can re-seed the recurrence from a stored state).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConsistencyError, ShapeError
from .numerics import Matrix, init_uniform, sigmoid, tanh


class CellKind(Enum):
    GRU = "gru"
    RNN = "rnn"
    LSTM = "lstm"


# Gate weight names per kind; each has a matching b_* bias vector.
_GATES = {
    CellKind.GRU: ("z", "r", "h"),        # update, reset, candidate
    CellKind.RNN: ("h",),                 # single candidate gate
    CellKind.LSTM: ("i", "f", "g", "o"),  # input, forget, candidate, output
}


@dataclass
class CellParams:
    kind: CellKind
    input_dim: int
    hidden_dim: int
    weights: dict[str, Matrix]  # "w_<gate>": (hidden, input+hidden), "b_<gate>": (hidden,)

    def gate_names(self):
        return _GATES[self.kind]


@dataclass
class StepCache:
    """Intermediates of one cell step, sufficient for the exact backward pass."""
    kind: CellKind
    x: Matrix
    state_prev: Matrix
    inter: dict[str, Matrix] = field(default_factory=dict)


def init_cell(kind: CellKind, input_dim: int, hidden_dim: int,
              rng: np.random.Generator, dtype=np.float64) -> CellParams:
    """Fan-in-scaled uniform weights, zero biases, gates in a fixed order."""
    weights: dict[str, Matrix] = {}
    for g in _GATES[kind]:
        weights[f"w_{g}"] = init_uniform(hidden_dim, input_dim + hidden_dim, rng, dtype)
        weights[f"b_{g}"] = np.zeros(hidden_dim, dtype=dtype)
    return CellParams(kind=kind, input_dim=input_dim, hidden_dim=hidden_dim, weights=weights)


def state_size(p: CellParams) -> int:
    """Length of the recurrent state vector (2x hidden for LSTM's [h, c])."""
    return 2 * p.hidden_dim if p.kind is CellKind.LSTM else p.hidden_dim


def initial_state(p: CellParams, dtype=np.float64) -> Matrix:
    return np.zeros(state_size(p), dtype=dtype)


def hidden_part(p: CellParams, state: Matrix) -> Matrix:
    """The hidden vector h within a state ([..., :hidden] for LSTM)."""
    return state[..., : p.hidden_dim]


def parameter_count(p: CellParams) -> int:
    return sum(w.size for w in p.weights.values())


def _as_batch(v: Matrix, dim: int, name: str) -> tuple[Matrix, bool]:
    v = np.asarray(v)
    if v.ndim == 1:
        if v.shape[0] != dim:
            raise ShapeError(f"{name} has length {v.shape[0]}, expected {dim}")
        return v[None, :], True
    if v.ndim == 2:
        if v.shape[1] != dim:
            raise ShapeError(f"{name} has {v.shape[1]} columns, expected {dim}")
        return v, False
    raise ShapeError(f"{name} must be 1-D or 2-D, got shape {v.shape}")


def cell_forward(p: CellParams, x_t: Matrix, state_prev: Matrix) -> tuple[Matrix, StepCache]:
    """One recurrent step; returns the next state and the backward cache."""
    x, squeeze_x = _as_batch(x_t, p.input_dim, "x_t")
    s, squeeze_s = _as_batch(state_prev, state_size(p), "state_prev")
    if x.shape[0] != s.shape[0]:
        raise ShapeError(f"batch mismatch: x_t rows {x.shape[0]} vs state rows {s.shape[0]}")
    squeeze = squeeze_x and squeeze_s
    w = p.weights
    hd = p.hidden_dim

    if p.kind is CellKind.GRU:
        h_prev = s
        hx = np.concatenate([h_prev, x], axis=1)
        z = sigmoid(hx @ w["w_z"].T + w["b_z"])
        r = sigmoid(hx @ w["w_r"].T + w["b_r"])
        rhx = np.concatenate([r * h_prev, x], axis=1)
        hbar = tanh(rhx @ w["w_h"].T + w["b_h"])
        h = (1.0 - z) * h_prev + z * hbar
        cache = StepCache(p.kind, x, s, {"hx": hx, "rhx": rhx, "z": z, "r": r, "hbar": hbar})
        out = h
    elif p.kind is CellKind.RNN:
        h_prev = s
        hx = np.concatenate([h_prev, x], axis=1)
        h = tanh(hx @ w["w_h"].T + w["b_h"])
        cache = StepCache(p.kind, x, s, {"hx": hx, "h": h})
        out = h
    else:  # LSTM: state is [h, c]
        h_prev, c_prev = s[:, :hd], s[:, hd:]
        hx = np.concatenate([h_prev, x], axis=1)
        i = sigmoid(hx @ w["w_i"].T + w["b_i"])
        f = sigmoid(hx @ w["w_f"].T + w["b_f"])
        g = tanh(hx @ w["w_g"].T + w["b_g"])
        o = sigmoid(hx @ w["w_o"].T + w["b_o"])
        c = f * c_prev + i * g
        tc = tanh(c)
        h = o * tc
        cache = StepCache(p.kind, x, s, {"hx": hx, "i": i, "f": f, "g": g, "o": o, "tc": tc})
        out = np.concatenate([h, c], axis=1)

    return (out[0] if squeeze else out), cache


def _check_cache(p: CellParams, cache: StepCache) -> None:
    if cache.kind is not p.kind:
        raise ConsistencyError(f"cache built for {cache.kind}, params are {p.kind}")
    if cache.x.shape[1] != p.input_dim or cache.state_prev.shape[1] != state_size(p):
        raise ConsistencyError(
            f"cache dims (x {cache.x.shape[1]}, state {cache.state_prev.shape[1]}) "
            f"do not match params (input {p.input_dim}, state {state_size(p)})")


def cell_backward(p: CellParams, cache: StepCache,
                  dstate: Matrix) -> tuple[Matrix, Matrix, dict[str, Matrix]]:
    """Gradients of a scalar loss through one step, given d(loss)/d(state_t).

    Returns (dx_t, dstate_prev, dparams) where dparams mirrors p.weights.
    """
    _check_cache(p, cache)
    ds, squeeze = _as_batch(dstate, state_size(p), "dstate")
    if ds.shape[0] != cache.x.shape[0]:
        raise ConsistencyError(
            f"dstate rows {ds.shape[0]} do not match cached batch {cache.x.shape[0]}")
    w = p.weights
    hd = p.hidden_dim
    c = cache.inter

    if p.kind is CellKind.GRU:
        h_prev = cache.state_prev
        z, r, hbar = c["z"], c["r"], c["hbar"]
        dh = ds
        dz = dh * (hbar - h_prev)
        dhbar = dh * z
        dh_prev = dh * (1.0 - z)
        da_h = dhbar * (1.0 - hbar * hbar)
        da_z = dz * z * (1.0 - z)
        drhx = da_h @ w["w_h"]  # gradient w.r.t. [r*h_prev, x]
        da_r = drhx[:, :hd] * h_prev * r * (1.0 - r)
        dh_prev = dh_prev + drhx[:, :hd] * r
        dx = drhx[:, hd:].copy()
        dhx = da_r @ w["w_r"] + da_z @ w["w_z"]
        dh_prev = dh_prev + dhx[:, :hd]
        dx += dhx[:, hd:]
        dparams = {
            "w_z": da_z.T @ c["hx"], "b_z": da_z.sum(axis=0),
            "w_r": da_r.T @ c["hx"], "b_r": da_r.sum(axis=0),
            "w_h": da_h.T @ c["rhx"], "b_h": da_h.sum(axis=0),
        }
        dstate_prev = dh_prev
    elif p.kind is CellKind.RNN:
        h = c["h"]
        da = ds * (1.0 - h * h)
        dhx = da @ w["w_h"]
        dstate_prev = dhx[:, :hd].copy()
        dx = dhx[:, hd:].copy()
        dparams = {"w_h": da.T @ c["hx"], "b_h": da.sum(axis=0)}
    else:  # LSTM
        c_prev = cache.state_prev[:, hd:]
        i, f, g, o, tc = c["i"], c["f"], c["g"], c["o"], c["tc"]
        dh, dc_up = ds[:, :hd], ds[:, hd:]
        do = dh * tc
        dc = dc_up + dh * o * (1.0 - tc * tc)
        da_i = dc * g * i * (1.0 - i)
        da_f = dc * c_prev * f * (1.0 - f)
        da_g = dc * i * (1.0 - g * g)
        da_o = do * o * (1.0 - o)
        dc_prev = dc * f
        dhx = da_i @ w["w_i"] + da_f @ w["w_f"] + da_g @ w["w_g"] + da_o @ w["w_o"]
        dh_prev = dhx[:, :hd]
        dx = dhx[:, hd:].copy()
        dparams = {
            "w_i": da_i.T @ c["hx"], "b_i": da_i.sum(axis=0),
            "w_f": da_f.T @ c["hx"], "b_f": da_f.sum(axis=0),
            "w_g": da_g.T @ c["hx"], "b_g": da_g.sum(axis=0),
            "w_o": da_o.T @ c["hx"], "b_o": da_o.sum(axis=0),
        }
        dstate_prev = np.concatenate([dh_prev, dc_prev], axis=1)

    if squeeze:
        return dx[0], dstate_prev[0], dparams
    return dx, dstate_prev, dparams


def sequence_forward(p: CellParams, inputs, state0: Matrix) -> tuple[Matrix, list[StepCache]]:
    """Chain cell_forward over a non-empty sequence of step inputs."""
    if len(inputs) == 0:
        raise ShapeError("sequence_forward needs at least one input step")
    state = state0
    caches = []
    for x_t in inputs:
        state, cache = cell_forward(p, x_t, state)
        caches.append(cache)
    return state, caches


def sequence_backward(p: CellParams, caches: list[StepCache],
                      dstate_n: Matrix) -> tuple[list[Matrix], Matrix, dict[str, Matrix]]:
    """BPTT over sequence_forward: upstream gradient enters at the final state only.

    Parameter gradients are accumulated over all steps.
    """
    if not caches:
        raise ConsistencyError("sequence_backward got no caches")
    dparams = zero_grads(p)
    dinputs: list[Matrix] = [None] * len(caches)  # type: ignore[list-item]
    dstate = dstate_n
    for t in range(len(caches) - 1, -1, -1):
        dx, dstate, dp = cell_backward(p, caches[t], dstate)
        dinputs[t] = dx
        for k, v in dp.items():
            dparams[k] += v
    return dinputs, dstate, dparams


def zero_grads(p: CellParams) -> dict[str, Matrix]:
    return {k: np.zeros_like(v) for k, v in p.weights.items()}
