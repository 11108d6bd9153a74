"""Dense numeric primitives: checked matmul, activations, seeded initialization.

Arrays are plain C-contiguous numpy ndarrays in row-major order, float64 by
default (float32 is available for timing runs).  A naive triple-loop matmul
is kept alongside the vectorized path and serves as its correctness oracle.
All functions are pure; random state lives in an explicit generator that the
caller owns.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

# The universal numeric carrier: a 2-D (or, where stated, 1-D) ndarray.
Matrix = np.ndarray

DEFAULT_DTYPE = np.float64


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; identical seed gives a bit-identical stream."""
    return np.random.default_rng(seed)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit conformability check."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_reference(a: Matrix, b: Matrix) -> Matrix:
    """Triple-loop matmul, the slow oracle for the vectorized path."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m), dtype=np.result_type(a, b))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def sigmoid(x: Matrix) -> Matrix:
    # exp is only ever taken of a non-positive value, so it cannot overflow.
    x = np.asarray(x)
    pos = x >= 0
    ex = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def tanh(x: Matrix) -> Matrix:
    return np.tanh(x)


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0.0)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def apply_activation(m: Matrix, kind: str) -> Matrix:
    """Elementwise activation; kind is one of 'sigmoid', 'tanh', 'relu'."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(np.asarray(m))


def init_uniform(rows: int, cols: int, rng: np.random.Generator,
                 dtype=DEFAULT_DTYPE) -> Matrix:
    """Fan-in-scaled uniform draw in [-k, k] with k = 1/sqrt(cols)."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"init_uniform needs positive dims, got ({rows}, {cols})")
    k = 1.0 / np.sqrt(cols)
    return rng.uniform(-k, k, size=(rows, cols)).astype(dtype)
