"""Dense float64 kernels used by every cell update.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 (C order). The
helpers here add the shape checks and numerically stable forms the rest of
the package relies on; internally the cells use ``@`` directly so the same
code path serves single vectors and row-stacked batches.
"""

from __future__ import annotations

import math

import numpy as np

from gssfcap.errors import ConfigError, DomainError, ShapeError

DTYPE = np.float64


def as_tensor(x, ndim: int | None = None, name: str = "tensor") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    return arr


def matvec(W, x) -> np.ndarray:
    """``result[i] = sum_j W[i, j] * x[j]``."""
    W = as_tensor(W, 2, "W")
    x = as_tensor(x, 1, "x")
    if W.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: W has shape {W.shape}, x has shape {x.shape}")
    return W @ x


def hadamard(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return a * b


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    # exp of a non-positive argument only, so no overflow either way
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(y, axis: int = -1) -> np.ndarray:
    y = np.asarray(y, dtype=DTYPE)
    if y.size == 0 or y.shape[axis] == 0:
        raise DomainError("softmax of an empty vector")
    z = np.exp(y - y.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def log_softmax(y, axis: int = -1) -> np.ndarray:
    y = np.asarray(y, dtype=DTYPE)
    if y.size == 0 or y.shape[axis] == 0:
        raise DomainError("log_softmax of an empty vector")
    shifted = y - y.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def init_weights(rows: int, cols: int, scheme: str = "uniform", seed: int = 0,
                 value: float = 0.0) -> np.ndarray:
    """Deterministic weight matrix.

    ``scheme`` is ``"uniform"`` (Glorot range ``sqrt(6 / (rows + cols))``) or
    ``"constant"`` (every entry equal to ``value``).
    """
    if rows <= 0 or cols <= 0:
        raise ConfigError(f"init_weights: dimensions must be positive, got {rows}x{cols}")
    if scheme == "uniform":
        r = math.sqrt(6.0 / (rows + cols))
        rng = np.random.default_rng(seed)
        return rng.uniform(-r, r, size=(rows, cols))
    if scheme == "constant":
        return np.full((rows, cols), float(value), dtype=DTYPE)
    raise ConfigError(f"init_weights: unknown scheme {scheme!r}")
