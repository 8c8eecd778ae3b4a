"""Dense kernels shared by the recurrent cells and the classifier head.

Everything is float64.  Shape mismatches raise immediately instead of
broadcasting; silent broadcasts here would corrupt gradients downstream.
"""

import numpy as np


def _check_vector(name, v, dim):
    if v.shape != (dim,):
        raise ValueError(f"{name}: expected shape ({dim},), got {v.shape}")


def affine(W: np.ndarray, x: np.ndarray, R: np.ndarray, h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """W @ x + R @ h + b, the shared inner form of every gate."""
    if W.ndim != 2 or R.ndim != 2:
        raise ValueError(f"affine: W and R must be matrices, got {W.shape} and {R.shape}")
    H, D = W.shape
    if R.shape != (H, H):
        raise ValueError(f"affine: R shape {R.shape} incompatible with W shape {W.shape}")
    _check_vector("affine: x", x, D)
    _check_vector("affine: h", h, H)
    _check_vector("affine: b", b, H)
    return W @ x + R @ h + b


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+e^-x), stable for large |x| (no overflow in exp)."""
    out = np.empty_like(v, dtype=np.float64)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh(v: np.ndarray) -> np.ndarray:
    return np.tanh(v)


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def log_softmax(v: np.ndarray) -> np.ndarray:
    """v - logsumexp(v) with the max shifted out before exponentiation."""
    m = np.max(v)
    shifted = v - m
    return shifted - np.log(np.sum(np.exp(shifted)))
