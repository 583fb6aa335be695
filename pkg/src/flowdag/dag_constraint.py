"""Jacobian-derived adjacency and the smooth acyclicity functionals.

Edge strength from input k to output j is the root-mean-square over the
batch of the composed flow Jacobian entry dN_j/dX_k. The diagonal (noise
recovery, nonzero by construction) is excluded: it is not an edge, and
keeping it would make the acyclicity constraint unsatisfiable. Acyclicity is
scored either as tr(exp(W o W)) - d or as the polynomial
tr[(I + alpha W o W)^d] - d; both vanish exactly on acyclic supports and are
strictly positive otherwise.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import linalg
from .autodiff import Tensor

__all__ = [
    "SQRT_EPS",
    "jacobian_to_adjacency",
    "validate_weighted_adjacency",
    "h_exp",
    "h_exp_grad",
    "h_poly",
]

# added inside the square root so the RMS stays differentiable at zero
SQRT_EPS = 1e-12


def _as_jacobian_tensor(jacobians) -> Tensor:
    if isinstance(jacobians, Tensor):
        t = jacobians
    else:
        arr = np.asarray(jacobians, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        t = ad.constant(arr)
    if t.data.ndim != 3 or t.data.shape[1] != t.data.shape[2]:
        raise ValueError(f"expected a (batch, d, d) Jacobian stack, got {t.data.shape}")
    if t.data.shape[0] == 0:
        raise ValueError("empty Jacobian batch")
    return t


def jacobian_to_adjacency(jacobians) -> Tensor:
    """Weighted adjacency W[k, j] = rms over samples of dN_j/dX_k, zero diagonal.

    Accepts the (batch, d, d) tensor produced by the flow (stays on tape and
    differentiable) or any array-like stack of per-sample Jacobians.
    """
    jac = _as_jacobian_tensor(jacobians)
    d = jac.data.shape[1]
    mean_sq = ad.tmean(ad.square(jac), axis=0)  # [j, k] layout
    w = ad.sqrt(ad.add(ad.transpose(mean_sq), ad.constant(SQRT_EPS)))
    off_diag = 1.0 - np.eye(d)
    return ad.mul(w, ad.constant(off_diag))


def validate_weighted_adjacency(w) -> np.ndarray:
    w = w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
    w = linalg.as_matrix(w, "weighted adjacency")
    if w.shape[0] != w.shape[1]:
        raise ValueError(f"weighted adjacency must be square, got {w.shape}")
    if (w < 0).any():
        raise ValueError("weighted adjacency must be nonnegative")
    if np.abs(np.diag(w)).max(initial=0.0) != 0.0:
        raise ValueError("weighted adjacency must have a zero diagonal")
    return w


def h_exp(w) -> Tensor:
    """Acyclicity value tr(exp(W o W)) - d; zero iff the support is acyclic."""
    w = w if isinstance(w, Tensor) else ad.constant(np.asarray(w, dtype=np.float64))
    d = w.data.shape[0]
    return ad.sub(ad.trace_of_matrix_exp(ad.square(w)), ad.constant(float(d)))


def h_exp_grad(w) -> np.ndarray:
    """Closed-form gradient exp(W o W)^T o 2W (not tape-mediated)."""
    w = w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
    e = linalg.matrix_exp(w * w)
    return e.T * (2.0 * w)


def h_poly(w, alpha: float | None = None) -> Tensor:
    """Polynomial acyclicity value tr[(I + alpha W o W)^d] - d, alpha > 0.

    Default alpha = 1/d, numerically tamer than the exponential form for
    larger d. Expressed in tape primitives, so it is a drop-in alternative to
    h_exp on the constraint path.
    """
    w = w if isinstance(w, Tensor) else ad.constant(np.asarray(w, dtype=np.float64))
    d = w.data.shape[0]
    if alpha is None:
        alpha = 1.0 / d
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    m = ad.add(ad.constant(np.eye(d)), ad.mul(ad.square(w), ad.constant(float(alpha))))
    p = m
    for _ in range(d - 1):
        p = ad.matmul(p, m)
    return ad.sub(ad.trace(p), ad.constant(float(d)))
