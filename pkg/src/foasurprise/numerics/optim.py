"""Adam, gradient clipping, seeded orthonormal matrices and gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import InvalidDimensionError, NumericalError
from .tensor import Tensor


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(seed))


def orthonormal_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """Return a ``rows x cols`` matrix with orthonormal rows.

    The rows are the leading rows of the Q factor of a seeded square Gaussian
    matrix, with signs fixed so the triangular factor has a positive diagonal.
    """
    if rows < 1 or cols < 1 or rows > cols:
        raise InvalidDimensionError(f"need 1 <= rows <= cols, got {rows}x{cols}")
    gaussian = rng(seed).standard_normal((cols, cols))
    q, r = np.linalg.qr(gaussian)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs[np.newaxis, :]
    return np.ascontiguousarray(q[:rows])


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> OptimizerState:
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None],
              state: OptimizerState) -> tuple[list[np.ndarray], OptimizerState]:
    """One bias-corrected Adam update. ``None`` gradients count as zero."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidDimensionError("params, grads and optimizer state differ in length")
    step = state.step + 1
    c1 = 1.0 - state.beta1 ** step
    c2 = 1.0 - state.beta2 ** step
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise InvalidDimensionError(f"shape mismatch {p.shape} vs grad {g.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append(p - update)
        new_m.append(m)
        new_v.append(v)
    new_state = OptimizerState(state.lr, state.beta1, state.beta2, state.eps, step, new_m, new_v)
    return new_params, new_state


def clip_grad_norm(grads: list[np.ndarray | None], max_norm: float) -> float:
    """Scale ``grads`` in place so their global norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads if g is not None)))
    if not np.isfinite(total):
        raise NumericalError("non-finite gradient norm")
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for i, g in enumerate(grads):
            if g is not None:
                grads[i] = g * scale
    return total


def grad_check(function: Callable[[Tensor], Tensor], point: np.ndarray, epsilon: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``function`` maps a tensor shaped like ``point`` to a scalar tensor. The
    error per coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise InvalidDimensionError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    point = np.array(point, dtype=np.float64)
    x = Tensor(point.copy(), requires_grad=True)
    out = function(x)
    if out.size != 1:
        raise InvalidDimensionError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(point)

    numeric = np.zeros_like(point)
    flat = point.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        f_plus = function(Tensor(point)).item()
        flat[i] = orig - epsilon
        f_minus = function(Tensor(point)).item()
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError("non-finite function value during finite differences")
        numeric.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * epsilon)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
