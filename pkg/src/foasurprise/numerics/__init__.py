from .optim import OptimizerState, adam_step, clip_grad_norm, grad_check, orthonormal_matrix, rng
from .tensor import Tape, Tensor, as_tensor, concat, cross, einsum, logsumexp, matmul, stack

__all__ = [
    "OptimizerState", "Tape", "Tensor", "adam_step", "as_tensor", "clip_grad_norm", "concat",
    "cross", "einsum", "grad_check", "logsumexp", "matmul", "orthonormal_matrix", "rng", "stack",
]
