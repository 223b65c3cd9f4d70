"""Numerical substrate: float64 tensors with reverse-mode gradients,
Adam, seeded random streams and a finite-difference gradient checker."""
from . import tensor as ops
from .gradcheck import GradCheckError, grad_check
from .nn import ParamStore, activation, cross_entropy, linear, lstm_cell
from .optim import Adam
from .rng import Rng, gumbel_from_uniform, gumbel_noise
from .tensor import Tensor, no_grad

__all__ = [
    "Adam",
    "GradCheckError",
    "ParamStore",
    "Rng",
    "Tensor",
    "activation",
    "cross_entropy",
    "grad_check",
    "gumbel_from_uniform",
    "gumbel_noise",
    "linear",
    "lstm_cell",
    "no_grad",
    "ops",
]
