from .tensor import Tensor, no_grad
from .optim import Adam, AdamState, adam_step
from . import functional

__all__ = ["Tensor", "no_grad", "Adam", "AdamState", "adam_step", "functional"]
