from .tensor import EngineError, NonFiniteError, ShapeError, Tensor
from .adam import AdamState, adam_step
from . import ops

__all__ = [
    "EngineError",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "AdamState",
    "adam_step",
    "ops",
]
