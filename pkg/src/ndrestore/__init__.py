"""All-in-one image restoration with a learnable degradation dictionary."""

from .tensor import Tensor, no_grad
from .ndr import NdrDictionary, DqModule, DiModule, CpConv
from .model import RestoreModel, DegradeModel, count_params

__all__ = [
    "Tensor",
    "no_grad",
    "NdrDictionary",
    "DqModule",
    "DiModule",
    "CpConv",
    "RestoreModel",
    "DegradeModel",
    "count_params",
]

__version__ = "0.1.0"
