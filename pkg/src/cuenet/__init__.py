"""Three-class text classifier with cue attention and a context-aware focal loss."""

from cuenet.tensor import Tensor, Parameter, backward, no_grad

__all__ = ["Tensor", "Parameter", "backward", "no_grad"]

__version__ = "0.1.0"
