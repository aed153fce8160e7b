"""Multi-stage text-to-image GAN with word-level tails and spatial memory refinement."""

from msmt.tensor import Tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "__version__"]
