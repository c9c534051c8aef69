"""Amortized physics-informed inversion for steady Darcy flow.

The heavy lifting lives in the compiled extension: KL random-field
generation, the differentiable five-point pressure solver with discrete
adjoints, from-scratch MLP training, and the evaluation / rare-event
pipeline.
"""

from ._core import *  # noqa: F401,F403

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
