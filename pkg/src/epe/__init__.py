"""Reconcile building energy simulations with measured data through heat-flow parameter estimation."""
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
