"""Deep material network: a binary tree of rotated two-phase laminates used
as a surrogate for the homogenized response of a two-phase microstructure.

Submodules
----------
mandel     Mandel notation, isotropic stiffness and rotations
network    parameters, weight propagation, transfer between volume fractions
block      laminate building block and batched forward/backward passes
training   loss, gradient, SGD loop and synthetic data
materials  elastic and J2 leaf laws
online     incremental nonlinear prediction
oracles    slow independent reference solutions
cli        command-line entry point
"""
from .network import DmnParams, phase_volume_fractions
from .block import forward, homogenize_pair

__version__ = "0.1.0"

__all__ = ["DmnParams", "forward", "homogenize_pair", "phase_volume_fractions", "__version__"]
