"""Adaptive mixed finite elements (Hu-Zhang, k = 3) for planar linear elasticity."""
from .adapt import AdaptConfig, Problem, adaptive_loop, dorfler_mark
from .elements import Compliance
from .estimator import estimate
from .mesh import Mesh, bisect, load_mesh, uniform_refine
from .postprocess import postprocess_displacement
from .system import assemble, solve

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "Compliance",
    "Mesh",
    "Problem",
    "adaptive_loop",
    "assemble",
    "bisect",
    "dorfler_mark",
    "estimate",
    "load_mesh",
    "postprocess_displacement",
    "solve",
    "uniform_refine",
]
