"""Drag minimization of 2D obstacles in Stokes flow with local smoothing.

Modules: ``geometry`` (surfaces, O-grids), ``flow`` (primal/adjoint Stokes),
``cost`` (drag and shape gradient), ``symbols`` (Hessian symbol and its FD
check), ``smoothing`` (preconditioners), ``optimizer`` (design loop),
``config``/``cli`` (command line).
"""
from .cost import drag, shape_gradient
from .flow import FlowConfig, solve_adjoint, solve_states, solve_stokes
from .geometry import SurfaceCurve, build_ogrid, circle, obstacle_volume
from .optimizer import OptimizationConfig, compare, run

__version__ = "0.1.0"

__all__ = [
    "FlowConfig",
    "OptimizationConfig",
    "SurfaceCurve",
    "build_ogrid",
    "circle",
    "compare",
    "drag",
    "obstacle_volume",
    "run",
    "shape_gradient",
    "solve_adjoint",
    "solve_states",
    "solve_stokes",
]
