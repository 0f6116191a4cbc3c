"""Morse complexes of gradient flows on flat manifolds with corners.

The domain is a product of intervals and circles or a simple convex
polytope. A smooth function given as an expression string, together with a
constant metric, defines a modified gradient flow whose essential
stationary points and connecting trajectories form an integer chain
complex. Its homology is compared with the homology of the domain.
"""
from importlib import resources

__version__ = "0.1.0"

from .connect import build_complex, connecting_trajectories, degree, trajectory_sign  # noqa: E402
from .critical import CriticalPoint, find_critical_points  # noqa: E402
from .domain import Circle, Domain, Interval, StratumId  # noqa: E402
from .expr import eval_jet2, parse, pretty  # noqa: E402
from .field import Metric, modified_gradient, validate_morse  # noqa: E402
from .flow import flow_jacobian, flow_to_level, integrate, omega_limit  # noqa: E402
from .homology import expected_homology, homology, smith_normal_form, verify_chain  # noqa: E402
from .problem import Problem, load_problem, make_problem, problem_from_config  # noqa: E402

__all__ = [
    "Circle", "CriticalPoint", "Domain", "Interval", "Metric", "Problem", "StratumId",
    "build_complex", "connecting_trajectories", "degree", "eval_jet2",
    "expected_homology", "find_critical_points", "flow_jacobian", "flow_to_level",
    "homology", "integrate", "load_problem", "make_problem", "modified_gradient",
    "omega_limit", "parse", "pretty", "problem_from_config", "smith_normal_form",
    "trajectory_sign", "bundled_problems", "bundled_config", "validate_morse", "verify_chain",
]

BUNDLED = ("interval", "square", "cube", "simplex", "circle", "cylinder",
           "corner_cylinder", "torus")
NEGATIVE = ("square_x2", "torus_cos_x1")


def bundled_config(name: str):
    """Path-like handle of a bundled problem config."""
    return resources.files(__name__).joinpath("problems", f"{name}.json")


def bundled_problems() -> dict:
    """The acceptance problems by name, loaded and validated."""
    return {name: load_problem(bundled_config(name)) for name in BUNDLED}
