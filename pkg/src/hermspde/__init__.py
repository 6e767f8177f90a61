"""Translation-invariant SPDEs on truncated Hermite-Sobolev spaces."""
from .hermite import (
    TruncationScheme,
    derivative_matrix,
    gauss_hermite_rule,
    hermite_eval,
    project_function,
)
from .kernels import BACKEND
from .operators import CoefficientField, DualPairing, PointEval, ScalarMap, apply_A, apply_L
from .sde import NoiseDriver, characteristic_Z, euler_maruyama
from .sobolev import (
    SpectralElement,
    delta_element,
    dual_pairing,
    evaluate,
    fourier_transform,
    sobolev_norm,
    translate,
)
from .spde import solve_picard, solve_translation

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CoefficientField", "DualPairing", "NoiseDriver", "PointEval", "ScalarMap", "SpectralElement",
    "TruncationScheme", "apply_A", "apply_L", "characteristic_Z", "delta_element", "derivative_matrix",
    "dual_pairing", "euler_maruyama", "evaluate", "fourier_transform", "gauss_hermite_rule", "hermite_eval",
    "project_function", "sobolev_norm", "solve_picard", "solve_translation", "translate",
]
