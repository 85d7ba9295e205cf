"""Numerical toolkit for Goldie-type functional equations on Popa groups."""

from .popa_core import LinearFunctional, PopaGroup, circle, inverse, eta
from .link import RadialParams, lambda_link, g_radial, ScalarHom, PopaParameter
from .index import AuxiliarySpec, g_eval, verify_M, verify_A
from .kernel import (
    RayKernel, LinearKernel, CompositeKernel, PerturbedKernel, kernel_from_json, verify_gfe,
)
from .sigma import build_sigma, build_sigma_A, build_sigma_B, decide_regime
from .gge import GgeTriple, classify_tetrachotomy, theorem5_reduce, verify_gge

__all__ = [
    "LinearFunctional", "PopaGroup", "circle", "inverse", "eta",
    "RadialParams", "lambda_link", "g_radial", "ScalarHom", "PopaParameter",
    "AuxiliarySpec", "g_eval", "verify_M", "verify_A",
    "RayKernel", "LinearKernel", "CompositeKernel", "PerturbedKernel", "kernel_from_json",
    "verify_gfe", "build_sigma", "build_sigma_A", "build_sigma_B", "decide_regime",
    "GgeTriple", "classify_tetrachotomy", "theorem5_reduce", "verify_gge",
]

__version__ = "0.1.0"
