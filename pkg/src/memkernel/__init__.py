"""Completely positive memory-kernel master equations.

Build kernels that are guaranteed to give CP unital dynamics, integrate the
resulting Volterra equations and certify the computed maps.
"""
from memkernel.algebra import GkslSpec, SuperOp, choi, cp_defect, dual, expm, gksl_generator, unitality_defect
from memkernel.kernels import KernelSpec, make_scalar_cp_kernel, z_from_F
from memkernel.memory import Erlang, Samples, Zero, kappa_from_f
from memkernel.volterra import TimeGrid, evolve, extract_G, kernel_from_G, solve_normalization

__all__ = [
    "Erlang",
    "GkslSpec",
    "KernelSpec",
    "Samples",
    "SuperOp",
    "TimeGrid",
    "Zero",
    "choi",
    "cp_defect",
    "dual",
    "evolve",
    "expm",
    "extract_G",
    "gksl_generator",
    "kappa_from_f",
    "kernel_from_G",
    "make_scalar_cp_kernel",
    "solve_normalization",
    "unitality_defect",
    "z_from_F",
]
