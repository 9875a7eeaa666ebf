"""Explicit families of CP unital dynamics and their kernels.

* convex mixtures of semigroups ``A_t = sum_j x_j exp(t L_j)``, with the
  closed-form kernels for two and three commuting generators;
* time-dependent mixtures ``A_t = I (1 - sum int x_j) + sum int x_j(s) exp(s L_j) ds``;
* reduced dynamics of a system-environment semigroup,
  ``A_t(a) = tr_E[(1 x omega) exp(tL)(a x 1)]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from memkernel import algebra
from memkernel.algebra import GkslSpec, SuperOp
from memkernel.errors import InvalidInputError, PoleError
from memkernel.kernels import ExponentialMemory, KernelSpec
from memkernel.memory import MemoryFunction, trapezoid_cumulative
from memkernel.volterra import EvolutionTrace, TimeGrid


def _mats(gens) -> list[np.ndarray]:
    return [g.matrix if isinstance(g, SuperOp) else np.asarray(g, dtype=complex) for g in gens]


def _check_generators(gens, tol):
    for j, L in enumerate(gens):
        u = float(algebra.generator_unitality_defect(L))
        if u > tol:
            raise InvalidInputError(f"generator {j} does not annihilate the identity: ||L(1)|| = {u:.3e}")


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    weights: Sequence[float]
    generators: Sequence[SuperOp]
    tol: float = 1e-8

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.generators) or w.size == 0:
            raise InvalidInputError("need one weight per generator")
        if np.any(w < 0):
            raise InvalidInputError("mixture weights must be nonnegative")
        if abs(w.sum() - 1) > 1e-12:
            raise InvalidInputError(f"mixture weights sum to {w.sum()!r}, not 1")
        gens = _mats(self.generators)
        if len({g.shape for g in gens}) != 1:
            raise InvalidInputError("generators have different dimensions")
        _check_generators(gens, self.tol)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self) -> int:
        return algebra._sqrt_dim(self.generators[0].shape[0])


def mixture_evolution(spec: MixtureSpec, grid: TimeGrid) -> EvolutionTrace:
    maps = sum(x * algebra.expm_stack(L, grid.times) for x, L in zip(spec.weights, spec.generators))
    return EvolutionTrace.from_maps(grid, maps)


def mixture_G(spec: MixtureSpec, grid: TimeGrid) -> np.ndarray:
    """Exact derivative ``G_t = sum_j x_j L_j exp(t L_j)``."""
    return sum(x * L @ algebra.expm_stack(L, grid.times) for x, L in zip(spec.weights, spec.generators))


def _commuting(gens, what):
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            gate = 1e-10 * max(np.linalg.norm(gens[i]) * np.linalg.norm(gens[j]), 1e-300)
            c = algebra.commutator_norm(gens[i], gens[j])
            if c > gate:
                raise InvalidInputError(f"{what}: generators {i} and {j} do not commute (||[Li, Lj]|| = {c:.3e})")


def mixture_kernel_n2(x1: float, x2: float, L1, L2) -> KernelSpec:
    """Kernel of ``x1 exp(t L1) + x2 exp(t L2)`` for commuting ``L1``, ``L2``.

    Local part ``x1 L1 + x2 L2``; memory part
    ``x1 x2 (L1 - L2)^2 exp(t (x1 L2 + x2 L1))``, the inverse transform of
    ``x1 x2 (L1 - L2)^2 (p - (x1 L2 + x2 L1))^-1``.
    """
    L1, L2 = _mats([L1, L2])
    if min(x1, x2) < 0 or abs(x1 + x2 - 1) > 1e-12:
        raise InvalidInputError(f"weights ({x1}, {x2}) must be nonnegative and sum to 1")
    _commuting([L1, L2], "mixture_kernel_n2")
    diff = L1 - L2
    memory = ExponentialMemory(x1 * x2 * diff @ diff, x1 * L2 + x2 * L1)
    return KernelSpec(algebra._sqrt_dim(L1.shape[0]), x1 * L1 + x2 * L2, memory)


def mixture_kernel_n2_hat(x1: float, x2: float, L1, L2, p: float) -> np.ndarray:
    L1, L2 = _mats([L1, L2])
    _commuting([L1, L2], "mixture_kernel_n2_hat")
    diff = L1 - L2
    eye = np.eye(L1.shape[0])
    return x1 * L1 + x2 * L2 + x1 * x2 * diff @ diff @ np.linalg.inv(p * eye - (x1 * L2 + x2 * L1))


def mixture_kernel_n3_hat(x: Sequence[float], L1, L2, L3, p: float) -> np.ndarray:
    """Laplace-domain kernel of a three-component commuting mixture."""
    L1, L2, L3 = _mats([L1, L2, L3])
    x1, x2, x3 = (float(v) for v in x)
    if min(x1, x2, x3) < 0 or abs(x1 + x2 + x3 - 1) > 1e-12:
        raise InvalidInputError(f"weights {tuple(x)} must be nonnegative and sum to 1")
    _commuting([L1, L2, L3], "mixture_kernel_n3_hat")
    eye = np.eye(L1.shape[0])
    L = x1 * L1 + x2 * L2 + x3 * L3
    cross = x1 * L2 @ L3 + x2 * L1 @ L3 + x3 * L1 @ L2
    B = p * (x1 * L1 @ L1 + x2 * L2 @ L2 + x3 * L3 @ L3 - L @ L) + L1 @ L2 @ L3 - L @ cross
    C = p * p * eye - p * (L1 + L2 + L3 - L) + cross
    smin = np.linalg.svd(C, compute_uv=False)[-1]
    if smin < 1e-12 * max(1.0, np.linalg.norm(C)):
        raise PoleError(f"denominator is singular at p={p}")
    return L + B @ np.linalg.inv(C)


@dataclass(frozen=True, eq=False)
class TimeMixtureSpec:
    weights: Sequence[MemoryFunction]
    generators: Sequence[SuperOp]
    tol: float = 1e-8

    def __post_init__(self):
        if len(self.weights) != len(self.generators) or not self.weights:
            raise InvalidInputError("need one weight function per generator")
        gens = _mats(self.generators)
        _check_generators(gens, self.tol)
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self) -> int:
        return algebra._sqrt_dim(self.generators[0].shape[0])


@dataclass(frozen=True, eq=False)
class TimeMixtureResult:
    trace: EvolutionTrace
    G: np.ndarray
    weight_integral: float


def time_mixture_evolution(spec: TimeMixtureSpec, grid: TimeGrid) -> TimeMixtureResult:
    """Trapezoid evaluation of the time-dependent mixture and its exact ``G_t``."""
    t, h = grid.times, grid.step
    D = spec.generators[0].shape[0]
    eye = np.eye(D)
    xs = [np.asarray(w.sample(t), dtype=float) for w in spec.weights]
    for j, x in enumerate(xs):
        if np.any(x < -spec.tol):
            raise InvalidInputError(f"weight function {j} is negative (min {x.min():.3e})")
    total = sum(trapezoid_cumulative(x, h) for x in xs) if grid.count > 1 else np.zeros(1)
    if total[-1] > 1 + spec.tol:
        raise InvalidInputError(f"weight functions integrate to {total[-1]:.6g} > 1 on [0, {grid.horizon}]")
    maps = (1 - total)[:, None, None] * eye
    G = np.zeros((grid.count, D, D), dtype=complex)
    for x, L in zip(xs, spec.generators):
        semi = algebra.expm_stack(L, t)
        if grid.count > 1:
            maps = maps + trapezoid_cumulative(x[:, None, None] * semi, h)
        G += x[:, None, None] * (semi - eye)
    return TimeMixtureResult(EvolutionTrace.from_maps(grid, maps), G, float(total[-1]))


def ground_state(k: int) -> np.ndarray:
    """Projector onto the first basis vector (annihilated by ``SIGMA_MINUS`` for k=2)."""
    w = np.zeros((k, k), dtype=complex)
    w[0, 0] = 1.0
    return w


@dataclass(frozen=True, eq=False)
class DilationSpec:
    system_dim: int
    env_dim: int
    total: GkslSpec
    omega: np.ndarray = field(default=None)
    tol: float = 1e-8

    def __post_init__(self):
        d, k = self.system_dim, self.env_dim
        if d < 1 or k < 1:
            raise InvalidInputError("dimensions must be positive")
        if d * k > 16:
            raise InvalidInputError(f"composite dimension {d * k} exceeds 16")
        if self.total.dim != d * k:
            raise InvalidInputError(f"total generator has dim {self.total.dim}, expected {d * k}")
        omega = ground_state(k) if self.omega is None else algebra.as_operator(self.omega, k)
        if not algebra.is_hermitian(omega, self.tol):
            raise InvalidInputError("environment state is not Hermitian")
        if abs(np.trace(omega) - 1) > 1e-12:
            raise InvalidInputError(f"environment state has trace {np.trace(omega).real:.15g}, not 1")
        if np.linalg.eigvalsh(0.5 * (omega + omega.conj().T))[0] < -self.tol:
            raise InvalidInputError("environment state is not positive semidefinite")
        object.__setattr__(self, "omega", omega)


def embedding(d: int, k: int) -> np.ndarray:
    """Matrix of ``a -> a x 1_k`` in column-stacked coordinates."""
    one = np.eye(k)
    cols = []
    for idx in range(d * d):
        e = np.zeros(d * d, dtype=complex)
        e[idx] = 1
        cols.append(algebra.vec(np.kron(algebra.devec(e, d), one)))
    return np.column_stack(cols)


def environment_contraction(d: int, k: int, omega: np.ndarray) -> np.ndarray:
    """Matrix of ``X -> tr_E[(1_d x omega) X]``."""
    D = d * k
    cols = []
    for idx in range(D * D):
        e = np.zeros(D * D, dtype=complex)
        e[idx] = 1
        X = algebra.devec(e, D).reshape(d, k, d, k)
        # tr_E[(1 x w) X]_{ij} = sum_{ab} w_{ab} X_{(i b),(j a)}
        cols.append(algebra.vec(np.einsum("ab,ibja->ij", omega, X)))
    return np.column_stack(cols)


def dilation_reduced(spec: DilationSpec, grid: TimeGrid) -> EvolutionTrace:
    d, k = spec.system_dim, spec.env_dim
    L = algebra.gksl_generator(spec.total).matrix
    J = embedding(d, k)
    P = environment_contraction(d, k, spec.omega)
    maps = P @ algebra.expm_stack(L, grid.times) @ J
    return EvolutionTrace.from_maps(grid, maps)


def exchange_model(g: float, gamma: float, omega_sys: float = 0.0, omega_env: float = 0.0) -> GkslSpec:
    """Qubit x qubit: ``H = g (s+ x s- + s- x s+)`` (+ optional local fields), environment decay ``gamma``."""
    sp, sm, eye = algebra.SIGMA_PLUS, algebra.SIGMA_MINUS, np.eye(2)
    H = g * (np.kron(sp, sm) + np.kron(sm, sp))
    H = H + 0.5 * omega_sys * np.kron(algebra.SIGMA_Z, eye) + 0.5 * omega_env * np.kron(eye, algebra.SIGMA_Z)
    return GkslSpec(H, ((np.kron(eye, sm), gamma),))
