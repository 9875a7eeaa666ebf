"""Operator-valued Volterra integro-differential solver.

Solves ``dA/dt = L A_t + int_0^t K(t-s) A_s ds`` with ``A_0 = I`` on a uniform
grid, where ``L`` collects every Dirac component of the kernel.  Time stepping
is Heun (explicit trapezoid) and the history integral is the composite
trapezoid rule, so the scheme is second order for smooth ``K``.

Also here: the normalization equation, extraction of the derivative
representation ``A_t = I + int G``, and real-axis Laplace sampling.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from memkernel import algebra
from memkernel.errors import InvalidInputError, NumericalError, PoleError
from memkernel.memory import trapezoid_cumulative

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k h``, ``k = 0..count-1``."""

    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidInputError(f"grid step must be positive, got {self.step}")
        if self.count < 1:
            raise InvalidInputError(f"grid needs at least one point, got {self.count}")

    @classmethod
    def from_horizon(cls, h: float, horizon: float) -> TimeGrid:
        if not h > 0:
            raise InvalidInputError(f"grid step must be positive, got {h}")
        if horizon < h:
            raise InvalidInputError(f"horizon {horizon} is shorter than the step {h}")
        return cls(h, int(round(horizon / h)) + 1)

    @property
    def horizon(self) -> float:
        return self.step * (self.count - 1)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.count)


def _check_stack(values, grid: TimeGrid, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    if values.ndim != 3 or values.shape[1] != values.shape[2]:
        raise InvalidInputError(f"{name} must be an (n, D, D) stack, got {values.shape}")
    if values.shape[0] < grid.count:
        raise InvalidInputError(f"{name} has {values.shape[0]} samples, grid needs {grid.count}")
    return values[: grid.count]


@dataclass(frozen=True, eq=False)
class EvolutionTrace:
    grid: TimeGrid
    maps: np.ndarray  # (n, D, D)
    cp_defect: np.ndarray
    unitality_defect: np.ndarray
    choi_herm_residual: np.ndarray

    @classmethod
    def from_maps(cls, grid: TimeGrid, maps: np.ndarray) -> EvolutionTrace:
        maps = np.asarray(maps)
        return cls(
            grid,
            maps,
            np.asarray(algebra.cp_defect(maps)),
            np.asarray(algebra.unitality_defect(maps)),
            np.asarray(algebra.choi_hermiticity_residual(maps)),
        )

    @property
    def dim(self) -> int:
        return algebra._sqrt_dim(self.maps.shape[-1])

    def superop(self, k: int) -> algebra.SuperOp:
        return algebra.SuperOp(self.maps[k])

    def summary(self) -> dict:
        return {
            "steps": self.grid.count,
            "min_cp_defect": float(self.cp_defect.min()),
            "max_unitality_defect": float(self.unitality_defect.max()),
            "max_choi_herm_residual": float(self.choi_herm_residual.max()),
        }


def _march(local, kernel, grid: TimeGrid, D: int):
    """Heun + trapezoid history for ``X' = local X + int kernel(t-s) X_s ds``, ``X_0 = I``.

    Returns the solution stack and the right-hand side at each grid point.
    """
    n, h = grid.count, grid.step
    local = np.zeros((D, D), dtype=complex) if local is None else np.asarray(local, dtype=complex)
    X = np.zeros((n, D, D), dtype=complex)
    X[0] = np.eye(D)
    rhs = np.zeros((n, D, D), dtype=complex)
    rhs[0] = local
    if kernel is None:
        for k in range(n - 1):
            pred = X[k] + h * rhs[k]
            X[k + 1] = X[k] + 0.5 * h * (rhs[k] + local @ pred)
            rhs[k + 1] = local @ X[k + 1]
            if not np.all(np.isfinite(X[k + 1])):
                raise NumericalError("non-finite solution", step=k + 1)
        return X, rhs

    K = kernel
    budget = np.linalg.norm(h * (local + h * K[0]))
    if budget >= 1:
        warnings.warn(
            f"step size may be too large: ||h (L + h K_0)|| = {budget:.3g} >= 1",
            RuntimeWarning,
            stacklevel=3,
        )
    # block m of krev is K_{n-1-m}, so contiguous column slices give reversed history
    krev = K[::-1].transpose(1, 0, 2).reshape(D, n * D)
    xcat = X.reshape(n * D, D)
    half_k0 = 0.5 * h * K[0]
    for k in range(n - 1):
        # sum_{j=0}^{k} K_{k+1-j} X_j
        hist = krev[:, (n - 2 - k) * D:(n - 1) * D] @ xcat[: (k + 1) * D]
        base = h * (hist - 0.5 * K[k + 1])  # X_0 = I
        pred = X[k] + h * rhs[k]
        f_pred = local @ pred + base + half_k0 @ pred
        X[k + 1] = X[k] + 0.5 * h * (rhs[k] + f_pred)
        rhs[k + 1] = local @ X[k + 1] + base + half_k0 @ X[k + 1]
        if not np.all(np.isfinite(X[k + 1])):
            raise NumericalError("non-finite solution", step=k + 1)
    return X, rhs


def evolve(spec, grid: TimeGrid) -> EvolutionTrace:
    """Solve the master equation for a :class:`memkernel.kernels.KernelSpec`."""
    D = spec.dim**2
    local = spec.local_part()
    kernel = spec.memory.sample(grid, spec.dim)
    if kernel is not None:
        kernel = _check_stack(kernel, grid, "memory kernel")
        if kernel.shape[1] != D:
            raise InvalidInputError(f"memory kernel acts on dim {kernel.shape[1]}, spec dim^2 is {D}")
    log.debug("evolve: dim=%d steps=%d h=%g", spec.dim, grid.count, grid.step)
    maps, _ = _march(local, kernel, grid, D)
    return EvolutionTrace.from_maps(grid, maps)


@dataclass(frozen=True, eq=False)
class NormalizationSolution:
    grid: TimeGrid
    N: np.ndarray  # (n, D, D)
    F: np.ndarray  # (n, D, D), F = -dN/dt

    def consistency(self) -> float:
        """``sup_t ||N_t - (I - int_0^t F)||``."""
        D = self.N.shape[-1]
        recon = np.eye(D) - trapezoid_cumulative(self.F, self.grid.step)
        return float(np.linalg.norm(self.N - recon, axis=(1, 2)).max())


def solve_normalization(Z, grid: TimeGrid, local=None) -> NormalizationSolution:
    """Solve ``dN/dt = -local N - int Z(t-s) N_s ds`` with ``N_0 = I``.

    ``Z`` is an (n, D, D) stack or anything with ``values``/``local`` attributes
    (e.g. :class:`memkernel.kernels.ZSolution`).  ``local`` is the Dirac part of
    ``Z`` (so ``Z = local delta + Z_reg``).
    """
    if hasattr(Z, "values"):
        if local is None:
            local = getattr(Z, "local", None)
        Z = Z.values
    Z = _check_stack(Z, grid, "Z")
    D = Z.shape[-1]
    neg_local = None if local is None else -np.asarray(local, dtype=complex)
    N, rhs = _march(neg_local, -Z, grid, D)
    return NormalizationSolution(grid, N, -rhs)


def convolve_ops(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid ``int_0^t a(t-s) b(s) ds`` for stacks ``a``, ``b`` of shape (n, D, D)."""
    a = np.asarray(a)
    b = np.asarray(b)
    n, D = a.shape[0], a.shape[1]
    arev = a[::-1].transpose(1, 0, 2).reshape(D, n * D)
    bcat = np.ascontiguousarray(b).reshape(n * D, D)
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for k in range(1, n):
        full = arev[:, (n - 1 - k) * D:] @ bcat[: (k + 1) * D]
        out[k] = h * (full - 0.5 * (a[k] @ b[0] + a[0] @ b[k]))
    return out


@dataclass(frozen=True, eq=False)
class GRepresentation:
    grid: TimeGrid
    G: np.ndarray
    max_unit_residual: float  # max_t ||G_t(1)||
    reconstruction_error: float  # max_t ||I + int G - A_t||


def extract_G(trace: EvolutionTrace) -> GRepresentation:
    """``G_t = dA/dt`` by second-order finite differences."""
    if trace.grid.count < 3:
        raise InvalidInputError("extract_G needs at least 3 grid points")
    h = trace.grid.step
    G = np.gradient(trace.maps, h, axis=0, edge_order=2)
    D = G.shape[-1]
    unit = float(np.max(algebra.generator_unitality_defect(G)))
    recon = np.eye(D) + trapezoid_cumulative(G, h)
    err = float(np.linalg.norm(recon - trace.maps, axis=(1, 2)).max())
    return GRepresentation(trace.grid, G, unit, err)


def laplace_sample(values: np.ndarray, h: float, p: float) -> tuple[np.ndarray, float]:
    """Trapezoid ``int_0^T exp(-pt) X_t dt`` and the tail bound ``exp(-pT) max||X|| / p``.

    Works for scalar samples (shape (n,)) and operator stacks (n, D, D).
    """
    if not p > 0:
        raise InvalidInputError(f"Laplace variable must be positive, got {p}")
    values = np.asarray(values)
    n = values.shape[0]
    t = h * np.arange(n)
    w = np.exp(-p * t).reshape((n,) + (1,) * (values.ndim - 1))
    est = np.trapezoid(w * values, dx=h, axis=0)
    norms = np.abs(values) if values.ndim == 1 else np.linalg.norm(values.reshape(n, -1), axis=1)
    tail = float(np.exp(-p * t[-1]) * norms.max() / p)
    return est, tail


@dataclass(frozen=True, eq=False)
class LaplaceKernelSample:
    p: float
    L_hat: np.ndarray
    G_hat: np.ndarray
    A_hat: np.ndarray
    resolvent_residual: float
    tail_bound: float


def kernel_from_G(G: GRepresentation, p_samples, trace: EvolutionTrace | None = None, pole_tol: float = 1e-10):
    """Laplace-domain kernel ``L^_p = p G^_p (I + G^_p)^-1`` at each ``p``.

    The resolvent identity ``A^_p (p I - L^_p) = I`` is checked with ``A^_p``
    taken from ``trace`` when given (a genuine cross-check), otherwise from
    ``(I + G^_p)/p``.
    """
    h = G.grid.step
    D = G.G.shape[-1]
    eye = np.eye(D)
    out = []
    for p in p_samples:
        p = float(p)
        g_hat, tail = laplace_sample(G.G, h, p)
        m = eye + g_hat
        smin = np.linalg.svd(m, compute_uv=False)[-1]
        if smin < pole_tol:
            raise PoleError(f"I + G^_p is singular at p={p} (sigma_min={smin:.2e})")
        l_hat = p * g_hat @ np.linalg.inv(m)
        if trace is not None:
            a_hat, a_tail = laplace_sample(trace.maps, h, p)
            tail = max(tail, a_tail)
        else:
            a_hat = m / p
        resid = float(np.linalg.norm(a_hat @ (p * eye - l_hat) - eye))
        out.append(LaplaceKernelSample(p, l_hat, g_hat, a_hat, resid, tail))
    return out
