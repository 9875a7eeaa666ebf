"""Memory-kernel generators and sufficient conditions for complete positivity.

A :class:`KernelSpec` is the pair (local part ``L``, memory part ``L_t``) of
``dA/dt = L A_t + int_0^t L_{t-s} A_s ds``.  The memory part is one of the
small classes below; each knows how to sample itself on a grid, what Dirac
content it carries at ``t = 0`` and, where meaningful, how it splits as
``L_t = B_t - Z_t``.

The certification routines only *report*: a kernel that fails a sufficient
condition can still be evolved.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from memkernel import algebra
from memkernel.algebra import SuperOp
from memkernel.errors import InvalidInputError
from memkernel.memory import ScalarKernel, _gradient, trapezoid_cumulative
from memkernel.volterra import (
    NormalizationSolution,
    TimeGrid,
    _check_stack,
    convolve_ops,
    solve_normalization,
)


def _eye(dim: int) -> np.ndarray:
    return np.eye(dim * dim, dtype=complex)


def _mat(s):
    return None if s is None else (s.matrix if isinstance(s, SuperOp) else np.asarray(s, dtype=complex))


def _check_step(h: float, grid: TimeGrid):
    if not np.isclose(h, grid.step, rtol=1e-9, atol=0):
        raise InvalidInputError(f"samples have step {h}, grid step is {grid.step}")


class NoMemory:
    kind = "none"

    def sample(self, grid, dim):
        return None

    def dirac(self, dim):
        return None

    def split(self, grid, dim):
        n = grid.count
        z = np.zeros((n, dim * dim, dim * dim), dtype=complex)
        return z, z.copy(), None, None


@dataclass(frozen=True, eq=False)
class ScalarCPMemory:
    """``L_t = kappa(t) (B - I)``; the Dirac weight of kappa becomes a local term."""

    kappa: ScalarKernel
    B: SuperOp
    kind = "scalar_cp"

    def _kappa_on(self, grid):
        _check_step(self.kappa.h, grid)
        if self.kappa.regular.size < grid.count:
            raise InvalidInputError("kappa samples do not cover the grid")
        return self.kappa.regular[: grid.count]

    def sample(self, grid, dim):
        k = self._kappa_on(grid)
        return k[:, None, None] * (self.B.matrix - _eye(dim))[None]

    def dirac(self, dim):
        if self.kappa.local_weight == 0:
            return None
        return self.kappa.local_weight * (self.B.matrix - _eye(dim))

    def split(self, grid, dim):
        k = self._kappa_on(grid)[:, None, None]
        w = self.kappa.local_weight
        return k * self.B.matrix[None], k * _eye(dim)[None], w * self.B.matrix, w * _eye(dim)


@dataclass(frozen=True, eq=False)
class SplitMemory:
    """``L_t = B_t - Z_t`` from sampled stacks, with optional Dirac parts of each."""

    h: float
    B: np.ndarray
    Z: np.ndarray
    B_local: np.ndarray | None = None
    Z_local: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)
    kind = "split"

    def sample(self, grid, dim):
        _check_step(self.h, grid)
        return _check_stack(self.B, grid, "B_t") - _check_stack(self.Z, grid, "Z_t")

    def dirac(self, dim):
        if self.B_local is None and self.Z_local is None:
            return None
        D = dim * dim
        b = np.zeros((D, D)) if self.B_local is None else self.B_local
        z = np.zeros((D, D)) if self.Z_local is None else self.Z_local
        return b - z

    def split(self, grid, dim):
        _check_step(self.h, grid)
        return _check_stack(self.B, grid, "B_t"), _check_stack(self.Z, grid, "Z_t"), self.B_local, self.Z_local


@dataclass(frozen=True, eq=False)
class SampledMemory:
    h: float
    values: np.ndarray
    kind = "sampled"

    def sample(self, grid, dim):
        _check_step(self.h, grid)
        return _check_stack(self.values, grid, "memory samples")

    def dirac(self, dim):
        return None


@dataclass(frozen=True, eq=False)
class ExponentialMemory:
    """Closed-form ``L_t = coeff exp(t rate)``."""

    coeff: np.ndarray
    rate: np.ndarray
    kind = "exponential"

    def sample(self, grid, dim):
        return self.coeff @ algebra.expm_stack(self.rate, grid.times)

    def dirac(self, dim):
        return None


@dataclass(frozen=True, eq=False)
class KernelSpec:
    dim: int
    local: np.ndarray | None = None
    memory: object = field(default_factory=NoMemory)

    def __post_init__(self):
        if self.local is not None:
            local = _mat(self.local)
            if local.shape != (self.dim**2, self.dim**2):
                raise InvalidInputError(f"local part has shape {local.shape}, expected dim^2 = {self.dim**2}")
            object.__setattr__(self, "local", local)

    def local_part(self) -> np.ndarray | None:
        """Explicit local term plus every Dirac component of the memory part."""
        parts = [p for p in (self.local, self.memory.dirac(self.dim)) if p is not None]
        if not parts:
            return None
        return sum(parts)

    def memory_samples(self, grid: TimeGrid) -> np.ndarray:
        out = self.memory.sample(grid, self.dim)
        if out is None:
            return np.zeros((grid.count, self.dim**2, self.dim**2), dtype=complex)
        return out


def _require_cp_unital(B: SuperOp, tol: float):
    defect = float(algebra.cp_defect(B))
    herm = float(algebra.choi_hermiticity_residual(B))
    unit = float(algebra.unitality_defect(B))
    if defect < -tol or herm > tol:
        raise InvalidInputError(f"B is not completely positive: cp_defect={defect:.3e}, hermiticity residual={herm:.3e}")
    if unit > tol:
        raise InvalidInputError(f"B is not unital: ||B(1) - 1|| = {unit:.3e}")


def make_scalar_cp_kernel(kappa: ScalarKernel, B: SuperOp, tol: float | None = None, check: bool = True) -> KernelSpec:
    """Kernel ``kappa(t) (B - I)`` for a CP unital map ``B``.

    Pass ``check=False`` to build the kernel for a non-CP ``B`` anyway, e.g.
    to watch the certification fail.
    """
    tol = algebra.default_tol(B.dim) if tol is None else tol
    if check:
        _require_cp_unital(B, tol)
    return KernelSpec(B.dim, None, ScalarCPMemory(kappa, B))


@dataclass(frozen=True, eq=False)
class ZSolution:
    """``Z = local delta + values`` solving ``int_0^t N_{t-s} Z_s ds = F_t``."""

    h: float
    values: np.ndarray
    local: np.ndarray | None
    residual: float
    residual_curve: np.ndarray = field(repr=False, default=None)


def z_from_F(F: np.ndarray, h: float, dF: np.ndarray | None = None, tol: float | None = None) -> ZSolution:
    """Solve for ``Z`` given ``F`` with ``N_t = I - int_0^t F``.

    Uses the differentiated second-kind form
    ``Z_t = F'_t + F_t W + int_0^t F_{t-s} Z_s ds`` where ``W = F_0`` is the
    Dirac part (zero for the regular case).  ``dF`` may supply exact
    derivatives; otherwise second-order differences are used.
    """
    F = np.asarray(F, dtype=complex)
    if F.ndim != 3 or F.shape[0] < 3:
        raise InvalidInputError("F must be an (n, D, D) stack with n >= 3")
    if not np.all(np.isfinite(F)):
        raise InvalidInputError("F samples are not finite")
    n, D = F.shape[0], F.shape[1]
    tol = algebra.default_tol(algebra._sqrt_dim(D)) if tol is None else tol
    dF = _gradient(F, h) if dF is None else np.asarray(dF, dtype=complex)
    W = None
    forcing = dF
    if np.linalg.norm(F[0]) > tol:
        warnings.warn("F_0 != 0: Z carries a Dirac component, returned as the local part", RuntimeWarning, stacklevel=2)
        W = F[0].copy()
        forcing = dF + F @ W
    eye = np.eye(D)
    lhs = np.linalg.inv(eye - 0.5 * h * F[0])
    Z = np.zeros_like(F)
    Z[0] = forcing[0]
    frev = F[::-1].transpose(1, 0, 2).reshape(D, n * D)
    zcat = Z.reshape(n * D, D)
    for k in range(1, n):
        # sum_{j=0}^{k-1} F_{k-j} Z_j
        hist = frev[:, (n - 1 - k) * D:(n - 1) * D] @ zcat[: k * D]
        Z[k] = lhs @ (forcing[k] + h * (hist - 0.5 * F[k] @ Z[0]))
    N = eye - trapezoid_cumulative(F, h)
    curve = convolve_ops(N, Z, h) - F
    if W is not None:
        curve = curve + N @ W
    resid = np.linalg.norm(curve, axis=(1, 2))
    return ZSolution(h, Z, W, float(resid.max()), resid)


def generalized_generator(Z: ZSolution, B: SuperOp, tol: float | None = None) -> KernelSpec:
    """Kernel ``Z_t o (B - I)`` (B applied first), stored as the split ``Z_t B - Z_t``."""
    tol = algebra.default_tol(B.dim) if tol is None else tol
    _require_cp_unital(B, tol)
    b = B.matrix
    memory = SplitMemory(
        Z.h,
        Z.values @ b,
        Z.values.copy(),
        None if Z.local is None else Z.local @ b,
        None if Z.local is None else Z.local.copy(),
        provenance={"source": "generalized_generator", "B": b},
    )
    return KernelSpec(B.dim, None, memory)


@dataclass
class CheckReport:
    passed: bool
    tol: float
    details: dict

    def to_json(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, **self.details}


def _min_cp_defect(stack) -> float:
    return float(np.min(algebra.cp_defect(stack))) if len(stack) else 0.0


def theorem1_check(spec: KernelSpec, grid: TimeGrid, tol: float | None = None) -> CheckReport:
    """Sufficient CP condition from the split ``L_t = B_t - Z_t``.

    Checks that ``B_t`` (and its Dirac part) is CP on the grid, that
    ``L_t(1) = 0``, and that the normalization solution ``N_t`` driven by
    ``Z_t`` is CP.  An explicit local term ``L`` is moved to the ``Z`` side
    as ``-L``, which keeps the split valid since ``L(1) = 0``.
    """
    tol = algebra.default_tol(spec.dim) if tol is None else tol
    if not hasattr(spec.memory, "split"):
        raise InvalidInputError(f"memory kind {spec.memory.kind!r} has no B - Z split")
    B, Z, B_loc, Z_loc = spec.memory.split(grid, spec.dim)
    if spec.local is not None:
        Z_loc = -spec.local if Z_loc is None else Z_loc - spec.local
    b_defect = _min_cp_defect(B)
    b_herm = float(np.max(algebra.choi_hermiticity_residual(B)))
    if B_loc is not None:
        b_defect = min(b_defect, float(algebra.cp_defect(B_loc)))
        b_herm = max(b_herm, float(algebra.choi_hermiticity_residual(B_loc)))
    L = B - Z
    unit = float(np.max(algebra.generator_unitality_defect(L)))
    local_total = spec.local_part()
    if local_total is not None:
        unit = max(unit, float(algebra.generator_unitality_defect(local_total)))
    norm = solve_normalization(Z, grid, local=Z_loc)
    n_defect = _min_cp_defect(norm.N)
    checks = {
        "B_cp": b_defect >= -tol and b_herm <= tol,
        "annihilates_identity": unit <= tol,
        "N_cp": n_defect >= -tol,
    }
    details = {
        "checks": checks,
        "min_cp_defect_B": b_defect,
        "max_choi_herm_residual_B": b_herm,
        "max_kernel_unitality_defect": unit,
        "min_cp_defect_N": n_defect,
    }
    report = CheckReport(all(checks.values()), tol, details)
    report.normalization = norm
    return report


def breuer_vacchini_check(
    N: NormalizationSolution,
    B: np.ndarray,
    B_local: np.ndarray | None = None,
    tol: float | None = None,
) -> CheckReport:
    """CP of ``M_t = int_0^t N_{t-s} B_s ds`` on every grid point.

    ``B_local`` is the Dirac part of ``B_t`` and contributes ``N_t B_local``.
    """
    B = np.asarray(B, dtype=complex)
    if B.shape[0] != N.N.shape[0] or B.shape[1:] != N.N.shape[1:]:
        raise InvalidInputError(f"B_t stack {B.shape} does not match N_t stack {N.N.shape}")
    D = B.shape[-1]
    tol = algebra.default_tol(algebra._sqrt_dim(D)) if tol is None else tol
    M = convolve_ops(N.N, B, N.grid.step)
    if B_local is not None:
        M = M + N.N @ np.asarray(B_local)
    defects = np.asarray(algebra.cp_defect(M))
    herm = float(np.max(algebra.choi_hermiticity_residual(M)))
    min_def = float(defects.min())
    report = CheckReport(
        min_def >= -tol and herm <= tol,
        tol,
        {"min_cp_defect_M": min_def, "argmin_t": float(N.grid.times[int(defects.argmin())]), "max_choi_herm_residual_M": herm},
    )
    report.M = M
    return report


def certify(spec: KernelSpec, grid: TimeGrid, tol: float | None = None) -> dict:
    """Run both sufficient conditions and return their reports."""
    t1 = theorem1_check(spec, grid, tol)
    B, _, B_loc, _ = spec.memory.split(grid, spec.dim)
    bv = breuer_vacchini_check(t1.normalization, B, B_loc, tol)
    # Breuer-Vacchini also needs N_t CP
    bv.details["N_cp"] = t1.details["checks"]["N_cp"]
    bv.passed = bv.passed and bv.details["N_cp"] and t1.details["checks"]["annihilates_identity"]
    return {"theorem1": t1, "breuer_vacchini": bv}
