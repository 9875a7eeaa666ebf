"""Operators and superoperators on M_d.

Conventions used everywhere in the package:

* vectorization stacks columns, ``vec(a)[i + j*d] = a[i, j]``, so that
  ``vec(x a y) = (y.T kron x) vec(a)``;
* a superoperator is the d^2 x d^2 matrix ``M`` with ``vec(S(a)) = M vec(a)``;
* the Choi matrix is ``C(S) = sum_ij E_ij kron S(E_ij)``;
* composition ``S @ T`` means "apply T, then S", i.e. the matrix product.

Operators are plain ``(d, d)`` complex arrays.  Stacks of superoperators
sampled on a time grid are ``(n, d^2, d^2)`` arrays; most diagnostics here
accept such stacks directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from memkernel.errors import InvalidInputError, NumericalError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# lowering operator; |0> is the ground state
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()


def default_tol(dim: int) -> float:
    """Default certification tolerance, scaled with the Hilbert-space dimension."""
    return 1e-8 * dim


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(a).reshape(-1, order="F")


def devec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = _sqrt_dim(v.shape[-1])
    return v.reshape(dim, dim, order="F")


def _sqrt_dim(n: int) -> int:
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise InvalidInputError(f"size {n} is not a perfect square")
    return d


def as_operator(a, dim: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"operator must be a square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise InvalidInputError(f"operator has dim {a.shape[0]}, expected {dim}")
    return a


@dataclass(frozen=True, eq=False)
class SuperOp:
    """A linear map on M_d stored as its d^2 x d^2 matrix."""

    matrix: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"superoperator matrix must be square, got {m.shape}")
        object.__setattr__(self, "dim", _sqrt_dim(m.shape[0]))
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, dim: int) -> SuperOp:
        return cls(np.eye(dim * dim))

    @classmethod
    def zero(cls, dim: int) -> SuperOp:
        return cls(np.zeros((dim * dim, dim * dim)))

    @classmethod
    def from_function(cls, func, dim: int) -> SuperOp:
        """Tabulate an arbitrary linear map ``func`` on the matrix units."""
        cols = []
        for k in range(dim * dim):
            e = np.zeros(dim * dim, dtype=complex)
            e[k] = 1.0
            cols.append(vec(func(devec(e, dim))))
        return cls(np.column_stack(cols))

    @classmethod
    def conjugation(cls, u: np.ndarray) -> SuperOp:
        """The map ``a -> u^dag a u`` (Heisenberg action of a unitary or Kraus op)."""
        u = as_operator(u)
        return cls(np.kron(u.T, u.conj().T))

    @classmethod
    def kraus(cls, ops: Sequence[np.ndarray]) -> SuperOp:
        """The map ``a -> sum_k v_k^dag a v_k``."""
        ops = [as_operator(v) for v in ops]
        return cls(sum(np.kron(v.T, v.conj().T) for v in ops))

    @classmethod
    def transpose_map(cls, dim: int) -> SuperOp:
        return cls.from_function(lambda a: a.T, dim)

    @classmethod
    def trace_map(cls, dim: int) -> SuperOp:
        """``a -> tr(a) 1/d``."""
        return cls.from_function(lambda a: np.trace(a) * np.eye(dim) / dim, dim)

    def __call__(self, a) -> np.ndarray:
        return superop_apply(self, a)

    def __matmul__(self, other: SuperOp) -> SuperOp:
        _check_same_dim(self, other)
        return SuperOp(self.matrix @ other.matrix)

    def __add__(self, other: SuperOp) -> SuperOp:
        _check_same_dim(self, other)
        return SuperOp(self.matrix + other.matrix)

    def __sub__(self, other: SuperOp) -> SuperOp:
        _check_same_dim(self, other)
        return SuperOp(self.matrix - other.matrix)

    def __neg__(self) -> SuperOp:
        return SuperOp(-self.matrix)

    def __mul__(self, scalar) -> SuperOp:
        return SuperOp(scalar * self.matrix)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SuperOp(dim={self.dim})"


def _check_same_dim(a: SuperOp, b: SuperOp):
    if not isinstance(b, SuperOp):
        raise TypeError(f"expected SuperOp, got {type(b).__name__}")
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _matrix(s) -> np.ndarray:
    return s.matrix if isinstance(s, SuperOp) else np.asarray(s)


def superop_apply(s: SuperOp, a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (s.dim, s.dim):
        raise InvalidInputError(f"operator of shape {a.shape} does not match superoperator dim {s.dim}")
    return devec(s.matrix @ vec(a), s.dim)


def dual(s: SuperOp) -> SuperOp:
    """Hilbert-Schmidt adjoint: ``tr((S* a)^dag b) = tr(a^dag S(b))``.

    With column stacking the Hilbert-Schmidt product is the plain inner product
    of the vectorizations, so the dual is the conjugate transpose.
    """
    return SuperOp(s.matrix.conj().T)


def choi(s) -> np.ndarray:
    """Choi matrix ``sum_ij E_ij kron S(E_ij)``; also accepts an (n, D, D) stack."""
    m = _matrix(s)
    d = _sqrt_dim(m.shape[-1])
    # m[..., l*d + k, j*d + i] = S(E_ij)[k, l]  ->  C[(i, k), (j, l)]
    m4 = m.reshape(m.shape[:-2] + (d, d, d, d))
    c = np.swapaxes(m4, -1, -4)  # axes (..., i, k, j, l)
    return c.reshape(m.shape[:-2] + (d * d, d * d))


def from_choi(c: np.ndarray) -> SuperOp:
    c = np.asarray(c)
    d = _sqrt_dim(c.shape[-1])
    c4 = c.reshape(d, d, d, d)
    return SuperOp(np.swapaxes(c4, 0, 3).reshape(d * d, d * d))


def choi_hermiticity_residual(s) -> np.ndarray | float:
    """Frobenius norm of ``C - C^dag``; zero iff S preserves Hermiticity."""
    c = choi(s)
    return np.linalg.norm(c - np.conj(np.swapaxes(c, -1, -2)), axis=(-2, -1))


def cp_defect(s) -> np.ndarray | float:
    """Smallest eigenvalue of the Hermitized Choi matrix.

    Nonnegative (up to tolerance) iff the map is completely positive.  Stacks
    of superoperators give one value per element.
    """
    c = choi(s)
    h = 0.5 * (c + np.conj(np.swapaxes(c, -1, -2)))
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite entries in Choi matrix")
    try:
        eig = np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Choi eigensolve failed: {exc}") from exc
    return eig[..., 0]


def is_cp(s, tol: float | None = None) -> bool:
    d = _sqrt_dim(_matrix(s).shape[-1])
    tol = default_tol(d) if tol is None else tol
    return bool(np.all(cp_defect(s) >= -tol) and np.all(choi_hermiticity_residual(s) <= tol))


def unitality_defect(s) -> np.ndarray | float:
    """``||S(1) - 1||_F``; for a stack, one value per element."""
    m = _matrix(s)
    d = _sqrt_dim(m.shape[-1])
    one = vec(np.eye(d))
    return np.linalg.norm(m @ one - one, axis=-1)


def generator_unitality_defect(s) -> np.ndarray | float:
    """``||L(1)||_F``, the annihilation-of-identity check for generators and kernels."""
    m = _matrix(s)
    d = _sqrt_dim(m.shape[-1])
    return np.linalg.norm(m @ vec(np.eye(d)), axis=-1)


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    a = np.asarray(a)
    return bool(np.linalg.norm(a - a.conj().T) <= tol * max(1.0, np.linalg.norm(a)))


@dataclass(frozen=True, eq=False)
class GkslSpec:
    """Hamiltonian plus jump operators ``(V_k, gamma_k)`` of a Markovian generator."""

    hamiltonian: np.ndarray
    jumps: tuple = ()
    tol: float = 1e-10

    def __post_init__(self):
        h = as_operator(self.hamiltonian)
        if not is_hermitian(h, self.tol):
            raise InvalidInputError("hamiltonian is not Hermitian")
        jumps = []
        for op, rate in self.jumps:
            op = as_operator(op, h.shape[0])
            rate = float(rate)
            if rate < 0:
                raise InvalidInputError(f"jump rate must be nonnegative, got {rate}")
            jumps.append((op, rate))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def gksl_generator(spec: GkslSpec, picture: str = "heisenberg") -> SuperOp:
    """GKSL generator ``L(a) = i[H, a] + sum_k g_k (V^dag a V - {V^dag V, a}/2)``.

    The formula above is the Heisenberg picture; ``picture="schrodinger"``
    returns its dual.
    """
    d = spec.dim
    eye = np.eye(d)
    h = spec.hamiltonian
    m = 1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for v, rate in spec.jumps:
        vdv = v.conj().T @ v
        m = m + rate * (np.kron(v.T, v.conj().T) - 0.5 * (np.kron(eye, vdv) + np.kron(vdv.T, eye)))
    gen = SuperOp(m)
    if picture == "heisenberg":
        return gen
    if picture in ("schrodinger", "schroedinger"):
        return dual(gen)
    raise InvalidInputError(f"unknown picture {picture!r}")


def dephasing(gamma: float, dim: int = 2) -> SuperOp:
    """Pure dephasing generator with jump ``sigma_z`` (qubit) or ``diag(1, -1, ...)``."""
    if dim == 2:
        z = SIGMA_Z
    else:
        z = np.diag([(-1.0) ** k for k in range(dim)]).astype(complex)
    return gksl_generator(GkslSpec(np.zeros((dim, dim)), ((z, gamma),)))


def expm(s, t: float = 1.0) -> SuperOp:
    """``exp(t S)`` via scipy's scaling-and-squaring Pade."""
    m = _matrix(s)
    if not np.isfinite(t):
        raise InvalidInputError(f"time must be finite, got {t}")
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = scipy.linalg.expm(t * m)
        except FloatingPointError as exc:
            raise NumericalError(f"overflow in matrix exponential at t={t}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"overflow in matrix exponential at t={t}")
    return SuperOp(out)


def expm_stack(s, times: np.ndarray) -> np.ndarray:
    """``exp(t_k S)`` for every ``t_k``, as an ``(n, D, D)`` array."""
    m = _matrix(s)
    times = np.asarray(times, dtype=float)
    out = scipy.linalg.expm(times[:, None, None] * m[None])
    if not np.all(np.isfinite(out)):
        raise NumericalError("overflow in matrix exponential")
    return out


def commutator_norm(a, b) -> float:
    a, b = _matrix(a), _matrix(b)
    return float(np.linalg.norm(a @ b - b @ a))
