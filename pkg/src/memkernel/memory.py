"""Scalar memory functions and the scalar kernel they induce.

A memory function ``f >= 0`` with ``int_0^inf f <= 1`` defines the survival
function ``g(t) = 1 - int_0^t f`` and a kernel ``kappa`` fixed by the
first-kind convolution equation ``int_0^t g(t-s) kappa(s) ds = f(t)``.
When ``f(0) != 0`` the kernel carries a Dirac component at the origin whose
weight ``f(0)`` is kept symbolically in :attr:`ScalarKernel.local_weight`.

Differentiating the first-kind equation (using ``g' = -f``, ``g(0) = 1``)
gives the well-conditioned second-kind equation

    kappa_reg(t) = f'(t) + f(0) f(t) + int_0^t f(t-s) kappa_reg(s) ds,

which is what :func:`kappa_from_f` solves.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid

from memkernel.errors import AdmissibilityError, InvalidInputError, NumericalError


class MemoryFunction:
    """Base class; subclasses evaluate ``f`` on a uniform grid."""

    closed_form = False

    def sample(self, times: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, times: np.ndarray) -> np.ndarray:
        return _gradient(self.sample(times), _step_of(times))

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Erlang(MemoryFunction):
    """``weight * gamma^m t^(m-1) exp(-gamma t) / (m-1)!``.

    Order 1 is the exponential, order 2 is ``gamma^2 t exp(-gamma t)``.
    ``weight`` equals the total integral; the default 1 saturates the bound.
    """

    gamma: float
    order: int = 1
    weight: float = 1.0
    closed_form = True

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidInputError(f"gamma must be positive, got {self.gamma}")
        if int(self.order) != self.order or self.order < 1:
            raise InvalidInputError(f"order must be a positive integer, got {self.order}")

    def sample(self, times):
        t = np.asarray(times, dtype=float)
        m, g = int(self.order), self.gamma
        return self.weight * g**m * t ** (m - 1) * np.exp(-g * t) / math.factorial(m - 1)

    def derivative(self, times):
        t = np.asarray(times, dtype=float)
        m, g = int(self.order), self.gamma
        c = self.weight * g**m / math.factorial(m - 1)
        lead = (m - 1) * t ** (m - 2) if m >= 2 else np.zeros_like(t)
        return c * np.exp(-g * t) * (lead - g * t ** (m - 1))

    def integral(self, t) -> np.ndarray:
        """Exact ``int_0^t f``."""
        return self.weight * special.gammainc(int(self.order), self.gamma * np.asarray(t, dtype=float))

    def tail(self, t: float) -> float:
        """Exact ``int_t^inf f``."""
        return float(self.weight * special.gammaincc(int(self.order), self.gamma * t))

    def laplace(self, p):
        return self.weight * (self.gamma / (np.asarray(p) + self.gamma)) ** int(self.order)

    def to_json(self):
        out = {"kind": "erlang", "gamma": self.gamma, "order": int(self.order)}
        if self.weight != 1.0:
            out["weight"] = self.weight
        return out


@dataclass(frozen=True, eq=False)
class Samples(MemoryFunction):
    """Values of ``f`` on the uniform grid ``t_k = k h``."""

    h: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise InvalidInputError("samples must be a non-empty 1-d array")
        if self.h <= 0:
            raise InvalidInputError(f"step must be positive, got {self.h}")
        object.__setattr__(self, "values", v)

    def sample(self, times):
        times = np.asarray(times, dtype=float)
        n = times.size
        if n > self.values.size or not np.allclose(times, self.h * np.arange(n), rtol=0, atol=1e-9 * self.h):
            raise InvalidInputError("sampled memory function does not cover the requested grid")
        return self.values[:n].copy()

    def to_json(self):
        return {"kind": "samples", "h": self.h, "values": self.values.tolist()}


@dataclass(frozen=True)
class Zero(MemoryFunction):
    closed_form = True

    def sample(self, times):
        return np.zeros(np.shape(times))

    def derivative(self, times):
        return np.zeros(np.shape(times))

    def integral(self, t):
        return np.zeros(np.shape(t))

    def tail(self, t):
        return 0.0

    def laplace(self, p):
        return np.zeros(np.shape(p))

    def to_json(self):
        return {"kind": "zero"}


def memory_function_from_json(obj: dict) -> MemoryFunction:
    kind = obj.get("kind")
    if kind == "erlang":
        return Erlang(float(obj["gamma"]), int(obj.get("order", 1)), float(obj.get("weight", 1.0)))
    if kind == "samples":
        return Samples(float(obj["h"]), np.asarray(obj["values"], dtype=float))
    if kind == "zero":
        return Zero()
    raise InvalidInputError(f"unknown memory function kind {kind!r}")


def _step_of(times) -> float:
    times = np.asarray(times)
    return float(times[1] - times[0]) if times.size > 1 else 1.0


def _gradient(values, step):
    """Second-order centered differences, one-sided second order at the ends."""
    values = np.asarray(values)
    if values.shape[0] < 3:
        raise InvalidInputError("need at least 3 samples to differentiate")
    return np.gradient(values, step, axis=0, edge_order=2)


@dataclass(frozen=True)
class AdmissibilityReport:
    min_value: float
    integral: float
    tail: float
    tol: float
    passed: bool
    message: str = ""

    def raise_if_failed(self):
        if not self.passed:
            raise AdmissibilityError(self.message)
        return self


def check_admissible(f: MemoryFunction, horizon: float, h: float | None = None, tol: float = 1e-8) -> AdmissibilityReport:
    """Check ``f >= 0`` on the grid and ``int_0^inf f <= 1``.

    Closed-form families use the exact integral over ``[0, horizon]`` plus the
    exact tail; sampled functions only see the horizon (tail reported as 0).
    """
    if horizon <= 0:
        raise InvalidInputError(f"horizon must be positive, got {horizon}")
    if isinstance(f, Samples):
        h = f.h
    elif h is None:
        h = horizon / 1000
    n = int(round(horizon / h)) + 1
    times = h * np.arange(n)
    values = f.sample(times)
    min_value = float(values.min())
    if f.closed_form:
        integral = float(f.integral(times[-1]))
        tail = f.tail(times[-1])
    else:
        integral = float(np.trapezoid(values, dx=h)) if n > 1 else 0.0
        tail = 0.0
    problems = []
    if min_value < -tol:
        problems.append(f"f takes negative value {min_value:.3e}")
    if integral + tail > 1 + tol:
        problems.append(f"integral of f is {integral + tail:.6g} > 1")
    return AdmissibilityReport(min_value, integral, tail, tol, not problems, "; ".join(problems))


def trapezoid_cumulative(values: np.ndarray, h: float) -> np.ndarray:
    """Running trapezoid integral starting at 0, along the first axis."""
    return cumulative_trapezoid(values, dx=h, axis=0, initial=0)


def g_from_f(f: MemoryFunction, times: np.ndarray) -> np.ndarray:
    """Survival function ``g(t) = 1 - int_0^t f`` by composite trapezoid."""
    times = np.asarray(times, dtype=float)
    values = f.sample(times)
    if times.size == 1:
        return np.ones(1)
    return 1.0 - trapezoid_cumulative(values, _step_of(times))


def volterra2_scalar(kernel: np.ndarray, forcing: np.ndarray, h: float) -> np.ndarray:
    """Solve ``x(t) = forcing(t) + int_0^t kernel(t-s) x(s) ds`` by trapezoidal marching.

    Second order for smooth data; O(n^2).
    """
    k = np.asarray(kernel, dtype=float)
    b = np.asarray(forcing, dtype=float)
    if k.shape != b.shape or k.ndim != 1:
        raise InvalidInputError("kernel and forcing must be 1-d arrays on the same grid")
    diag = 1.0 - 0.5 * h * k[0]
    if abs(diag) < 1e-12:
        raise NumericalError("trapezoid diagonal 1 - h k(0)/2 is singular; reduce the step")
    n = k.size
    x = np.empty(n)
    x[0] = b[0]
    for i in range(1, n):
        # interior history k[i-1..1] . x[1..i-1]
        hist = 0.5 * k[i] * x[0] + np.dot(k[i - 1:0:-1], x[1:i])
        x[i] = (b[i] + h * hist) / diag
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite value in Volterra solution", step=int(np.argmin(np.isfinite(x))))
    return x


def convolve_scalar(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid approximation of ``int_0^t a(t-s) b(s) ds`` on every grid point."""
    full = np.convolve(a, b)[: a.size] * h
    full -= 0.5 * h * (a * b[0] + a[0] * b)
    full[0] = 0.0
    return full


@dataclass(frozen=True, eq=False)
class ScalarKernel:
    """``kappa(t) = local_weight * delta(t) + regular(t)`` on a uniform grid.

    The Dirac part contributes ``local_weight`` times its coefficient to
    the derivative (one full unit of mass at ``s = t``) and ``local_weight`` to
    the Laplace transform.
    """

    local_weight: float
    h: float
    regular: np.ndarray
    residual: float | None = None
    residual_curve: np.ndarray | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.regular.size)

    def laplace(self, p: float) -> tuple[float, float]:
        """Trapezoid Laplace transform and the tail bound ``exp(-pT) max|kappa| / p``."""
        t = self.times
        est = self.local_weight + float(np.trapezoid(np.exp(-p * t) * self.regular, dx=self.h))
        tail = float(np.exp(-p * t[-1]) * np.abs(self.regular).max() / p)
        return est, tail

    def to_json(self) -> dict:
        return {"local_weight": self.local_weight, "h": self.h, "values": self.regular.tolist()}


def kappa_from_f(f: MemoryFunction, times: np.ndarray) -> ScalarKernel:
    """Kernel ``kappa`` with Laplace transform ``p f^ / (1 - f^)``.

    Returns the Dirac weight ``f(0)`` separately and records the sup-norm
    residual of the first-kind equation ``int g(t-s) kappa(s) ds = f(t)``.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        raise InvalidInputError("need at least 3 grid points")
    h = _step_of(times)
    values = f.sample(times)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("memory function samples are not finite")
    if f.closed_form:
        deriv = f.derivative(times)
    else:
        deriv = _gradient(values, h)
    w = float(values[0])
    if w != 0.0 and isinstance(f, Samples):
        warnings.warn(
            f"f(0) = {w:.6g} != 0: kappa has a Dirac component carried as local_weight",
            RuntimeWarning,
            stacklevel=2,
        )
    reg = volterra2_scalar(values, deriv + w * values, h)
    g = 1.0 - trapezoid_cumulative(values, h)
    curve = w * g + convolve_scalar(g, reg, h) - values
    return ScalarKernel(w, h, reg, float(np.abs(curve).max()), curve)
