import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memkernel import algebra
from memkernel.algebra import SIGMA_X, SIGMA_Z, SuperOp
from memkernel.errors import InvalidInputError
from memkernel.kernels import (
    KernelSpec,
    ScalarCPMemory,
    SplitMemory,
    ZSolution,
    breuer_vacchini_check,
    certify,
    generalized_generator,
    make_scalar_cp_kernel,
    theorem1_check,
    z_from_F,
)
from memkernel.memory import Erlang, ScalarKernel, check_admissible, kappa_from_f, trapezoid_cumulative
from memkernel.volterra import TimeGrid, convolve_ops, evolve, laplace_sample, solve_normalization

from .conftest import random_channel

BX = SuperOp.conjugation(SIGMA_X)
BZ = SuperOp.conjugation(SIGMA_Z)


def scalar_example(gamma=1.0, h=5e-3, T=8.0, order=2, B=BX):
    grid = TimeGrid.from_horizon(h, T)
    f = Erlang(gamma, order)
    return grid, f, make_scalar_cp_kernel(kappa_from_f(f, grid.times), B)


def test_scalar_cp_kernel_samples():
    gamma = 1.0
    grid, f, spec = scalar_example(gamma)
    mem = spec.memory_samples(grid)
    expected = gamma**2 * np.exp(-2 * gamma * grid.times)[:, None, None] * (BX.matrix - np.eye(4))
    assert np.abs(mem - expected).max() < 1e-4
    assert spec.local_part() is None


def test_scalar_cp_kernel_dirac_goes_local():
    grid = TimeGrid.from_horizon(0.01, 1)
    spec = make_scalar_cp_kernel(kappa_from_f(Erlang(2.0, 1), grid.times), BX)
    np.testing.assert_allclose(spec.local_part(), 2.0 * (BX.matrix - np.eye(4)))


def test_zero_kappa_and_identity_B():
    grid = TimeGrid.from_horizon(0.01, 1)
    zero = ScalarKernel(0.0, 0.01, np.zeros(grid.count))
    tr = evolve(make_scalar_cp_kernel(zero, BX), grid)
    assert np.all(tr.maps == np.eye(4))
    kappa = kappa_from_f(Erlang(1.0, 2), grid.times)
    spec = make_scalar_cp_kernel(kappa, SuperOp.identity(2))
    assert np.all(spec.memory_samples(grid) == 0)


def test_scalar_cp_rejects_bad_B():
    kappa = ScalarKernel(0.0, 0.1, np.zeros(3))
    with pytest.raises(InvalidInputError, match="completely positive"):
        make_scalar_cp_kernel(kappa, SuperOp.transpose_map(2))
    with pytest.raises(InvalidInputError, match="unital"):
        make_scalar_cp_kernel(kappa, 0.5 * BX)
    make_scalar_cp_kernel(kappa, SuperOp.transpose_map(2), check=False)


def test_z_from_F_scalar_structure():
    gamma = 1.0
    h = 2e-3
    grid = TimeGrid.from_horizon(h, 8)
    t = grid.times
    f = Erlang(gamma, 2)
    F = f.sample(t)[:, None, None] * np.eye(4)
    z = z_from_F(F, h, f.derivative(t)[:, None, None] * np.eye(4))
    assert z.local is None
    np.testing.assert_allclose(z.values, kappa_from_f(f, t).regular[:, None, None] * np.eye(4), atol=1e-12)
    assert np.abs(z.values[:, 0, 0] - gamma**2 * np.exp(-2 * gamma * t)).max() < 1e-5


def test_z_from_F_zero():
    z = z_from_F(np.zeros((50, 4, 4)), 0.1)
    assert np.all(z.values == 0)
    assert z.residual == 0


def test_z_from_F_dirac_content():
    grid = TimeGrid.from_horizon(1e-3, 4)
    F = Erlang(1.0, 1).sample(grid.times)[:, None, None] * BX.matrix
    with pytest.warns(RuntimeWarning, match="Dirac"):
        z = z_from_F(F, grid.step)
    np.testing.assert_allclose(z.local, BX.matrix)
    assert z.residual < 1e-5


def test_z_from_F_rejects_non_finite():
    F = np.zeros((5, 4, 4))
    F[2, 0, 0] = np.inf
    with pytest.raises(InvalidInputError):
        z_from_F(F, 0.1)


@pytest.mark.parametrize("B", [BX, "random"])
def test_z_from_F_convolution_residual(B, rng):
    B = random_channel(rng, 2) if B == "random" else B
    res = []
    for h in (0.02, 0.01):
        grid = TimeGrid.from_horizon(h, 8)
        t = grid.times
        f = Erlang(1.0, 2)
        F = f.sample(t)[:, None, None] * B.matrix
        z = z_from_F(F, h, f.derivative(t)[:, None, None] * B.matrix)
        # independent re-check of the first-kind equation
        N = np.eye(4) - trapezoid_cumulative(F, h)
        direct = np.linalg.norm(convolve_ops(N, z.values, h) - F, axis=(1, 2)).max()
        assert direct == pytest.approx(z.residual)
        res.append(z.residual)
    assert res[1] < 2 * 0.01**2
    assert 3.5 < res[0] / res[1] < 4.5


def test_z_then_normalization_roundtrip(rng):
    B = random_channel(rng, 2)
    h = 0.01
    grid = TimeGrid.from_horizon(h, 8)
    t = grid.times
    f = Erlang(1.0, 2)
    F = f.sample(t)[:, None, None] * B.matrix
    z = z_from_F(F, h, f.derivative(t)[:, None, None] * B.matrix)
    sol = solve_normalization(z, grid)
    target = np.eye(4) - f.integral(t)[:, None, None] * B.matrix
    assert np.linalg.norm(sol.N - target, axis=(1, 2)).max() <= 5 * h**2


def test_laplace_identity_for_Z():
    h = 2e-3
    grid = TimeGrid.from_horizon(h, 20)
    t = grid.times
    f = Erlang(1.0, 2)
    F = f.sample(t)[:, None, None] * BX.matrix
    z = z_from_F(F, h, f.derivative(t)[:, None, None] * BX.matrix)
    for p in (1.0, 2.0, 3.0, 5.0):
        zh, tz = laplace_sample(z.values, h, p)
        fh, tf = laplace_sample(F, h, p)
        assert max(tz, tf) < 1e-8
        np.testing.assert_allclose(zh @ (np.eye(4) - fh), p * fh, atol=1e-5)


def test_theorem1_passes_for_scalar_example():
    grid, f, spec = scalar_example()
    rep = theorem1_check(spec, grid)
    assert rep.passed
    g = (1 + grid.times) * np.exp(-grid.times)
    assert np.abs(rep.normalization.N - g[:, None, None] * np.eye(4)).max() < 1e-4
    assert rep.details["min_cp_defect_N"] >= -rep.tol


def test_theorem1_negative_kappa_grows_N():
    grid = TimeGrid.from_horizon(0.01, 3)
    kappa = kappa_from_f(Erlang(1.0, 2), grid.times)
    Z = -kappa.regular[:, None, None] * np.eye(4)
    spec = KernelSpec(2, None, SplitMemory(grid.step, np.zeros_like(Z), Z))
    rep = theorem1_check(spec, grid)
    N = rep.normalization.N
    scal = N[:, 0, 0].real
    assert np.all(np.diff(scal) > 0)
    np.testing.assert_allclose(N, scal[:, None, None] * np.eye(4), atol=1e-12)
    assert rep.details["checks"]["N_cp"]
    # the matching memory function 2 - g integrates beyond 1
    f_equiv = Erlang(1.0, 2, weight=-1.0)
    assert not check_admissible(f_equiv, 3.0).passed


def test_theorem1_transpose_fails():
    grid = TimeGrid.from_horizon(0.01, 3)
    kappa = kappa_from_f(Erlang(1.0, 2), grid.times)
    spec = make_scalar_cp_kernel(kappa, SuperOp.transpose_map(2), check=False)
    rep = theorem1_check(spec, grid)
    assert not rep.passed
    assert not rep.details["checks"]["B_cp"]
    assert rep.details["min_cp_defect_B"] == pytest.approx(-kappa.regular.max(), rel=1e-12)


def test_theorem1_local_part_moves_to_Z():
    grid = TimeGrid.from_horizon(0.01, 2)
    L = algebra.dephasing(0.5).matrix
    kappa = kappa_from_f(Erlang(1.0, 2), grid.times)
    base = make_scalar_cp_kernel(kappa, BX)
    spec = KernelSpec(2, L, base.memory)
    rep = theorem1_check(spec, grid)
    assert rep.passed


def test_breuer_vacchini_scalar_example():
    res = []
    for h in (0.01, 0.005):
        grid, f, spec = scalar_example(h=h)
        out = certify(spec, grid)
        bv = out["breuer_vacchini"]
        assert bv.passed
        M = bv.M
        err = np.linalg.norm(M - f.sample(grid.times)[:, None, None] * BX.matrix, axis=(1, 2)).max()
        res.append(err)
    assert res[1] <= 1.0 * 0.005**2
    assert 3.5 < res[0] / res[1] < 4.5


def test_breuer_vacchini_zero_and_transpose():
    grid = TimeGrid.from_horizon(0.01, 3)
    N = solve_normalization(np.zeros((grid.count, 4, 4)), grid)
    assert breuer_vacchini_check(N, np.zeros((grid.count, 4, 4))).passed
    kappa = kappa_from_f(Erlang(1.0, 2), grid.times)
    bad = make_scalar_cp_kernel(kappa, SuperOp.transpose_map(2), check=False)
    out = certify(bad, grid)
    bv = out["breuer_vacchini"]
    assert not bv.passed
    fmax = Erlang(1.0, 2).sample(grid.times).max()
    assert bv.details["min_cp_defect_M"] == pytest.approx(-fmax, rel=1e-3)


def test_breuer_vacchini_grid_mismatch():
    grid = TimeGrid.from_horizon(0.1, 1)
    N = solve_normalization(np.zeros((grid.count, 4, 4)), grid)
    with pytest.raises(InvalidInputError):
        breuer_vacchini_check(N, np.zeros((3, 4, 4)))


def test_erlang3_fails_theorem1_but_passes_breuer_vacchini():
    grid, f, spec = scalar_example(order=3, T=10)
    out = certify(spec, grid)
    assert not out["theorem1"].passed  # kappa changes sign
    assert out["breuer_vacchini"].passed
    assert evolve(spec, grid).cp_defect.min() >= -1e-10


def test_generalized_generator_scalar_case():
    grid, f, spec = scalar_example(h=0.01, T=3)
    kappa = spec.memory.kappa
    Zv = kappa.regular[:, None, None] * np.eye(4)
    gen = generalized_generator(ZSolution(grid.step, Zv, None, 0.0), BX)
    np.testing.assert_allclose(gen.memory_samples(grid), spec.memory_samples(grid), atol=1e-15)


def test_generalized_generator_identity_B():
    Zv = np.random.default_rng(0).normal(size=(5, 4, 4))
    gen = generalized_generator(ZSolution(0.1, Zv, None, 0.0), SuperOp.identity(2))
    assert np.abs(gen.memory_samples(TimeGrid(0.1, 5))).max() < 1e-15


def _pipeline(F0, h=0.01, T=6.0):
    grid = TimeGrid.from_horizon(h, T)
    t = grid.times
    f = Erlang(1.0, 2)
    F = f.sample(t)[:, None, None] * F0.matrix
    z = z_from_F(F, h, f.derivative(t)[:, None, None] * F0.matrix)
    return grid, z, generalized_generator(z, BX)


def test_generalized_generator_pipeline():
    grid, z, spec = _pipeline(SuperOp.identity(2))
    assert spec.memory.provenance["source"] == "generalized_generator"
    assert theorem1_check(spec, grid).passed
    assert certify(spec, grid)["breuer_vacchini"].passed
    tr = evolve(spec, grid)
    assert tr.cp_defect.min() >= -1e-7
    assert tr.unitality_defect.max() <= 1e-7
    with pytest.raises(InvalidInputError):
        generalized_generator(z, SuperOp.transpose_map(2))


def test_generalized_generator_sigma_z_F_is_flagged():
    # F_t = f(t) (sigma_z conjugation) is CP, but N_t = I - g(t) BZ is not: the
    # Choi matrix of I is rank one, so I - c BZ has eigenvalue -c.  The resulting
    # kernel grows linearly in the (BX=-1, BZ=-1) sector and the evolution leaves CP.
    grid, z, spec = _pipeline(BZ)
    rep = theorem1_check(spec, grid)
    assert not rep.passed and not rep.details["checks"]["N_cp"]
    assert not certify(spec, grid)["breuer_vacchini"].passed
    tr = evolve(spec, grid)
    assert tr.cp_defect.min() < -1.0
    assert np.linalg.norm(tr.maps[-1], 2) > 5.0


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]), st.integers(2, 3), st.floats(0.5, 2.0))
def test_scalar_cp_evolution_is_cp_and_unital(seed, d, order, gamma):
    rng = np.random.default_rng(seed)
    B = random_channel(rng, d)
    grid = TimeGrid.from_horizon(0.02 / gamma, 6 / gamma)
    spec = make_scalar_cp_kernel(kappa_from_f(Erlang(gamma, order), grid.times), B)
    tr = evolve(spec, grid)
    assert tr.cp_defect.min() >= -1e-7
    assert tr.unitality_defect.max() <= 1e-7
