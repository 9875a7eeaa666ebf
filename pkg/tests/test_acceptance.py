"""Acceptance criteria, each at its stated tolerance.

Every test records one ``[PASS]``/``[FAIL]`` line; the lines are printed as
they are produced and again in the terminal summary.
"""
import json

import numpy as np

from memkernel import algebra, cli
from memkernel.algebra import SIGMA_X, SuperOp, dephasing, expm_stack
from memkernel.families import (
    DilationSpec,
    MixtureSpec,
    dilation_reduced,
    exchange_model,
    mixture_evolution,
    mixture_kernel_n2,
    mixture_kernel_n2_hat,
    mixture_kernel_n3_hat,
)
from memkernel.kernels import KernelSpec, certify, make_scalar_cp_kernel, z_from_F
from memkernel.memory import Erlang, check_admissible, kappa_from_f
from memkernel.volterra import TimeGrid, evolve, extract_G, kernel_from_G, solve_normalization

from .conftest import ACCEPTANCE_LINES, random_channel, random_diagonal_gksl, random_gksl

# Quadrature constants, calibrated once on the scalar sigma_x data and frozen.
C_ROUND_TRIP = 5.0
C_BREUER_VACCHINI = 1.0


def record(n, ok, what):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {what}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def qubit_closed_form(t, gamma):
    B = SuperOp.conjugation(SIGMA_X).matrix
    p0, p2 = (np.eye(4) + B) / 2, (np.eye(4) - B) / 2
    a = np.exp(-gamma * t) * (np.cos(gamma * t) + np.sin(gamma * t))
    return p0[None] + a[:, None, None] * p2[None]


def test_criterion_1_markovian_recovery():
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in (2, 3):
        for _ in range(5):
            L = random_gksl(rng, d).matrix
            nrm = np.linalg.norm(L, 2)
            grid = TimeGrid.from_horizon(1e-3 / nrm, 5 / nrm)
            tr = evolve(KernelSpec(d, L), grid)
            ref = expm_stack(L, grid.times)
            rel = np.linalg.norm(tr.maps - ref, axis=(1, 2)) / np.linalg.norm(ref, axis=(1, 2))
            worst = max(worst, rel.max())
    record(1, worst <= 1e-6, f"Markovian recovery, max relative error {worst:.2e} (<= 1e-6)")


def test_criterion_2_scalar_cp_guarantee():
    rng = np.random.default_rng(2)
    gamma = 1.0
    grid = TimeGrid.from_horizon(1e-2 / gamma, 10 / gamma)
    cp, unit = np.inf, 0.0
    for order in (2, 3):
        kappa = kappa_from_f(Erlang(gamma, order), grid.times)
        for d in (2, 3):
            for _ in range(5):
                tr = evolve(make_scalar_cp_kernel(kappa, random_channel(rng, d)), grid)
                cp = min(cp, tr.cp_defect.min())
                unit = max(unit, tr.unitality_defect.max())
    ok = cp >= -1e-7 and unit <= 1e-7
    record(2, ok, f"scalar CP kernels, min cp_defect {cp:.2e} (>= -1e-7), max unitality {unit:.2e} (<= 1e-7)")


def test_criterion_3_scalar_oracle():
    gamma = 1.0
    B = SuperOp.conjugation(SIGMA_X)
    errs = []
    for h in (1e-3 / gamma, 0.5e-3 / gamma):
        grid = TimeGrid.from_horizon(h, 5 / gamma)
        tr = evolve(make_scalar_cp_kernel(kappa_from_f(Erlang(gamma, 2), grid.times), B), grid)
        errs.append(np.abs(tr.maps - qubit_closed_form(grid.times, gamma)).max())
    ratio = errs[0] / errs[1]
    ok = errs[0] <= 1e-5 and 3.5 <= ratio <= 4.5
    record(3, ok, f"qubit oracle, sup error {errs[0]:.2e} (<= 1e-5), halving ratio {ratio:.3f} (in [3.5, 4.5])")


def test_criterion_4_z_round_trip():
    rng = np.random.default_rng(4)
    h = 0.01
    grid = TimeGrid.from_horizon(h, 8)
    t = grid.times
    f = Erlang(1.0, 2)
    worst = 0.0
    for d in (2, 3):
        B = random_channel(rng, d).matrix
        F = f.sample(t)[:, None, None] * B
        z = z_from_F(F, h, f.derivative(t)[:, None, None] * B)
        N = solve_normalization(z, grid).N
        target = np.eye(d * d) - f.integral(t)[:, None, None] * B
        worst = max(worst, np.linalg.norm(N - target, axis=(1, 2)).max())
    bound = C_ROUND_TRIP * h**2
    record(4, worst <= bound, f"Z from F then N = I - int F, residual {worst:.2e} (<= {C_ROUND_TRIP:g} h^2 = {bound:.1e})")


def test_criterion_5_breuer_vacchini_identity():
    gamma = 1.0
    B = SuperOp.conjugation(SIGMA_X)
    f = Erlang(gamma, 2)
    ok, parts = True, []
    for h in (0.01, 0.005):
        grid = TimeGrid.from_horizon(h, 8)
        spec = make_scalar_cp_kernel(kappa_from_f(f, grid.times), B)
        M = certify(spec, grid)["breuer_vacchini"].M
        err = np.linalg.norm(M - f.sample(grid.times)[:, None, None] * B.matrix, axis=(1, 2)).max()
        ok &= err <= C_BREUER_VACCHINI * h**2
        parts.append(f"h={h:g}: {err:.2e}")
    record(5, ok, f"int N B = f B, {', '.join(parts)} (<= {C_BREUER_VACCHINI:g} h^2)")


def test_criterion_6_n2_mixture():
    L1, L2 = dephasing(1.0).matrix, dephasing(3.0).matrix
    x1 = x2 = 0.5
    grid = TimeGrid.from_horizon(1e-3, 5)
    spec = MixtureSpec([x1, x2], [L1, L2])
    direct = mixture_evolution(spec, grid)
    sup = np.abs(evolve(mixture_kernel_n2(x1, x2, L1, L2), grid).maps - direct.maps).max()
    grid = TimeGrid.from_horizon(5e-4, 20)
    tr = mixture_evolution(spec, grid)
    samples = kernel_from_G(extract_G(tr), [1.0, 2.0, 5.0], trace=tr)
    lap = max(np.abs(s.L_hat - mixture_kernel_n2_hat(x1, x2, L1, L2, s.p)).max() for s in samples)
    tail = max(s.tail_bound for s in samples)
    ok = sup <= 1e-5 and lap <= 1e-4 and tail <= 1e-6
    record(6, ok, f"n=2 mixture, evolve sup {sup:.2e} (<= 1e-5), Laplace {lap:.2e} (<= 1e-4), tail {tail:.1e} (<= 1e-6)")


def test_criterion_7_n3_laplace():
    rng = np.random.default_rng(7)
    grid = TimeGrid.from_horizon(1e-3, 25)
    worst = 0.0
    for _ in range(3):
        gens = [random_diagonal_gksl(rng, 2) for _ in range(3)]
        x = rng.dirichlet(np.ones(3))
        x[-1] = 1 - x[:-1].sum()
        tr = mixture_evolution(MixtureSpec(x, gens), grid)
        for s in kernel_from_G(extract_G(tr), [1.0, 2.0, 5.0], trace=tr):
            worst = max(worst, np.abs(s.L_hat - mixture_kernel_n3_hat(x, *gens, s.p)).max())
    record(7, worst <= 1e-4, f"n=3 closed form vs numeric kernel, max error {worst:.2e} (<= 1e-4)")


def test_criterion_8_dilation_pipeline():
    grid = TimeGrid.from_horizon(2e-3, 20)
    tr = dilation_reduced(DilationSpec(2, 2, exchange_model(1.0, 1.0)), grid)
    G = extract_G(tr)
    samples = kernel_from_G(G, [1.0, 2.0, 5.0], trace=tr)
    cp = tr.cp_defect.min()
    res = max(s.resolvent_residual for s in samples)
    ok = cp >= -1e-7 and G.max_unit_residual <= 1e-6 and res <= 1e-3
    record(
        8,
        ok,
        f"exchange-model dilation, cp_defect {cp:.1e} (>= -1e-7), ||G(1)|| {G.max_unit_residual:.1e} (<= 1e-6), "
        f"resolvent {res:.1e} (<= 1e-3)",
    )


def _write_config(tmp_path, name, cfg):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return path


def test_criterion_9_negative_controls(tmp_path):
    swap_defect = algebra.cp_defect(SuperOp.transpose_map(2))
    payload = {"dim": 2, "memory": {"type": "scalar_cp", "f": {"kind": "erlang", "gamma": 1.0, "order": 2}, "B": {"map": "transpose", "dim": 2}}}
    path = _write_config(tmp_path, "transpose", {"grid": {"h": 0.01, "T": 3.0}, "payload": payload})
    code = cli.main(["certify", "-c", str(path), "-o", str(tmp_path / "transpose")])
    rep = json.loads((tmp_path / "transpose" / "report.json").read_text())
    flagged_defect = rep["theorem1"]["min_cp_defect_B"]
    adm = check_admissible(Erlang(1.0, 2, weight=1.5), 20.0)
    path = _write_config(tmp_path, "heavy", {"grid": {"h": 0.01, "T": 5.0}, "payload": {"f": {"kind": "erlang", "gamma": 1.0, "order": 2, "weight": 1.5}}})
    heavy_code = cli.main(["kernel-from-f", "-c", str(path), "-o", str(tmp_path / "heavy")])
    ok = (
        abs(swap_defect + 1) < 1e-12
        and abs(flagged_defect + 1) < 1e-3
        and code == 2
        and rep["checks"]["theorem1"] == "fail"
        and not adm.passed
        and heavy_code == 2
    )
    record(
        9,
        ok,
        f"negative controls, transpose defect {flagged_defect:.4f} flagged with exit {code}; "
        f"int f = {adm.integral:.3f} rejected (exit {heavy_code})",
    )


SP = [[0, 1], [0, 0]]
SM = [[0, 0], [1, 0]]
DEPHASING = {"gksl": {"hamiltonian": {"dim": 2, "re": [[0, 0], [0, 0]]}, "jumps": [{"op": {"dim": 2, "re": [[1, 0], [0, -1]]}, "rate": 1.0}]}}
SCENARIO_CONFIGS = {
    "evolve": {"grid": {"h": 0.01, "T": 2.0}, "payload": {"dim": 2, "local": DEPHASING}},
    "certify": {
        "grid": {"h": 0.01, "T": 2.0},
        "payload": {"dim": 2, "memory": {"type": "scalar_cp", "f": {"kind": "erlang", "gamma": 1.0, "order": 3}, "B": {"unitary": {"dim": 2, "re": [[0, 1], [1, 0]]}}}},
    },
    "kernel-from-f": {"grid": {"h": 0.01, "T": 2.0}, "payload": {"f": {"kind": "erlang", "gamma": 1.0, "order": 2}}},
    "mixture": {"grid": {"h": 0.01, "T": 2.0}, "payload": {"weights": [0.5, 0.5], "generators": [DEPHASING, {"map": "zero", "dim": 2}]}},
    "time-mixture": {"grid": {"h": 0.01, "T": 2.0}, "payload": {"weights": [{"kind": "erlang", "gamma": 1.0, "order": 1}], "generators": [DEPHASING]}},
    "dilate": {
        "grid": {"h": 0.01, "T": 2.0},
        "payload": {
            "system_dim": 2,
            "env_dim": 2,
            "total": {
                "hamiltonian": {"dim": 4, "re": (np.kron(SP, SM) + np.kron(SM, SP)).tolist()},
                "jumps": [{"op": {"dim": 4, "re": np.kron(np.eye(2), SP).tolist()}, "rate": 1.0}],
            },
        },
        "dump_superops": True,
        "dump_every": 50,
    },
    "laplace-check": {
        "grid": {"h": 0.01, "T": 2.0},
        "payload": {"source": {"kind": "mixture", "payload": {"weights": [0.5, 0.5], "generators": [DEPHASING, {"map": "zero", "dim": 2}]}}},
    },
}


def test_criterion_10_determinism(tmp_path):
    mismatched = []
    for name, cfg in SCENARIO_CONFIGS.items():
        path = _write_config(tmp_path, name, cfg)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run / name
            cli.main([name, "-c", str(path), "-o", str(out)])
            outs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
        if not outs[0] or outs[0] != outs[1]:
            mismatched.append(name)
    n_ok = len(SCENARIO_CONFIGS) - len(mismatched)
    record(10, not mismatched, f"determinism, {n_ok}/{len(SCENARIO_CONFIGS)} scenarios byte-identical on re-run")
