"""Step-size study of the Volterra solver against the qubit closed form.

Kernel kappa(t) = gamma^2 exp(-2 gamma t) (from erlang(gamma, 2)) with B the
sigma_x conjugation; on the (I - B)/2 sector the exact evolution is
exp(-gamma t)(cos gamma t + sin gamma t).
"""
import argparse

import numpy as np

from memkernel import SuperOp, TimeGrid, evolve, kappa_from_f, make_scalar_cp_kernel
from memkernel.algebra import SIGMA_X
from memkernel.memory import Erlang


def closed_form(t, gamma):
    B = SuperOp.conjugation(SIGMA_X).matrix
    p0, p2 = (np.eye(4) + B) / 2, (np.eye(4) - B) / 2
    a = np.exp(-gamma * t) * (np.cos(gamma * t) + np.sin(gamma * t))
    return p0[None] + a[:, None, None] * p2[None]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=5.0, help="horizon in units of 1/gamma")
    ap.add_argument("--steps", type=float, nargs="+", default=[8e-3, 4e-3, 2e-3, 1e-3, 5e-4])
    args = ap.parse_args()

    B = SuperOp.conjugation(SIGMA_X)
    prev = None
    print(f"{'h':>10} {'n':>7} {'sup error':>12} {'ratio':>7}")
    for h in args.steps:
        grid = TimeGrid.from_horizon(h / args.gamma, args.T / args.gamma)
        spec = make_scalar_cp_kernel(kappa_from_f(Erlang(args.gamma, 2), grid.times), B)
        err = np.abs(evolve(spec, grid).maps - closed_form(grid.times, args.gamma)).max()
        ratio = "" if prev is None else f"{prev / err:7.3f}"
        print(f"{h:10.1e} {grid.count:7d} {err:12.3e} {ratio}")
        prev = err


if __name__ == "__main__":
    main()
