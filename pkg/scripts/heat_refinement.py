"""L1 error of the Fokker-Planck solver against the exact heat solution under (h, dt) refinement.

    python scripts/heat_refinement.py --levels 5 --out heat_refinement.csv
"""
import argparse
import csv

import numpy as np
from scipy import stats

from mckeanlab.coefficients import constant
from mckeanlab.fields import GridSpec
from mckeanlab.fp_solver import initial_density, project_initial, solve_nonlinear_fp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--n0", type=int, default=128)
    ap.add_argument("--dt0", type=float, default=1e-2)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    rows = []
    for lev in range(args.levels):
        grid = GridSpec.from_horizon(8.0, args.n0 * 2**lev, args.dt0 / 2**lev, args.T)
        u0 = project_initial(initial_density("normal(0, 0.25)"), grid)
        traj = solve_nonlinear_fp(constant(1.0), u0, 0.0, grid)
        exact = stats.norm(0, np.sqrt(0.25 + args.T)).pdf(grid.centers)
        err = grid.h * np.abs(traj.final.values - exact).sum()
        order = np.log2(rows[-1][3] / err) if rows else float("nan")
        rows.append((grid.n_cells, grid.h, grid.dt, err, order))
        print(f"n={grid.n_cells:5d} h={grid.h:.4g} dt={grid.dt:.3g}  L1={err:.3e}  order={order:.2f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_cells", "h", "dt", "l1_error", "order"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
