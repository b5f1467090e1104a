"""W1 distance between the moderated particle marginal and the Fokker-Planck density over N and seeds.

    python scripts/particle_vs_pde.py --N 1000 10000 100000 --seeds 1 2 3
"""
import argparse

import numpy as np

from mckeanlab.acceptance import PARTICLE_LAW, PARTICLE_MODEL
from mckeanlab.fields import GridSpec
from mckeanlab.fp_solver import initial_density, project_initial, solve_nonlinear_fp
from mckeanlab.metrics import wasserstein1_1d
from mckeanlab.particles import initial_law, simulate_moderated


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[1000, 10_000, 100_000])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--T", type=float, default=0.5)
    args = ap.parse_args()

    grid = GridSpec.from_horizon(8.0, 1024, 1e-3, args.T)
    ref = solve_nonlinear_fp(PARTICLE_MODEL, project_initial(initial_density(PARTICLE_LAW), grid), 0.0, grid).final
    for n in args.N:
        w1 = []
        for seed in args.seeds:
            path, _ = simulate_moderated(PARTICLE_MODEL, initial_law(PARTICLE_LAW), n, None, args.dt, args.T, seed)
            w1.append(wasserstein1_1d(path.final.positions, ref))
        print(f"N={n:7d}  W1 median={np.median(w1):.4f}  per seed={np.round(w1, 4).tolist()}")


if __name__ == "__main__":
    main()
