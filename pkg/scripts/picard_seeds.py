"""Picard distances D_k and fitted geometric ratios over seeds.

    python scripts/picard_seeds.py --N 100000 --dt 1e-3 --seeds 0 1 2 3 4
"""
import argparse

import numpy as np

from mckeanlab import conditional as cm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--c-factor", type=float, default=1.0, help="multiple of the default rate 4 (L_ell^2 + L_gam^2)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    co = cm.CoefficientSet.from_names(b="zero", ell="half_sin", gamma="const(1)")
    norm = cm.PathNormSpec(args.c_factor * co.default_c(), args.dt, args.T)
    ratios = []
    for seed in args.seeds:
        res = cm.picard_iterate(co, "correlated_normal(0.5)", args.N, norm, args.K, seed)
        ratios.append(res.geometric_ratio)
        print(f"seed {seed}: ratio {res.geometric_ratio:.4f}  floor {res.floor_index}  "
              f"D = {np.array2string(res.distances, precision=3)}")
    print(f"median ratio {np.median(ratios):.4f}")


if __name__ == "__main__":
    main()
