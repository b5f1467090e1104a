"""Measured mild-map contraction factors on the fixed pair family, for several gamma safety factors.

Prints the measured factor next to the pointwise factor sup |gamma^2 - avg alpha| / gamma^2.

    python scripts/mild_contraction_survey.py --safety 1.5 2 3
"""
import argparse

from mckeanlab import mild
from mckeanlab.acceptance import mild_pairs
from mckeanlab.coefficients import sqrt_affine
from mckeanlab.fields import GridSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--safety", type=float, nargs="+", default=[1.5, 2.0, 3.0])
    ap.add_argument("--n-cells", type=int, default=256)
    ap.add_argument("--dt", type=float, default=5e-3)
    args = ap.parse_args()

    model = sqrt_affine(1.0, 1.0, r_max=1.0)
    grid = GridSpec.from_horizon(8.0, args.n_cells, args.dt, 0.5)
    pairs, u0 = mild_pairs(grid, model)
    for s in args.safety:
        gamma = mild.choose_gamma(model, 1.0, safety=s)
        print(f"safety {s:g}: gamma^2 = {gamma**2:.3f}")
        for name, (p, q) in pairs.items():
            fac = mild.contraction_factor(p, q, model, gamma, u0.values)
            pw = mild.pointwise_factor(p, q, model, gamma)
            print(f"  {name:9s} measured {fac:.3f}   pointwise {pw:.3f}")


if __name__ == "__main__":
    main()
