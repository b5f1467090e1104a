"""Conditional means from a drifted run and from a reweighted driftless run, side by side.

    python scripts/girsanov_demo.py --b "tanh_y(0.8)" --N 100000
"""
import argparse

import numpy as np

from mckeanlab import conditional as cm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--b", default="tanh_y(0.8)")
    ap.add_argument("--sigma", default="const(1)")
    ap.add_argument("--N", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    co = cm.CoefficientSet.from_names(b=args.b, sigma=args.sigma, ell="tanh", gamma="const(1)")
    p = cm.simulate_conditional(co, "correlated_normal(0.5)", args.N, dt=args.dt, T=args.T, seed=args.seed)
    q = cm.simulate_conditional(co, "correlated_normal(0.5)", args.N, dt=args.dt, T=args.T, seed=args.seed + 1,
                                measure="Q")
    rep = cm.weighted_conditional_check(p, q, seed=args.seed)
    print(f"{'x':>7s} {'P-run':>9s} {'Q-run':>9s} {'SE':>8s}")
    for x, a, b, se, ok in zip(*(rep.info[k] for k in ("query", "p", "q", "se", "adequate"))):
        print(f"{x:7.3f} {a:9.4f} {b:9.4f} {se:8.4f}{'' if ok else '  (thin)'}")
    z = np.exp(q.logZ[-1])
    print(f"E_Q[1/Z_T] = {np.mean(1 / z):.4f}   E_Q[Z_T] = {z.mean():.4f}   exp(theta_sup^2 T) = "
          f"{np.exp(co.theta_sup**2 * args.T):.4f}")
    print(rep.summary())


if __name__ == "__main__":
    main()
