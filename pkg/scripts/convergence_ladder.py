"""Strong-error ladders for the landmark system under three noise regimes.

    python3 scripts/convergence_ladder.py --paths 200 --levels 6 9
"""

import argparse

import numpy as np

from metamorph import DeformationNoiseField, KernelSpec, LandmarkSystem, strong_convergence_order

X0 = np.array([[[-0.5, 0.0], [0.5, 0.2]], [[1.0, 0.3], [-0.5, 0.8]]])


def systems(lam):
    k = KernelSpec(1.0, 1.0)
    bumps = [DeformationNoiseField([0.8, 0.0], [0.0, 0.0], 1.0),
             DeformationNoiseField([0.0, 0.8], [0.5, 0.5], 0.7),
             DeformationNoiseField([0.5, 0.5], [-0.5, 0.3], 0.8)]
    return {
        "deterministic": LandmarkSystem(k, lam),
        "additive": LandmarkSystem(k, lam, sigma_nu=[[0.3, 0.1], [0.0, 0.3]]),
        "multiplicative": LandmarkSystem(k, lam, bumps),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200)
    ap.add_argument("--levels", type=int, nargs=2, default=[6, 9])
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--method", default="heun", choices=["heun", "euler_maruyama_ito"])
    args = ap.parse_args()
    dts = [2.0 ** -k for k in range(args.levels[0], args.levels[1] + 1)]
    for name, sys_ in systems(args.lam).items():
        res = strong_convergence_order(sys_, X0, 1.0, dts, args.paths, args.method, args.seed)
        print(f"{name:>15s}  slope {res.slope:5.2f}  excluded {res.excluded}")
        for dt, e in zip(res.dts, res.errors):
            print(f"{'':>15s}  dt={dt:.5f}  E|err|={e:.3e}")


if __name__ == "__main__":
    main()
