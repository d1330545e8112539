"""Compare Heun (Stratonovich) and Ito-corrected Euler-Maruyama ensemble means.

    python3 scripts/weak_agreement.py --paths 10000 --steps 100
"""

import argparse

import numpy as np

from metamorph import DeformationNoiseField, EnsembleSpec, KernelSpec, LandmarkSystem, run_ensemble

X0 = np.array([[[-0.5, 0.0], [0.5, 0.2]], [[1.0, 0.3], [-0.5, 0.8]]])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=10 ** 4)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--amplitude", type=float, default=0.6)
    args = ap.parse_args()
    a = args.amplitude
    sys_ = LandmarkSystem(KernelSpec(), 0.5, [DeformationNoiseField([a, 0.0], [0.0, 0.0], 0.8),
                                              DeformationNoiseField([0.0, a], [0.5, 0.5], 0.7)])
    runs = {}
    for seed, method in ((1, "heun"), (2, "euler_maruyama_ito")):
        runs[method] = run_ensemble(EnsembleSpec(sys_, X0, 1.0, args.steps, method,
                                                 base_seed=seed, realizations=args.paths))
    h, e = runs["heun"], runs["euler_maruyama_ito"]
    se = np.sqrt(h.variance[-1] / h.count + e.variance[-1] / e.count)
    z = (h.mean[-1] - e.mean[-1]) / se
    labels = [f"{v}{i}{k}" for v in "qp" for i in range(2) for k in "xy"]
    for lab, mh, me, zz in zip(labels, h.mean[-1].ravel(), e.mean[-1].ravel(), z.ravel()):
        print(f"{lab}: heun {mh:+.5f}  ito-em {me:+.5f}  z {zz:+.2f}")
    print(f"max |z| = {np.abs(z).max():.2f}")


if __name__ == "__main__":
    main()
