"""Regenerate the stored regression baselines under tests/data.

Run only when a numerical change is intended; the tests compare against
these files.
"""

import json
import os
import shutil
import subprocess
import sys
import tempfile

import numpy as np

from metamorph.kernels import KernelSpec
from metamorph.landmarks import LandmarkSystem
from metamorph.matching import MatchProblem, match_landmarks

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "tests", "data")

LAMBDA0_Q0 = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
LAMBDA0_TARGET = [[0.2, 0.1], [1.1, 0.3], [-0.1, 1.2]]


def lambda0_match():
    prob = MatchProblem(LAMBDA0_Q0, LAMBDA0_TARGET, LandmarkSystem(KernelSpec(1.0, 1.0), 0.0),
                        T=1.0, steps=100, tol=1e-10)
    res = match_landmarks(prob)
    out = {"q0": LAMBDA0_Q0, "q_target": LAMBDA0_TARGET, "p0": res.p0.tolist(),
           "residual": res.residual, "energy": res.energy}
    with open(os.path.join(DATA, "match_lambda0_baseline.json"), "w") as fh:
        json.dump(out, fh, indent=1)


def deterministic_landmark_run():
    cfg = os.path.join(DATA, "landmark_deterministic.json")
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "metamorph.cli", "run", cfg, "--out", tmp, "--quiet"],
                       check=True)
        shutil.copy(os.path.join(tmp, "trajectory.csv"),
                    os.path.join(DATA, "landmark_deterministic_trajectory.csv"))


if __name__ == "__main__":
    os.makedirs(DATA, exist_ok=True)
    lambda0_match()
    deterministic_landmark_run()
    np.set_printoptions(precision=17)
    print("baselines written to", os.path.abspath(DATA))
