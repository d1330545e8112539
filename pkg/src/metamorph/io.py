"""CSV/JSON writers. Floats are written with ``repr`` so reruns are byte-identical."""

import csv
import json
import os

import numpy as np

from .ensemble import EnsembleStats
from .sde import Trajectory

PLOT_COLUMNS = ("t", "entity", "coordinate", "value", "realization")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def landmark_trajectory_rows(times, states):
    """Rows ``t, i, q_1..q_d, p_1..p_d`` for states of shape ``(K, 2, n, d)``."""
    for t, x in zip(times, states):
        for i in range(x.shape[1]):
            yield [t, i, *x[0, i], *x[1, i]]


def write_landmark_trajectory(path, times, states):
    d = states.shape[-1]
    header = ["t", "i"] + [f"q_{k + 1}" for k in range(d)] + [f"p_{k + 1}" for k in range(d)]
    return write_csv(path, header, landmark_trajectory_rows(times, states))


def tidy_rows(times, states, realization):
    states = np.asarray(states)
    if states.ndim == 4:  # landmarks: positions only
        for t, x in zip(times, states):
            for i in range(x.shape[1]):
                for k in range(x.shape[2]):
                    yield [t, i, f"q{k + 1}", x[0, i, k], realization]
    elif states.ndim == 3:  # CH2 grid states
        for t, x in zip(times, states):
            for name, row in zip(("m", "rho"), x):
                for j, v in enumerate(row):
                    yield [t, j, name, v, realization]
    else:
        for t, x in zip(times, states):
            for j, v in enumerate(np.ravel(x)):
                yield [t, j, "x", v, realization]


def emit_plot_data(data, out, realization=0):
    """Write long-format CSV (``t, entity, coordinate, value, realization``).

    A ``Trajectory`` (or ``(times, states)`` pair) becomes one file at
    ``out``. ``EnsembleStats`` become ``<out>_mean.csv`` and
    ``<out>_variance.csv`` with an empty realization column. Returns the list
    of written paths.
    """
    if isinstance(data, EnsembleStats):
        stem = out[:-4] if out.endswith(".csv") else out
        paths = []
        for name in ("mean", "variance"):
            arr = getattr(data, name)
            p = f"{stem}_{name}.csv"
            write_csv(p, PLOT_COLUMNS, tidy_rows(data.times, arr, ""))
            paths.append(p)
        return paths
    if isinstance(data, Trajectory):
        times, states = data.times, data.states
    else:
        times, states = data
    if len(times) == 0:
        return [write_csv(out, PLOT_COLUMNS, [])]
    return [write_csv(out, PLOT_COLUMNS, tidy_rows(times, states, realization))]


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
