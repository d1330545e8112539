"""Monte Carlo ensembles with schedule-independent results.

Realizations are processed in fixed-size blocks. Realization ``r`` always
draws its increments from ``derive_seed(base_seed, r)``, each block is
integrated as one batch, and block moments are merged in block order, so
the worker count changes wall time only.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, MetamorphError
from .noise import derive_seed, sample_wiener_path
from .sde import STRATONOVICH_HEUN, check_method, integrate_batch


class EnsembleFailure(MetamorphError):
    pass


def landmark_positions(states):
    """Flattened landmark positions of ``(..., 2, n, d)`` states."""
    q = states[..., 0, :, :]
    return q.reshape(q.shape[:-2] + (-1,))


@dataclass
class EnsembleSpec:
    system: Any
    x0: np.ndarray
    T: float
    steps: int
    method: str = STRATONOVICH_HEUN
    base_seed: int = 0
    realizations: int = 1
    output_times: Optional[Sequence[float]] = None
    block_size: int = 256
    max_failure_fraction: float = 0.01
    keep_trajectories: bool = False
    workers: Optional[int] = None
    positions: Optional[Callable] = None

    def __post_init__(self):
        check_method(self.method)
        self.x0 = np.asarray(self.x0, dtype=float)
        if int(self.realizations) < 1:
            raise InvalidInputError("need at least one realization")
        if not self.T > 0 or int(self.steps) < 1:
            raise InvalidInputError("need T > 0 and at least one step")
        if int(self.block_size) < 1:
            raise InvalidInputError("block_size must be positive")

    @property
    def dt(self):
        return self.T / self.steps

    def output_indices(self):
        if self.output_times is None:
            return [int(self.steps)]
        idx = []
        for t in self.output_times:
            k = int(round(t / self.dt))
            if k < 0 or k > self.steps or abs(k * self.dt - t) > 1e-9 * max(self.T, 1.0):
                raise InvalidInputError(f"output time {t} is not on the time grid")
            idx.append(k)
        return idx

    def seeds(self):
        return [derive_seed(self.base_seed, r) for r in range(self.realizations)]


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    covariance: Optional[np.ndarray]
    count: int
    failures: int
    failed_realizations: list = field(default_factory=list)
    trajectories: Optional[np.ndarray] = field(default=None, repr=False)

    def standard_error(self):
        return np.sqrt(self.variance / self.count)

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "count": int(self.count),
            "failures": int(self.failures),
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }


@dataclass
class _Moments:
    n: int
    mean: np.ndarray
    m2: np.ndarray
    cmean: Optional[np.ndarray]
    c2: Optional[np.ndarray]

    @classmethod
    def of(cls, data, pos):
        """``data``: (R, K, ...) recorded states; ``pos``: (R, K, P) or None."""
        n = data.shape[0]
        shift = data[0]
        dev = data - shift
        mean = shift + dev.mean(axis=0)
        dm = data - mean
        m2 = np.sum(dm * dm, axis=0)
        if pos is None:
            return cls(n, mean, m2, None, None)
        pshift = pos[0]
        cmean = pshift + (pos - pshift).mean(axis=0)
        pd = pos - cmean
        c2 = np.sum(pd[..., :, None] * pd[..., None, :], axis=0)
        return cls(n, mean, m2, cmean, c2)

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        w = self.n * other.n / n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * w
        if self.cmean is None:
            return _Moments(n, mean, m2, None, None)
        cd = other.cmean - self.cmean
        cmean = self.cmean + cd * (other.n / n)
        c2 = self.c2 + other.c2 + cd[..., :, None] * cd[..., None, :] * w
        return _Moments(n, mean, m2, cmean, c2)


def _workers(spec):
    if spec.workers is not None:
        return max(1, int(spec.workers))
    env = os.environ.get("METAMORPH_THREADS")
    return max(1, int(env)) if env else 1


def _run_block(spec, seeds, record):
    C = spec.system.n_channels
    inc = np.stack([sample_wiener_path(s, spec.dt, spec.steps, C).increments for s in seeds])
    states, failed = integrate_batch(spec.system, spec.x0, spec.T, inc, spec.method, record)
    return np.moveaxis(states, 0, 1), failed


def run_ensemble(spec):
    """Integrate ``spec.realizations`` paths and return their moments."""
    record = spec.output_indices()
    seeds = spec.seeds()
    R, B = spec.realizations, int(spec.block_size)
    blocks = [seeds[i:i + B] for i in range(0, R, B)]
    positions = spec.positions
    if positions is None and getattr(spec.system, "state_ndim", None) == 3:
        positions = landmark_positions

    def work(block):
        return _run_block(spec, block, record)

    nw = _workers(spec)
    if nw > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    total = _Moments(0, None, None, None, None)
    failed_ids = []
    kept = []
    for bi, (states, failed) in enumerate(results):
        ok = failed < 0
        failed_ids.extend(int(bi * B + j) for j in np.flatnonzero(~ok))
        good = states[ok]
        if spec.keep_trajectories:
            kept.append(states)
        if good.shape[0]:
            total = total.merge(_Moments.of(good, positions(good) if positions else None))
    nfail = len(failed_ids)
    if nfail > spec.max_failure_fraction * R:
        raise EnsembleFailure(f"{nfail} of {R} realizations blew up "
                              f"(limit {spec.max_failure_fraction:.2%})")
    if total.n == 0:
        raise EnsembleFailure("no realization completed")
    var = total.m2 / (total.n - 1) if total.n > 1 else np.zeros_like(total.m2)
    cov = None
    if total.c2 is not None:
        cov = total.c2 / (total.n - 1) if total.n > 1 else np.zeros_like(total.c2)
    times = np.array(record) * spec.dt
    traj = np.concatenate(kept) if kept else None
    return EnsembleStats(times, total.mean, var, cov, total.n, nfail, failed_ids, traj)


def endpoint_moments(states):
    """Sample mean and ``1/(R-1)`` covariance of flattened states ``(R, ...)``."""
    x = np.asarray(states, dtype=float)
    R = x.shape[0]
    if R < 2:
        raise InvalidInputError("covariance needs at least two realizations")
    x = x.reshape(R, -1)
    mean = x.mean(axis=0)
    d = x - mean
    return mean, d.T @ d / (R - 1)
