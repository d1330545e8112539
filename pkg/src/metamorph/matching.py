"""Exact (or penalised) landmark matching by shooting the metamorphosis flow."""

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, InvalidInputError
from .landmarks import LandmarkSystem, h_kernel, template_energy
from .kernels import gram
from .sde import Trajectory, integrate_batch, integrate_path


@dataclass
class MatchProblem:
    q0: np.ndarray
    q_target: np.ndarray
    system: LandmarkSystem
    T: float = 1.0
    steps: int = 100
    tol: float = 1e-8
    max_iterations: int = 50
    mode: str = "exact"
    penalty_sigma: float = 0.1

    def __post_init__(self):
        self.q0 = np.atleast_2d(np.asarray(self.q0, dtype=float))
        self.q_target = np.atleast_2d(np.asarray(self.q_target, dtype=float))
        if self.q0.shape != self.q_target.shape:
            raise InvalidInputError("source and target landmark sets differ in shape")
        if self.system.n_channels:
            raise InvalidInputError("matching uses the deterministic flow; remove noise channels")
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if not self.T > 0 or self.steps < 1:
            raise InvalidInputError("need T > 0 and at least one step")
        if self.mode not in ("exact", "penalty"):
            raise InvalidInputError(f"unknown matching mode {self.mode!r}")
        if self.mode == "penalty" and not self.penalty_sigma > 0:
            raise InvalidInputError("penalty_sigma must be positive")


@dataclass
class MatchResult:
    p0: np.ndarray
    residual: float
    iterations: int
    converged: bool
    energy: dict = field(default_factory=dict)
    trajectory: Trajectory = field(default=None, repr=False)

    def to_dict(self):
        return {"p0": self.p0.tolist(), "residual": float(self.residual),
                "iterations": int(self.iterations), "converged": bool(self.converged),
                "energy": {k: float(v) for k, v in self.energy.items()}}


def shoot(q0, p0, system, T, M):
    """Integrate the noise-free flow from ``(q0, p0)``; returns ``(q(T), trajectory)``."""
    if system.n_channels:
        raise InvalidInputError("shoot integrates the deterministic flow only")
    x0 = np.stack([np.atleast_2d(np.asarray(q0, float)), np.atleast_2d(np.asarray(p0, float))])
    traj = integrate_path(system, x0, T, M)
    return traj.states[-1, 0], traj


def _shoot_many(q0, P, system, T, M):
    """Endpoints for a stack of initial momenta ``P`` of shape ``(B, n, d)``."""
    B = P.shape[0]
    x0 = np.stack([np.broadcast_to(q0, P.shape), P], axis=1)
    end, failed = integrate_batch(system, x0, T, np.zeros((B, M, 0)), record=[M])
    return end[0][:, 0], failed


def path_energy(trajectory, system):
    """Trapezoid-in-time integrals of the deformation and template kinetic terms."""
    states = np.asarray(trajectory.states)
    if len(states) < 2:
        return 0.0, 0.0, 0.0
    t = np.asarray(trajectory.times)
    w = np.empty_like(t)
    dt = np.diff(t)
    w[0], w[-1] = dt[0] / 2, dt[-1] / 2
    w[1:-1] = (dt[:-1] + dt[1:]) / 2
    deform = float(np.sum(w * h_kernel(states, system.kernel)))
    templ = float(np.sum(w * template_energy(states, system.lam)))
    return deform + templ, deform, templ


def initial_guess(q0, q_target, system, T):
    """Row-wise ``(target - source) / ((K(0) + lambda^2) T)``; exact for one landmark."""
    return (q_target - q0) / ((system.kernel.g + system.lam ** 2) * T)


def match_landmarks(problem):
    """Gauss-Newton on the shooting map with a forward-difference Jacobian.

    In ``exact`` mode the residual is ``q(T; p0) - q_target``. In ``penalty``
    mode the objective is ``|q(T) - q_target|^2 / (2 s^2) + T h(q0, p0)``,
    written as a stacked least-squares residual.
    """
    pr = problem
    sys_ = pr.system
    q0, target = pr.q0, pr.q_target
    n, d = q0.shape
    M = int(pr.steps)

    if pr.mode == "penalty":
        A = np.kron(gram(sys_.kernel, q0), np.eye(d)) + sys_.lam ** 2 * np.eye(n * d)
        Lt = np.linalg.cholesky(A).T * np.sqrt(pr.T)

    def residual(P, ends):
        r = (ends - target).reshape(len(P), -1)
        if pr.mode == "penalty":
            r = np.concatenate([r / pr.penalty_sigma, P.reshape(len(P), -1) @ Lt.T], axis=1)
        return r

    def evaluate(P):
        ends, failed = _shoot_many(q0, P, sys_, pr.T, M)
        return ends, residual(P, ends), failed

    p = initial_guess(q0, target, sys_, pr.T)
    ends, r, failed = evaluate(p[None])
    if failed[0] >= 0:
        err = BlowUpError(int(failed[0]), "shooting blew up at the initial momenta")
        err.p0 = p
        raise err
    r = r[0]
    match_res = np.linalg.norm(ends[0] - target)
    it = 0
    converged = match_res < pr.tol if pr.mode == "exact" else False
    while not converged and it < pr.max_iterations:
        it += 1
        h = 1e-6 * (1 + np.linalg.norm(p))
        P = p[None] + h * np.eye(n * d).reshape(n * d, n, d)
        _, rj, fj = evaluate(P)
        if np.any(fj >= 0):
            err = BlowUpError(int(fj[fj >= 0][0]), "shooting blew up while forming the Jacobian")
            err.p0 = p
            raise err
        J = ((rj - r) / h).T
        step = -np.linalg.lstsq(J, r, rcond=None)[0].reshape(n, d)
        base = r @ r
        t = 1.0
        for _ in range(31):
            p_try = p + t * step
            e_try, r_try, f_try = evaluate(p_try[None])
            if f_try[0] < 0 and r_try[0] @ r_try[0] < base:
                break
            t *= 0.5
        else:
            break  # no decrease possible: keep the best iterate
        p, r, ends = p_try, r_try[0], e_try
        match_res = np.linalg.norm(ends[0] - target)
        if pr.mode == "exact":
            converged = match_res < pr.tol
        else:
            converged = np.linalg.norm(t * step) < pr.tol * (1 + np.linalg.norm(p))

    _, traj = shoot(q0, p, sys_, pr.T, M)
    total, deform, templ = path_energy(traj, sys_)
    return MatchResult(p, float(match_res), it, bool(converged),
                       {"total": total, "deformation": deform, "template": templ}, traj)
