"""Stochastic metamorphosis of landmarks.

Phase-space points are stored as arrays of shape ``(..., 2, n, d)`` with
``x[..., 0]`` the positions and ``x[..., 1]`` the momenta; any leading axes
are independent realizations and are carried through every function.

Noise channels are ordered as the ``K^u`` deformation fields followed by one
template channel per landmark.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InvalidInputError
from .kernels import KernelSpec, pairwise
from .noise import DeformationNoiseField


@dataclass
class LandmarkState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape:
            raise InvalidInputError(f"q shape {self.q.shape} != p shape {self.p.shape}")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise InvalidInputError("landmark state has non-finite entries")

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def d(self):
        return self.q.shape[1]

    def to_array(self):
        return np.stack([self.q, self.p])

    @classmethod
    def from_array(cls, x):
        return cls(x[0], x[1])


def as_array(state):
    if isinstance(state, LandmarkState):
        return state.to_array()
    x = np.asarray(state, dtype=float)
    if x.ndim < 3 or x.shape[-3] != 2:
        raise InvalidInputError(f"expected phase-space array (..., 2, n, d), got {x.shape}")
    return x


@dataclass
class LandmarkSystem:
    """Drift and noise for ``n`` landmarks; satisfies the integrators' system protocol."""

    kernel: KernelSpec = field(default_factory=KernelSpec)
    lam: float = 0.0
    sigma_u: List[DeformationNoiseField] = field(default_factory=list)
    sigma_nu: Optional[np.ndarray] = None

    state_ndim = 3

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidInputError(f"lambda must be non-negative, got {self.lam}")
        self.sigma_u = list(self.sigma_u)
        if self.sigma_nu is not None:
            self.sigma_nu = np.atleast_2d(np.asarray(self.sigma_nu, dtype=float))
        self._n_nu = 0 if self.sigma_nu is None else self.sigma_nu.shape[0]

    @property
    def n_channels(self):
        return len(self.sigma_u) + self._n_nu

    def without_noise(self):
        return LandmarkSystem(self.kernel, self.lam)

    def check_state(self, state):
        x = as_array(state)
        n, d = x.shape[-2:]
        if self.sigma_nu is not None and self.sigma_nu.shape != (n, d):
            raise InvalidInputError(
                f"sigma_nu has shape {self.sigma_nu.shape}, state needs ({n}, {d})")
        for f in self.sigma_u:
            if f.dim != d:
                raise InvalidInputError(f"noise field dimension {f.dim} != landmark dimension {d}")
        return x

    def is_additive(self, c):
        return c >= len(self.sigma_u) or self.sigma_u[c].is_constant

    # -- tangents ------------------------------------------------------------

    def drift(self, x):
        q, p = x[..., 0, :, :], x[..., 1, :, :]
        diff, K = pairwise(self.kernel, q)
        pp = np.sum(p[..., :, None, :] * p[..., None, :, :], axis=-1)
        dq = np.sum(K[..., None] * p[..., None, :, :], axis=-2) + self.lam ** 2 * p
        # -sum_j (p_i.p_j) grad K(q_i - q_j), with grad K(y) = -y K(y) / r^2
        dp = np.sum((pp * K)[..., None] * diff, axis=-2) / self.kernel.r ** 2
        return np.stack([dq, dp], axis=-3)

    def diffusion(self, x, c):
        nu = len(self.sigma_u)
        if c < 0 or c >= self.n_channels:
            raise InvalidInputError(f"channel {c} out of range [0, {self.n_channels})")
        if c < nu:
            return self._diffusion_u(x, self.sigma_u[c])
        out = np.zeros(np.broadcast_shapes(x.shape))
        out[..., 0, c - nu, :] = self.sigma_nu[c - nu]
        return out

    def _diffusion_u(self, x, f):
        q, p = x[..., 0, :, :], x[..., 1, :, :]
        phi = f.profile(q)
        dq = phi[..., None] * f.amplitude
        if f.is_constant:
            dp = np.zeros_like(p)
        else:
            # -(D sigma)^T p = -(a . p) grad(profile)
            ap = np.sum(p * f.amplitude, axis=-1)
            dp = (ap * phi)[..., None] * (q - f.center) / f.width ** 2
        return np.stack([dq, dp], axis=-3)

    def noise(self, x, dW):
        """``sum_c g_c(x) dW[..., c]``."""
        out = np.zeros(np.broadcast_shapes(x.shape))
        for c, f in enumerate(self.sigma_u):
            out += self._diffusion_u(x, f) * dW[..., c, None, None, None]
        if self._n_nu:
            nu = len(self.sigma_u)
            out[..., 0, :, :] += self.sigma_nu * dW[..., nu:nu + self._n_nu, None]
        return out

    # -- scalar functionals --------------------------------------------------

    def velocity(self, x, points):
        """Deformation velocity ``u(y) = sum_j K(y - q_j) p_j`` at ``points``."""
        q, p = x[..., 0, :, :], x[..., 1, :, :]
        _, K = pairwise(self.kernel, points, q)
        return np.sum(K[..., None] * p[..., None, :, :], axis=-2)


def h_kernel(state, kernel):
    """``0.5 * sum_ij p_i . p_j K(q_i - q_j)``."""
    x = as_array(state)
    q, p = x[..., 0, :, :], x[..., 1, :, :]
    _, K = pairwise(kernel, q)
    pp = np.sum(p[..., :, None, :] * p[..., None, :, :], axis=-1)
    return 0.5 * np.sum(pp * K, axis=(-2, -1))


def template_energy(state, lam):
    p = as_array(state)[..., 1, :, :]
    return 0.5 * lam ** 2 * np.sum(p * p, axis=(-2, -1))


def h_metamorphosis(state, system):
    return h_kernel(state, system.kernel) + template_energy(state, system.lam)


def stochastic_potential_u(state, field_l):
    """``sum_i p_i . sigma_l(q_i)``."""
    x = as_array(state)
    q, p = x[..., 0, :, :], x[..., 1, :, :]
    return np.sum(p * field_l.value(q), axis=(-2, -1))


def stochastic_potential_nu(state, sigma_i, i):
    return np.sum(as_array(state)[..., 1, i, :] * sigma_i, axis=-1)


def drift(state, system):
    return system.drift(system.check_state(state))


def diffusion_u(state, system, channel):
    if not 0 <= channel < len(system.sigma_u):
        raise InvalidInputError(f"deformation channel {channel} out of range")
    return system.diffusion(system.check_state(state), channel)


def diffusion_nu(state, system, i):
    x = system.check_state(state)
    if system.sigma_nu is None or not 0 <= i < system.sigma_nu.shape[0]:
        raise InvalidInputError(f"template channel {i} out of range")
    return system.diffusion(x, len(system.sigma_u) + i)


def total_linear_momentum(state):
    return np.sum(as_array(state)[..., 1, :, :], axis=-2)


@dataclass
class TracerCloud:
    x: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(self.x)):
            raise InvalidInputError("tracer positions must be finite")


def flow_tracers(cloud, system, trajectory, path, method="heun"):
    """Advect passive points along a landmark trajectory.

    Tracers follow ``dx = u_t(x) dt + sum_l sigma_l(x) o dW^l`` where ``u_t`` is
    interpolated from the recorded landmark states, so the stepper sees the
    landmark state at both ends of each step. Returns an ``(M+1, m, d)`` array.
    """
    from .sde import STRATONOVICH_HEUN, check_method

    check_method(method)
    states = np.asarray(trajectory.states)
    times = np.asarray(trajectory.times)
    M = len(times) - 1
    inc = path.increments if hasattr(path, "increments") else np.asarray(path)
    if inc.shape[0] != M:
        raise InvalidInputError(f"Wiener path has {inc.shape[0]} steps, trajectory has {M}")
    if inc.shape[1] != system.n_channels:
        raise InvalidInputError("Wiener path channel count does not match the system")
    if hasattr(path, "dt") and not np.allclose(np.diff(times), path.dt, rtol=1e-9, atol=0):
        raise InvalidInputError("Wiener path and trajectory use different time steps")
    fields = system.sigma_u
    dts = np.diff(times)

    def sig(y, dW):
        out = np.zeros_like(y)
        for l, f in enumerate(fields):
            out += f.value(y) * dW[l]
        return out

    y = cloud.x.copy()
    out = np.empty((M + 1,) + y.shape)
    out[0] = y
    for m in range(M):
        dt, dW = dts[m], inc[m]
        v0 = system.velocity(states[m], y)
        if method == STRATONOVICH_HEUN:
            g0 = sig(y, dW)
            yp = y + v0 * dt + g0
            y = y + 0.5 * (v0 + system.velocity(states[m + 1], yp)) * dt + 0.5 * (g0 + sig(yp, dW))
        else:
            corr = np.zeros_like(y)
            for f in fields:
                # 0.5 * (D sigma) sigma
                corr += 0.5 * np.einsum("...ab,...b->...a", f.jacobian(y), f.value(y))
            y = y + (v0 + corr) * dt + sig(y, dW)
        out[m + 1] = y
    return out
