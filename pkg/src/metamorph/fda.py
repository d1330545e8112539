"""Phase-amplitude signal generator: ``f(s) = eta(phi^-1(s)) + nu(s) + eps``.

The warp ``phi`` is the stochastic flow of the interval driven only by the
deformation noise channels (zero initial momenta), and ``nu`` accumulates
the template-noise channels. Warp fields carry the mask ``4 s (1 - s)`` so
both endpoints stay fixed.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidInputError, MetamorphError
from .noise import derive_seed, sample_wiener_path, stream
from .sde import integrate_batch


class WarpInvariantError(MetamorphError):
    """A generated warp left the interval or lost monotonicity."""


@dataclass
class Bump:
    center: float
    width: float
    height: float

    def __call__(self, s):
        return self.height * np.exp(-(s - self.center) ** 2 / (2 * self.width ** 2))

    def derivative(self, s):
        return -(s - self.center) / self.width ** 2 * self(s)


@dataclass
class Template:
    """Sum of Gaussian bumps plus an offset, or a cubic spline through samples on [0, 1]."""

    bumps: List[Bump] = field(default_factory=list)
    offset: float = 0.0
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        self.bumps = [b if isinstance(b, Bump) else Bump(**b) for b in self.bumps]
        self._spline = None
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.ndim != 1 or len(v) < 4:
                raise InvalidInputError("template values need at least four samples")
            self._spline = CubicSpline(np.linspace(0, 1, len(v)), v)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self._spline is not None:
            return self._spline(s)
        out = np.full(s.shape, float(self.offset))
        for b in self.bumps:
            out = out + b(s)
        return out


@dataclass
class AmplitudeField:
    """Template-noise channel on the interval: a constant or a Gaussian bump."""

    amplitude: float
    center: Optional[float] = None
    width: Optional[float] = None

    @property
    def is_constant(self):
        return self.center is None

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.is_constant:
            return np.full(s.shape, float(self.amplitude))
        return self.amplitude * np.exp(-(s - self.center) ** 2 / (2 * self.width ** 2))


class WarpSystem:
    """Zero-drift flow of points on [0, 1] under masked bump fields."""

    state_ndim = 1

    def __init__(self, fields):
        self.fields = [f if isinstance(f, Bump) else Bump(**f) for f in fields]

    @property
    def n_channels(self):
        return len(self.fields)

    def drift(self, x):
        return np.zeros_like(x)

    def diffusion(self, x, c):
        return 4 * x * (1 - x) * self.fields[c](x)

    def noise(self, x, dW):
        out = np.zeros_like(x)
        mask = 4 * x * (1 - x)
        for c, f in enumerate(self.fields):
            out += f(x) * dW[..., c, None]
        return mask * out


@dataclass
class FdaSpec:
    template: Template
    warp_fields: List[Bump] = field(default_factory=list)
    amplitude_fields: List[AmplitudeField] = field(default_factory=list)
    obs_noise: float = 0.0
    n_samples: int = 101
    n_signals: int = 10
    T: float = 1.0
    steps: int = 50
    u0: float = 0.0
    nu0: float = 0.0
    block_size: int = 256

    def __post_init__(self):
        if not self.obs_noise >= 0:
            raise InvalidInputError("observation noise must be non-negative")
        if self.n_samples < 2 or self.n_signals < 1 or self.steps < 1 or not self.T > 0:
            raise InvalidInputError("need n_samples >= 2, n_signals >= 1, steps >= 1, T > 0")
        if self.u0 != 0 or self.nu0 != 0:
            raise InvalidInputError("only zero initial momenta (u0 = nu0 = 0) are supported")
        self.warp_fields = [f if isinstance(f, Bump) else Bump(**f) for f in self.warp_fields]
        self.amplitude_fields = [f if isinstance(f, AmplitudeField) else AmplitudeField(**f)
                                 for f in self.amplitude_fields]

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.n_samples)


@dataclass
class FdaSignals:
    s: np.ndarray
    signals: np.ndarray
    warps: np.ndarray
    inverse_warps: np.ndarray
    amplitude: np.ndarray
    seeds: list


def generate_fda_signals(spec, base_seed):
    """Sample ``spec.n_signals`` noisy, warped, amplitude-shifted copies of the template."""
    s = spec.grid
    Kw, Ka = len(spec.warp_fields), len(spec.amplitude_fields)
    dt = spec.T / spec.steps
    warp = WarpSystem(spec.warp_fields)
    amp = np.array([f(s) for f in spec.amplitude_fields]).reshape(Ka, len(s))
    seeds = [derive_seed(base_seed, i) for i in range(spec.n_signals)]
    out = {k: [] for k in ("signals", "warps", "inverse_warps", "amplitude")}
    for b0 in range(0, spec.n_signals, spec.block_size):
        block = seeds[b0:b0 + spec.block_size]
        B = len(block)
        inc = np.stack([sample_wiener_path(sd, dt, spec.steps, Kw + Ka).increments
                        for sd in block])
        winc, ainc = inc[..., :Kw], inc[..., Kw:]
        phi, fa = integrate_batch(warp, s, spec.T, winc, record=[spec.steps])
        # inverse flow: same path run backwards
        phi_inv, fb = integrate_batch(warp, s, spec.T, -winc[:, ::-1, :], record=[spec.steps])
        phi, phi_inv = phi[0], phi_inv[0]
        for w in (phi, phi_inv):
            if (np.any(fa >= 0) or np.any(fb >= 0) or np.any(w < 0) or np.any(w > 1)):
                raise WarpInvariantError("warp left the unit interval")
            if np.any(np.diff(w, axis=-1) <= 0):
                raise WarpInvariantError(
                    "warp is not strictly increasing; reduce the step size or field amplitudes")
        W_T = ainc.sum(axis=1)  # (B, Ka)
        nu = np.sum(W_T[:, :, None] * amp[None], axis=1)
        eps = np.zeros((B, len(s)))
        if spec.obs_noise > 0:
            eps = np.stack([stream(sd, 0, 1).standard_normal(len(s)) for sd in block]) * spec.obs_noise
        f = spec.template(phi_inv) + nu + eps
        out["signals"].append(f)
        out["warps"].append(phi)
        out["inverse_warps"].append(phi_inv)
        out["amplitude"].append(nu)
    cat = {k: np.concatenate(v) for k, v in out.items()}
    return FdaSignals(s, cat["signals"], cat["warps"], cat["inverse_warps"], cat["amplitude"], seeds)
