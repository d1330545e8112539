"""Noise fields, seeded Brownian increments and the Stratonovich-to-Ito drift.

Randomness is counter-based: every (seed, channel) pair owns an independent
Philox stream keyed through ``numpy.random.SeedSequence``, so a path never
depends on how many other paths or channels are generated alongside it.
"""

from dataclasses import dataclass, field
import csv

import numpy as np

from .errors import InvalidInputError

_UINT64 = (1 << 64) - 1


@dataclass(frozen=True)
class DeformationNoiseField:
    """Vector field ``a * exp(-|x - c|^2 / (2 w^2))``, or the constant ``a``."""

    amplitude: np.ndarray
    center: np.ndarray = None
    width: float = 1.0
    is_constant: bool = False

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        object.__setattr__(self, "amplitude", a)
        if self.is_constant:
            c = np.zeros_like(a) if self.center is None else np.asarray(self.center, float)
            object.__setattr__(self, "center", c)
        else:
            if self.center is None:
                raise InvalidInputError("bump noise field needs a center")
            c = np.atleast_1d(np.asarray(self.center, dtype=float))
            if c.shape != a.shape:
                raise InvalidInputError("noise field center and amplitude differ in dimension")
            object.__setattr__(self, "center", c)
            if not (np.isfinite(self.width) and self.width > 0):
                raise InvalidInputError(f"noise field width must be positive, got {self.width}")
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("noise amplitude must be finite")

    @classmethod
    def constant(cls, amplitude):
        return cls(amplitude=amplitude, is_constant=True)

    @property
    def dim(self):
        return self.amplitude.shape[0]

    def profile(self, x):
        """Scalar bump factor at points ``x`` (shape ``(..., d)``)."""
        if self.is_constant:
            return np.ones(x.shape[:-1])
        y = x - self.center
        return np.exp(-np.sum(y * y, axis=-1) / (2.0 * self.width ** 2))

    def value(self, x):
        return self.profile(x)[..., None] * self.amplitude

    def profile_grad(self, x):
        if self.is_constant:
            return np.zeros_like(x)
        return -(x - self.center) / self.width ** 2 * self.profile(x)[..., None]

    def jacobian(self, x):
        """``J[..., a, b] = d sigma_a / d x_b``."""
        return self.amplitude[:, None] * self.profile_grad(x)[..., None, :]

    def to_dict(self):
        if self.is_constant:
            return {"amplitude": self.amplitude.tolist(), "constant": True}
        return {"center": self.center.tolist(), "width": float(self.width),
                "amplitude": self.amplitude.tolist()}

    @classmethod
    def from_dict(cls, d):
        if d.get("constant", False):
            return cls.constant(d["amplitude"])
        return cls(amplitude=d["amplitude"], center=d["center"], width=float(d["width"]))


def _point(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("evaluation point has non-finite components")
    return x


def eval_deformation_noise(field, x):
    return field.value(_point(x))


def eval_deformation_noise_jacobian(field, x):
    return field.jacobian(_point(x))


@dataclass
class TemplateNoise:
    """Template-noise amplitudes.

    ``per_landmark`` is an ``(n, d)`` array (one constant vector per landmark);
    ``grid`` is a ``(K, N)`` array of channel functions sampled on a 1D grid.
    Exactly one of the two is set.
    """

    per_landmark: np.ndarray = None
    grid: np.ndarray = None

    def __post_init__(self):
        if (self.per_landmark is None) == (self.grid is None):
            raise InvalidInputError("template noise needs exactly one of per_landmark / grid")
        if self.per_landmark is not None:
            arr = np.asarray(self.per_landmark, dtype=float)
            if arr.ndim != 2:
                raise InvalidInputError("per_landmark template noise must be an (n, d) array")
            self.per_landmark = arr
        else:
            arr = np.atleast_2d(np.asarray(self.grid, dtype=float))
            self.grid = arr
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("template noise must be finite")

    @property
    def channels(self):
        arr = self.per_landmark if self.per_landmark is not None else self.grid
        return arr.shape[0]


def load_grid_noise(path):
    """Read a CSV with one row per grid node and one column per channel."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    try:
        values = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError:
        # tolerate a header line
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise InvalidInputError(f"{path}: expected a non-empty numeric table")
    return values.T.copy()


# -- seeding ---------------------------------------------------------------

def derive_seed(base_seed, *key):
    """Hash ``(base_seed, *key)`` to a new 64-bit seed."""
    ss = np.random.SeedSequence(int(base_seed) & _UINT64, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def stream(seed, *key):
    """Independent Philox generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & _UINT64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class WienerPath:
    seed: int
    dt: float
    increments: np.ndarray = field(repr=False)

    @property
    def steps(self):
        return self.increments.shape[0]

    @property
    def channels(self):
        return self.increments.shape[1]

    def coarsen(self, factor):
        """Sum blocks of ``factor`` consecutive increments."""
        if self.steps % factor:
            raise InvalidInputError(f"{self.steps} steps not divisible by {factor}")
        inc = self.increments.reshape(self.steps // factor, factor, self.channels).sum(axis=1)
        return WienerPath(self.seed, self.dt * factor, inc)


def sample_wiener_path(seed, dt, steps, channels):
    """Brownian increments ``N(0, dt)``; column ``c`` comes from stream ``(seed, c)``."""
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if int(steps) < 1 or int(steps) != steps:
        raise InvalidInputError(f"steps must be a positive integer, got {steps}")
    if int(channels) < 0:
        raise InvalidInputError(f"channels must be non-negative, got {channels}")
    steps, channels = int(steps), int(channels)
    inc = np.empty((steps, channels))
    sq = np.sqrt(dt)
    for c in range(channels):
        inc[:, c] = stream(seed, c).standard_normal(steps) * sq
    return WienerPath(int(seed) & _UINT64, float(dt), inc)


# -- Ito conversion ----------------------------------------------------------

def ito_drift_correction(system, x, eps=1e-5):
    """``0.5 * sum_c Dg_c(x) g_c(x)`` for a Stratonovich system.

    Uses ``system.ito_correction`` when the system provides one; otherwise the
    directional derivative ``Dg_c . g_c`` is taken by central differences with
    step ``eps`` along ``g_c``. Channels reported additive by
    ``system.is_additive(c)`` are skipped.
    """
    if hasattr(system, "ito_correction"):
        return system.ito_correction(x)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    additive = getattr(system, "is_additive", lambda c: False)
    for c in range(system.n_channels):
        if additive(c):
            continue
        g = system.diffusion(x, c)
        out += (system.diffusion(x + eps * g, c) - system.diffusion(x - eps * g, c)) / (2 * eps)
    return 0.5 * out
