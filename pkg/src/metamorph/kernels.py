"""Scalar Gaussian reproducing kernel acting diagonally on vector components."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``K(x) = g * exp(-|x|^2 / (2 r^2))``."""

    r: float = 1.0
    g: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise InvalidInputError(f"unsupported kernel family {self.family!r}")
        if not (np.isfinite(self.r) and self.r > 0):
            raise InvalidInputError(f"kernel length scale must be positive, got {self.r}")
        if not (np.isfinite(self.g) and self.g > 0):
            raise InvalidInputError(f"kernel amplitude must be positive, got {self.g}")

    def to_dict(self):
        return {"family": self.family, "r": float(self.r), "g": float(self.g)}

    @classmethod
    def from_dict(cls, d):
        return cls(r=float(d.get("r", 1.0)), g=float(d.get("g", 1.0)),
                   family=d.get("family", "gaussian"))


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("kernel argument has non-finite components")
    return x


def kernel_eval(spec, x):
    """Evaluate K at displacement(s) ``x``; the last axis is the spatial one."""
    x = _check_finite(x)
    return spec.g * np.exp(-np.sum(x * x, axis=-1) / (2.0 * spec.r ** 2))


def kernel_grad(spec, x):
    """Gradient ``-(x / r^2) K(x)``, same shape as ``x``."""
    x = _check_finite(x)
    return -(x / spec.r ** 2) * kernel_eval(spec, x)[..., None]


def pairwise(spec, q, y=None):
    """Displacements and kernel values between point sets.

    Returns ``(diff, K)`` with ``diff[..., i, j, :] = q_i - y_j`` and
    ``K[..., i, j] = K(q_i - y_j)``. Works on leading batch axes and skips
    the finiteness check (hot path for the integrators).
    """
    y = q if y is None else y
    diff = q[..., :, None, :] - y[..., None, :, :]
    K = spec.g * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * spec.r ** 2))
    return diff, K


def gram(spec, q):
    """Gram matrix ``[K(q_i - q_j)]``."""
    return pairwise(spec, _check_finite(q))[1]
