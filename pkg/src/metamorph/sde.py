"""Time stepping for Stratonovich systems and strong-order estimation.

A *system* is any object with

* ``n_channels`` -- number of scalar Brownian drivers,
* ``drift(x)`` -- the dt-tangent at state array ``x``,
* ``diffusion(x, c)`` -- the tangent multiplying ``o dW^c``,

and optionally ``noise(x, dW)`` returning ``sum_c diffusion(x, c) * dW[..., c]``
in one call. States are numpy arrays; any leading axes beyond the system's
own state shape are treated as independent realizations.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, InvalidInputError
from .noise import derive_seed, ito_drift_correction, sample_wiener_path

STRATONOVICH_HEUN = "heun"
ITO_EULER_MARUYAMA = "euler_maruyama_ito"
METHODS = (STRATONOVICH_HEUN, ITO_EULER_MARUYAMA)


def check_method(method):
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")


def _noise(system, x, dW):
    if hasattr(system, "noise"):
        return system.noise(x, dW)
    out = np.zeros(np.shape(x))
    pad = (1,) * (x.ndim - dW.ndim + 1)
    for c in range(system.n_channels):
        out = out + system.diffusion(x, c) * dW[..., c].reshape(dW.shape[:-1] + pad)
    return out


def _heun(system, x, dt, dW):
    f0 = system.drift(x)
    g0 = _noise(system, x, dW) if system.n_channels else 0.0
    xp = x + f0 * dt + g0
    f1 = system.drift(xp)
    if not system.n_channels:
        return x + 0.5 * (f0 + f1) * dt
    return x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + _noise(system, xp, dW))


def _euler_maruyama(system, x, dt, dW, use_ito_correction=True):
    f = system.drift(x)
    if use_ito_correction and system.n_channels:
        f = f + ito_drift_correction(system, x)
    if not system.n_channels:
        return x + f * dt
    return x + f * dt + _noise(system, x, dW)


def _as_increments(dW, channels):
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-1:] != (channels,):
        raise InvalidInputError(f"increment vector needs {channels} channels, got shape {dW.shape}")
    return dW


def euler_heun_step(system, x, dt, dW, step_index=0):
    """Stratonovich predictor-corrector step (Heun).

    Drift and diffusion are both averaged over the start point and the
    Euler predictor, which makes the scheme second order when noise is off.
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _heun(system, x, dt, _as_increments(dW, system.n_channels))
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step_index)
    return out


def euler_maruyama_step(system, x, dt, dW, use_ito_correction=True, step_index=0):
    """Explicit Ito step; with the correction it targets the Stratonovich law."""
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _euler_maruyama(system, x, dt, _as_increments(dW, system.n_channels),
                              use_ito_correction)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step_index)
    return out


_STEPPERS = {STRATONOVICH_HEUN: _heun, ITO_EULER_MARUYAMA: _euler_maruyama}


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    seed: int = None
    method: str = STRATONOVICH_HEUN

    def __len__(self):
        return len(self.times)


def integrate_path(system, x0, T, M, path=None, method=STRATONOVICH_HEUN):
    """Integrate one realization over ``M`` steps of ``T / M``.

    ``path`` is a ``WienerPath`` or an ``(M, C)`` increment array; it may be
    omitted when the system has no noise channels.
    """
    check_method(method)
    if not T > 0:
        raise InvalidInputError(f"horizon must be positive, got {T}")
    if int(M) != M or M < 1:
        raise InvalidInputError(f"step count must be a positive integer, got {M}")
    M = int(M)
    C = system.n_channels
    inc, seed = _increments_from(path, M, C)
    dt = T / M
    step = _STEPPERS[method]
    x = np.array(x0, dtype=float)
    states = np.empty((M + 1,) + x.shape)
    states[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(M):
            x = step(system, x, dt, inc[m])
            if not np.all(np.isfinite(x)):
                raise BlowUpError(m)
            states[m + 1] = x
    return Trajectory(np.arange(M + 1) * dt, states, seed, method)


def _increments_from(path, M, C):
    if path is None:
        if C:
            raise InvalidInputError("a Wiener path is required for a system with noise channels")
        return np.zeros((M, 0)), None
    inc = np.asarray(getattr(path, "increments", path), dtype=float)
    if inc.shape != (M, C):
        raise InvalidInputError(f"Wiener increments have shape {inc.shape}, expected ({M}, {C})")
    return inc, getattr(path, "seed", None)


def integrate_batch(system, x0, T, increments, method=STRATONOVICH_HEUN, record=None):
    """Integrate ``B`` realizations at once.

    ``increments`` has shape ``(B, M, C)``; ``x0`` is either one state or a
    ``(B, ...)`` stack. Returns ``(recorded, failed_at)`` where ``recorded``
    has shape ``(len(record), B, ...)`` for the step indices in ``record``
    (default: every step) and ``failed_at[b]`` is the first step at which
    realization ``b`` went non-finite, or -1. Failed rows keep their NaNs and
    never touch other rows.
    """
    check_method(method)
    inc = np.asarray(increments, dtype=float)
    B, M, C = inc.shape
    if C != system.n_channels:
        raise InvalidInputError(f"increments carry {C} channels, system has {system.n_channels}")
    dt = T / M
    step = _STEPPERS[method]
    x = np.array(x0, dtype=float)
    nd = getattr(system, "state_ndim", None)
    single = x.ndim == nd if nd is not None else (x.ndim == 0 or x.shape[0] != B)
    if single:
        x = np.broadcast_to(x, (B,) + x.shape).copy()
    record = list(range(M + 1)) if record is None else [int(r) for r in record]
    slot = {r: k for k, r in enumerate(record)}
    out = np.empty((len(record),) + x.shape)
    if 0 in slot:
        out[slot[0]] = x
    failed = np.full(B, -1)
    axes = tuple(range(1, x.ndim))
    with np.errstate(all="ignore"):
        for m in range(M):
            x = step(system, x, dt, inc[:, m, :])
            bad = ~np.all(np.isfinite(x), axis=axes)
            new = bad & (failed < 0)
            if new.any():
                failed[new] = m
            if m + 1 in slot:
                out[slot[m + 1]] = x
    return out, failed


@dataclass
class ConvergenceResult:
    slope: float
    dts: np.ndarray
    errors: np.ndarray
    excluded: int
    paths: int


def strong_convergence_order(system, x0, T, dts, R, method=STRATONOVICH_HEUN, base_seed=0,
                             max_failure_fraction=0.01):
    """Least-squares slope of ``log E|X_T^dt - X_T^ref|`` against ``log dt``.

    The reference uses a quarter of the smallest step; coarse increments are
    block sums of the reference increments so every level sees the same
    Brownian path.
    """
    dts = np.sort(np.asarray(dts, dtype=float))[::-1]
    if len(dts) < 4:
        raise InvalidInputError("need at least four step sizes")
    dt_ref = dts[-1] / 4
    M_ref = int(round(T / dt_ref))
    factors = []
    for dt in dts:
        f = dt / dt_ref
        if abs(f - round(f)) > 1e-9 or M_ref % int(round(f)):
            raise InvalidInputError("step sizes must form a dyadic ladder dividing T")
        factors.append(int(round(f)))
    if abs(M_ref * dt_ref - T) > 1e-9 * T:
        raise InvalidInputError("smallest step does not divide the horizon")
    C = system.n_channels
    fine = np.stack([sample_wiener_path(derive_seed(base_seed, r), dt_ref, M_ref, C).increments
                     for r in range(R)])
    ref, bad = integrate_batch(system, x0, T, fine, method, record=[M_ref])
    ref = ref[0]
    failed = bad >= 0
    ends = []
    for f in factors:
        coarse = fine.reshape(R, M_ref // f, f, C).sum(axis=2)
        end, b = integrate_batch(system, x0, T, coarse, method, record=[M_ref // f])
        failed |= b >= 0
        ends.append(end[0])
    excluded = int(failed.sum())
    if excluded > max_failure_fraction * R:
        raise BlowUpError(-1, f"{excluded} of {R} paths blew up")
    keep = ~failed
    axes = tuple(range(1, ref.ndim))
    errors = np.array([np.mean(np.sqrt(np.sum((e[keep] - ref[keep]) ** 2, axis=axes)))
                       for e in ends])
    slope = np.polyfit(np.log(dts), np.log(errors), 1)[0]
    return ConvergenceResult(float(slope), dts, errors, excluded, R)
