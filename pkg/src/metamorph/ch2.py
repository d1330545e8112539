"""Stochastic two-component Camassa-Holm (CH2) on a periodic interval.

Fourier pseudospectral in space. Nonlinear products use the 2/3 rule: inputs
and outputs of every right-hand side are truncated to ``|k| <= N/3``, which
makes the semi-discrete system a Galerkin truncation and keeps ``int m``,
``int rho`` and ``h`` conserved up to time-stepping error.

States are stored as arrays of shape ``(..., 2, N)`` holding ``(m, rho)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Grid1D:
    L: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise InvalidInputError(f"grid length must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise InvalidInputError(f"grid size must be a positive even integer, got {self.N}")

    @property
    def dx(self):
        return self.L / self.N

    @property
    def x(self):
        return np.arange(self.N) * self.dx

    @property
    def k(self):
        """Angular wavenumbers for ``rfft`` output."""
        return 2 * np.pi / self.L * np.arange(self.N // 2 + 1)

    @property
    def ik(self):
        ik = 1j * self.k
        ik[-1] = 0.0  # Nyquist mode has no odd derivative
        return ik

    @property
    def dealias_mask(self):
        return np.arange(self.N // 2 + 1) <= self.N // 3

    def periodic_distance(self, a, b):
        d = np.abs(np.asarray(a) - b) % self.L
        return np.minimum(d, self.L - d)


@dataclass
class Ch2State:
    m: np.ndarray
    rho: np.ndarray
    alpha: float

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.m.shape != self.rho.shape or self.m.ndim != 1:
            raise InvalidInputError("m and rho must be 1D arrays of equal length")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.rho))):
            raise InvalidInputError("CH2 state has non-finite entries")
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")

    def to_array(self):
        return np.stack([self.m, self.rho])

    @classmethod
    def from_array(cls, x, alpha):
        return cls(x[0], x[1], alpha)


def _check_len(f, grid):
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.N:
        raise InvalidInputError(f"array length {f.shape[-1]} does not match grid size {grid.N}")
    return f


def _symbol(alpha, grid):
    return 1.0 + alpha ** 2 * grid.k ** 2


def helmholtz_apply(u, alpha, grid):
    """``m = u - alpha^2 u_xx``, applied in Fourier space."""
    u = _check_len(u, grid)
    return np.fft.irfft(_symbol(alpha, grid) * np.fft.rfft(u), n=grid.N)


def helmholtz_invert(m, alpha, grid):
    m = _check_len(m, grid)
    return np.fft.irfft(np.fft.rfft(m) / _symbol(alpha, grid), n=grid.N)


def ddx(f, grid):
    f = _check_len(f, grid)
    return np.fft.irfft(grid.ik * np.fft.rfft(f), n=grid.N)


def periodic_bump(grid, center, width, amplitude=1.0):
    d = grid.periodic_distance(grid.x, center)
    return amplitude * np.exp(-d ** 2 / (2 * width ** 2))


class Ch2System:
    """CH2 right-hand sides in the integrators' system protocol.

    Channels ``0..K^u-1`` are the deformation fields ``sigma_u``; the template
    fields ``sigma_nu`` follow.
    """

    state_ndim = 2

    def __init__(self, grid, alpha, sigma_u=None, sigma_nu=None, dealias=True):
        if not alpha > 0:
            raise InvalidInputError(f"alpha must be positive, got {alpha}")
        self.grid = grid
        self.alpha = float(alpha)
        self.dealias = dealias
        self._mask = grid.dealias_mask if dealias else np.ones(grid.N // 2 + 1, bool)
        self._ik = grid.ik * self._mask
        self._inv = self._mask / _symbol(self.alpha, grid)
        self.sigma_u = self._fields(sigma_u)
        self.sigma_nu = self._fields(sigma_nu)
        # spectral data of the fixed fields
        self._su_hat = np.fft.rfft(self.sigma_u) * self._mask
        self._su = np.fft.irfft(self._su_hat, n=grid.N)
        self._su_x = np.fft.irfft(self._ik * self._su_hat, n=grid.N)
        self._snu_x = np.fft.irfft(self._ik * np.fft.rfft(self.sigma_nu), n=grid.N)

    def _fields(self, fields):
        if fields is None:
            return np.zeros((0, self.grid.N))
        arr = np.atleast_2d(np.asarray(fields, dtype=float))
        if arr.size == 0:
            return np.zeros((0, self.grid.N))
        if arr.shape[-1] != self.grid.N:
            raise InvalidInputError(
                f"noise field length {arr.shape[-1]} does not match grid size {self.grid.N}")
        return arr

    @property
    def n_channels(self):
        return self.sigma_u.shape[0] + self.sigma_nu.shape[0]

    def without_noise(self):
        return Ch2System(self.grid, self.alpha, dealias=self.dealias)

    def is_additive(self, c):
        # nu-noise tangent -rho * sigma_x is linear in the state, never constant
        return False

    # spectral helpers on the last axis
    def _hat(self, f):
        return np.fft.rfft(f) * self._mask

    def _real(self, fh):
        return np.fft.irfft(fh, n=self.grid.N)

    def _fields_of(self, x):
        m_hat = self._hat(x[..., 0, :])
        r_hat = self._hat(x[..., 1, :])
        u_hat = m_hat * self._inv
        return m_hat, r_hat, u_hat

    def velocity(self, x):
        return self._real(self._fields_of(x)[2])

    def drift(self, x):
        m_hat, r_hat, u_hat = self._fields_of(x)
        m, m_x = self._real(m_hat), self._real(self._ik * m_hat)
        u, u_x = self._real(u_hat), self._real(self._ik * u_hat)
        rho, rho_x = self._real(r_hat), self._real(self._ik * r_hat)
        dm = self._real(self._hat(-(u * m_x + 2 * m * u_x) - rho * rho_x))
        drho = self._real(-self._ik * np.fft.rfft(rho * u))
        return np.stack([dm, drho], axis=-2)

    def _u_tangent(self, m, m_x, rho, l):
        s, s_x = self._su[l], self._su_x[l]
        dm = self._real(self._hat(-(s * m_x + 2 * m * s_x)))
        drho = self._real(-self._ik * np.fft.rfft(rho * s))
        return dm, drho

    def diffusion(self, x, c):
        if not 0 <= c < self.n_channels:
            raise InvalidInputError(f"channel {c} out of range [0, {self.n_channels})")
        m_hat, r_hat, _ = self._fields_of(x)
        rho = self._real(r_hat)
        Ku = self.sigma_u.shape[0]
        if c < Ku:
            dm, drho = self._u_tangent(self._real(m_hat), self._real(self._ik * m_hat), rho, c)
        else:
            dm = self._real(self._hat(-rho * self._snu_x[c - Ku]))
            drho = np.zeros_like(dm)
        return np.stack([dm, drho], axis=-2)

    def noise(self, x, dW):
        m_hat, r_hat, _ = self._fields_of(x)
        m, m_x, rho = self._real(m_hat), self._real(self._ik * m_hat), self._real(r_hat)
        Ku = self.sigma_u.shape[0]
        w = dW[..., :, None]
        # sum the fields first: the tangents are linear in sigma
        s = np.sum(self._su * w[..., :Ku, :], axis=-2)
        s_x = np.sum(self._su_x * w[..., :Ku, :], axis=-2)
        snu_x = np.sum(self._snu_x * w[..., Ku:, :], axis=-2)
        dm = self._real(self._hat(-(s * m_x + 2 * m * s_x) - rho * snu_x))
        drho = self._real(-self._ik * np.fft.rfft(rho * s))
        return np.stack([dm, drho], axis=-2)

    def invariants(self, x):
        """``(int m, int rho, h)`` along the last axes of ``x``."""
        m, rho = x[..., 0, :], x[..., 1, :]
        u = np.fft.irfft(np.fft.rfft(m) / _symbol(self.alpha, self.grid), n=self.grid.N)
        dx = self.grid.dx
        return (np.sum(m, axis=-1) * dx, np.sum(rho, axis=-1) * dx,
                0.5 * np.sum(u * m + rho * rho, axis=-1) * dx)


def _state_array(state, grid):
    x = state.to_array() if isinstance(state, Ch2State) else np.asarray(state, float)
    return _check_len(x, grid)


def ch2_drift(state, grid, dealias=True):
    """Deterministic tangents ``(dm/dt, drho/dt)`` for a ``Ch2State``."""
    sys_ = Ch2System(grid, state.alpha, dealias=dealias)
    out = sys_.drift(_state_array(state, grid))
    return out[0], out[1]


def ch2_diffusion_u(state, grid, sigma_l, dealias=True):
    """Tangent multiplying ``o dW^l`` for one deformation field."""
    sys_ = Ch2System(grid, state.alpha, sigma_u=[_check_len(sigma_l, grid)], dealias=dealias)
    out = sys_.diffusion(_state_array(state, grid), 0)
    return out[0], out[1]


def ch2_diffusion_nu(state, grid, sigma_k, dealias=True):
    """Tangent multiplying ``o dW^k`` for one template field."""
    sys_ = Ch2System(grid, state.alpha, sigma_nu=[_check_len(sigma_k, grid)], dealias=dealias)
    out = sys_.diffusion(_state_array(state, grid), 0)
    return out[0], out[1]


def peakon_profile(c, x0, alpha, grid):
    """Periodic peakon ``c cosh((d - L/2)/alpha) / cosh(L/(2 alpha))``."""
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive, got {alpha}")
    a = grid.periodic_distance(grid.x, x0) / alpha
    b = grid.L / (2 * alpha)
    # overflow-safe rewrite of the cosh ratio
    return c * (np.exp(-a) + np.exp(a - 2 * b)) / (1 + np.exp(-2 * b))


def peakon_init(c, x0, alpha, grid, rho=None):
    u = peakon_profile(c, x0, alpha, grid)
    rho = np.zeros(grid.N) if rho is None else _check_len(rho, grid)
    return Ch2State(helmholtz_apply(u, alpha, grid), rho, alpha)


def ch2_invariants(state, grid):
    x = _state_array(state, grid)
    return tuple(float(v) for v in Ch2System(grid, state.alpha).invariants(x))


def dealias(state, grid):
    """Project a state onto the retained modes ``|k| <= N/3``."""
    x = _state_array(state, grid)
    y = np.fft.irfft(np.fft.rfft(x) * grid.dealias_mask, n=grid.N)
    return Ch2State(y[0], y[1], state.alpha) if isinstance(state, Ch2State) else y


def peak_location(u, grid):
    """Location of ``max u`` refined by a periodic parabola through three nodes."""
    u = _check_len(u, grid)
    i = int(np.argmax(u))
    a, b, c = u[i - 1], u[i], u[(i + 1) % grid.N]
    denom = a - 2 * b + c
    off = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return ((i + off) * grid.dx) % grid.L
