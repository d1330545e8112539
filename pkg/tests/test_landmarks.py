import numpy as np
import pytest
from hypothesis import given, strategies as st

from metamorph.errors import InvalidInputError
from metamorph.kernels import KernelSpec, kernel_eval, kernel_grad
from metamorph.landmarks import (LandmarkState, LandmarkSystem, TracerCloud, diffusion_nu,
                                 diffusion_u, drift, flow_tracers, h_kernel, h_metamorphosis,
                                 stochastic_potential_u, total_linear_momentum)
from metamorph.noise import DeformationNoiseField, WienerPath, sample_wiener_path
from metamorph.sde import integrate_path

K11 = KernelSpec(1.0, 1.0)
X0 = np.array([[[-0.5, 0.0], [0.5, 0.2]], [[1.0, 0.3], [-0.5, 0.8]]])


def state(q, p):
    return LandmarkState(np.array(q, float), np.array(p, float))


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# -- Hamiltonians and potentials ----------------------------------------------

def test_h_kernel_examples():
    assert h_kernel(state([[0, 0]], [[1, 0]]), K11) == pytest.approx(0.5)
    assert h_kernel(state([[0, 0], [3, 1]], [[0, 0], [0, 0]]), K11) == 0.0
    two = state([[0, 0], [1, 0]], [[1, 0], [1, 0]])
    assert h_kernel(two, K11) == pytest.approx(1 + np.exp(-0.5), rel=1e-15)


def test_h_metamorphosis_examples():
    s = state([[0.2, 0.1], [1.0, -0.3]], [[0.4, 1.0], [-0.2, 0.5]])
    assert h_metamorphosis(s, LandmarkSystem(K11, 0.0)) == h_kernel(s, K11)
    assert h_metamorphosis(state([[0, 0]], [[1, 0]]), LandmarkSystem(K11, 1.0)) == pytest.approx(1.0)
    assert h_metamorphosis(state([[0, 0]], [[0, 0]]), LandmarkSystem(K11, 2.0)) == 0.0


def test_stochastic_potential_examples():
    bump = DeformationNoiseField([0.7, 0.2], [0.3, 0.3], 0.5)
    assert stochastic_potential_u(state([[1, 2]], [[0, 0]]), bump) == 0.0
    assert stochastic_potential_u(state([[5, 5]], [[2, 0]]),
                                  DeformationNoiseField.constant([1.0, 0.0])) == 2.0
    s = state([[0.3, 0.3], [40.0, 0.0]], [[1, 0], [1, 0]])
    assert stochastic_potential_u(s, bump) == pytest.approx(0.7, abs=1e-15)


@given(st.integers(0, 10 ** 6))
def test_h_kernel_relabeling_symmetric_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    q, p = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    perm = rng.permutation(5)
    h = h_kernel(state(q, p), K11)
    assert h >= 0
    assert h_kernel(state(q[perm], p[perm]), K11) == pytest.approx(h, rel=1e-13)


# -- drift --------------------------------------------------------------------

def loop_drift(q, p, kernel, lam):
    """Independent double-loop evaluation of the landmark vector field."""
    n = len(q)
    dq, dp = np.zeros_like(q), np.zeros_like(p)
    for i in range(n):
        for j in range(n):
            dq[i] += kernel_eval(kernel, q[i] - q[j]) * p[j]
            dp[i] -= (p[i] @ p[j]) * kernel_grad(kernel, q[i] - q[j])
        dq[i] += lam ** 2 * p[i]
    return dq, dp


def test_drift_examples():
    s = state([[0, 0]], [[1, 0]])
    t = drift(s, LandmarkSystem(K11, 0.0))
    np.testing.assert_array_equal(t[0], [[1, 0]])
    np.testing.assert_array_equal(t[1], [[0, 0]])
    np.testing.assert_allclose(drift(s, LandmarkSystem(K11, 0.5))[0], [[1.25, 0]])


def test_drift_preserves_mirror_symmetry():
    q1, p1 = np.array([0.4, -0.3]), np.array([0.9, 0.2])
    t = drift(state([q1, -q1], [p1, -p1]), LandmarkSystem(KernelSpec(0.8, 1.2), 0.7))
    np.testing.assert_allclose(t[:, 1], -t[:, 0], atol=1e-15)


@given(st.integers(0, 10 ** 6), st.floats(0.0, 2.0))
def test_drift_matches_loop_oracle(seed, lam):
    rng = np.random.default_rng(seed)
    q, p = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    kernel = KernelSpec(0.9, 1.4)
    dq, dp = loop_drift(q, p, kernel, lam)
    t = drift(state(q, p), LandmarkSystem(kernel, lam))
    np.testing.assert_allclose(t[0], dq, atol=1e-13)
    np.testing.assert_allclose(t[1], dp, atol=1e-13)


def test_drift_is_canonical(rng):
    sys_ = LandmarkSystem(KernelSpec(0.8, 1.1), 0.6)
    q, p = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    t = drift(state(q, p), sys_)
    dh_dp = fd_grad(lambda pp: h_metamorphosis(state(q, pp), sys_), p)
    dh_dq = fd_grad(lambda qq: h_metamorphosis(state(qq, p), sys_), q)
    np.testing.assert_allclose(t[0], dh_dp, atol=1e-8)
    np.testing.assert_allclose(t[1], -dh_dq, atol=1e-8)


def test_shape_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        LandmarkState(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(InvalidInputError):
        drift(np.zeros((3, 2, 2)), LandmarkSystem(K11, 0.0))
    with pytest.raises(InvalidInputError):
        LandmarkSystem(K11, -1.0)


# -- diffusion ----------------------------------------------------------------

FIELDS = [DeformationNoiseField([0.8, 0.3], [0.2, 0.0], 0.8),
          DeformationNoiseField([-0.2, 0.6], [-0.5, 0.4], 0.6)]


def test_diffusion_u_examples():
    sys_ = LandmarkSystem(K11, 0.0, [DeformationNoiseField.constant([0.3, -0.1])])
    t = diffusion_u(state([[0, 0], [2, 1]], [[1, 2], [3, 4]]), sys_, 0)
    np.testing.assert_array_equal(t[0], [[0.3, -0.1], [0.3, -0.1]])
    np.testing.assert_array_equal(t[1], 0.0)
    sys_ = LandmarkSystem(K11, 0.0, FIELDS)
    t = diffusion_u(state([[0.2, 0.0]], [[1.0, -2.0]]), sys_, 0)
    np.testing.assert_array_equal(t[1], 0.0)
    with pytest.raises(InvalidInputError):
        diffusion_u(state([[0, 0]], [[1, 0]]), sys_, 2)


@given(st.integers(0, 10 ** 6), st.integers(0, 1))
def test_diffusion_u_is_canonical(seed, l):
    rng = np.random.default_rng(seed)
    sys_ = LandmarkSystem(K11, 0.5, FIELDS)
    q, p = rng.normal(scale=0.8, size=(3, 2)), rng.normal(size=(3, 2))
    t = diffusion_u(state(q, p), sys_, l)
    phi = lambda qq, pp: stochastic_potential_u(state(qq, pp), FIELDS[l])
    np.testing.assert_allclose(t[0], fd_grad(lambda pp: phi(q, pp), p), atol=1e-6)
    np.testing.assert_allclose(t[1], -fd_grad(lambda qq: phi(qq, p), q), atol=1e-6)


def test_diffusion_nu_examples():
    s = state([[0.1, 0.2], [3.0, 1.0]], [[1.0, 0.0], [0.5, 0.5]])
    zero = LandmarkSystem(K11, 0.0, sigma_nu=np.zeros((2, 2)))
    np.testing.assert_array_equal(diffusion_nu(s, zero, 0), 0.0)
    sys_ = LandmarkSystem(K11, 0.0, sigma_nu=[[0.0, 1.0], [0.0, 0.0]])
    t = diffusion_nu(s, sys_, 0)
    np.testing.assert_array_equal(t[0], [[0, 1], [0, 0]])
    np.testing.assert_array_equal(t[1], 0.0)
    other = state([[9.0, -2.0], [0.0, 0.0]], [[3.0, 3.0], [1.0, -1.0]])
    np.testing.assert_array_equal(diffusion_nu(other, sys_, 0), t)
    with pytest.raises(InvalidInputError):
        diffusion_nu(s, sys_, 2)
    with pytest.raises(InvalidInputError):
        diffusion_nu(state([[0, 0]], [[0, 0]]), sys_, 0)


def test_channel_order_deformation_then_template():
    sys_ = LandmarkSystem(K11, 0.0, FIELDS, sigma_nu=[[0.1, 0.2], [0.3, 0.4]])
    assert sys_.n_channels == 4
    x = X0
    np.testing.assert_array_equal(sys_.diffusion(x, 1), diffusion_u(x, sys_, 1))
    np.testing.assert_array_equal(sys_.diffusion(x, 3), diffusion_nu(x, sys_, 1))
    dW = np.array([0.1, -0.2, 0.3, 0.05])
    expect = sum(sys_.diffusion(x, c) * dW[c] for c in range(4))
    np.testing.assert_allclose(sys_.noise(x, dW), expect, atol=1e-15)


def test_total_linear_momentum_examples():
    np.testing.assert_array_equal(total_linear_momentum(state([[0, 0]], [[0, 0]])), [0, 0])
    np.testing.assert_array_equal(total_linear_momentum(state([[0, 0], [1, 1]], [[1, 0], [-1, 0]])), [0, 0])


# -- flows --------------------------------------------------------------------

def test_deterministic_invariants():
    sys_ = LandmarkSystem(K11, 0.5)
    traj = integrate_path(sys_, X0, 1.0, 1000)
    h = h_metamorphosis(traj.states, sys_)
    assert np.max(np.abs(h - h[0])) / h[0] < 1e-6
    P = total_linear_momentum(traj.states)
    assert np.max(np.abs(P - P[0])) < 1e-8


@pytest.mark.parametrize("lam", [0.0, 0.7])
def test_template_noise_alone_is_brownian(lam):
    """One landmark: q is Brownian motion with constant drift, p never moves."""
    sigma = np.array([[0.3, -0.2]])
    sys_ = LandmarkSystem(K11, lam, sigma_nu=sigma)
    x0 = np.array([[[0.1, 0.2]], [[0.5, -0.4]]])
    path = sample_wiener_path(11, 0.01, 100, 1)
    traj = integrate_path(sys_, x0, 1.0, 100, path)
    W = np.concatenate([[0.0], np.cumsum(path.increments[:, 0])])
    expect = x0[0, 0] + (1 + lam ** 2) * x0[1, 0] * traj.times[:, None] + W[:, None] * sigma[0]
    np.testing.assert_allclose(traj.states[:, 0, 0], expect, atol=1e-12)
    np.testing.assert_array_equal(traj.states[:, 1], np.broadcast_to(x0[1], (101, 1, 2)))


def test_mirror_symmetry_of_stochastic_trajectories():
    """Mirror pairs of fields driven by the same increments keep x -> -x symmetry."""
    f = DeformationNoiseField([0.5, 0.3], [0.4, 0.1], 0.7)
    mirror = DeformationNoiseField(-f.amplitude, -f.center, f.width)
    nu = np.array([0.2, 0.1])
    sys_ = LandmarkSystem(K11, 0.4, [f, mirror], sigma_nu=[nu, -nu])
    q1, p1 = np.array([0.6, 0.2]), np.array([-0.4, 0.9])
    x0 = np.array([[q1, -q1], [p1, -p1]])
    w = sample_wiener_path(3, 0.01, 100, 2).increments
    inc = np.stack([w[:, 0], w[:, 0], w[:, 1], w[:, 1]], axis=1)
    traj = integrate_path(sys_, x0, 1.0, 100, inc)
    np.testing.assert_allclose(traj.states[:, :, 1], -traj.states[:, :, 0], atol=1e-13)


def test_tracers_immobile_without_momentum_or_noise():
    sys_ = LandmarkSystem(K11, 0.3)
    x0 = np.array([[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]])
    traj = integrate_path(sys_, x0, 1.0, 20)
    cloud = TracerCloud([[0.3, 0.4], [-1.0, 2.0]])
    out = flow_tracers(cloud, sys_, traj, np.zeros((20, 0)))
    np.testing.assert_array_equal(out, np.broadcast_to(cloud.x, out.shape))


@pytest.mark.parametrize("noisy", [False, True])
def test_tracer_on_landmark_tracks_it(noisy):
    fields = [DeformationNoiseField([0.3, 0.1], [0.2, 0.1], 0.8)] if noisy else []
    sys_ = LandmarkSystem(K11, 0.0, fields)
    M = 1000
    path = sample_wiener_path(3, 1 / M, M, sys_.n_channels)
    traj = integrate_path(sys_, X0, 1.0, M, path)
    out = flow_tracers(TracerCloud(X0[0, :1]), sys_, traj, path)
    assert np.max(np.abs(out[:, 0] - traj.states[:, 0, 0])) < 1e-4


def test_far_tracer_barely_moves():
    sys_ = LandmarkSystem(K11, 0.0, [DeformationNoiseField([0.3, 0.1], [0.2, 0.1], 0.8)])
    path = sample_wiener_path(3, 0.01, 100, 1)
    traj = integrate_path(sys_, X0, 1.0, 100, path)
    for method in ("heun", "euler_maruyama_ito"):
        out = flow_tracers(TracerCloud([[8.0, 8.0]]), sys_, traj, path, method)
        assert np.max(np.abs(out - [8.0, 8.0])) < 1e-8


def test_tracer_grid_mismatch():
    sys_ = LandmarkSystem(K11, 0.0, FIELDS)
    path = sample_wiener_path(1, 0.01, 100, 2)
    traj = integrate_path(sys_, X0, 1.0, 100, path)
    cloud = TracerCloud([[0.0, 0.0]])
    with pytest.raises(InvalidInputError):
        flow_tracers(cloud, sys_, traj, sample_wiener_path(1, 0.01, 50, 2))
    with pytest.raises(InvalidInputError):
        flow_tracers(cloud, sys_, traj, sample_wiener_path(1, 0.02, 100, 2))
    with pytest.raises(InvalidInputError):
        flow_tracers(cloud, sys_, traj, sample_wiener_path(1, 0.01, 100, 1))
