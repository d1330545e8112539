import numpy as np
import pytest

from metamorph.errors import InvalidInputError
from metamorph.ensemble import EnsembleFailure, EnsembleSpec, endpoint_moments, run_ensemble
from metamorph.kernels import KernelSpec
from metamorph.landmarks import LandmarkSystem
from metamorph.noise import DeformationNoiseField
from metamorph.sde import integrate_path

K11 = KernelSpec(1.0, 1.0)
X0 = np.array([[[-0.5, 0.0], [0.5, 0.2]], [[1.0, 0.3], [-0.5, 0.8]]])
NOISY = LandmarkSystem(K11, 0.5, [DeformationNoiseField([0.6, 0.0], [0.0, 0.0], 0.8),
                                  DeformationNoiseField([0.0, 0.6], [0.5, 0.5], 0.7)],
                       sigma_nu=[[0.1, 0.0], [0.0, 0.1]])


class Explosive:
    """dx = x^2 dt + dW: many paths leave to infinity in finite time."""

    state_ndim = 0
    n_channels = 1

    def drift(self, x):
        return x * x

    def diffusion(self, x, c):
        return np.ones_like(x)


def test_zero_noise_collapse():
    sys_ = LandmarkSystem(K11, 0.5, [DeformationNoiseField([0.0, 0.0], [0.0, 0.0], 1.0)],
                          sigma_nu=np.zeros((2, 2)))
    spec = EnsembleSpec(sys_, X0, 1.0, 50, realizations=16, output_times=[0.5, 1.0],
                        keep_trajectories=True)
    stats = run_ensemble(spec)
    assert stats.count == 16 and stats.failures == 0
    assert np.all(stats.trajectories == stats.trajectories[:1])
    np.testing.assert_array_equal(stats.variance, 0.0)
    det = integrate_path(sys_.without_noise(), X0, 1.0, 50).states
    np.testing.assert_array_equal(stats.mean, det[[25, 50]])
    np.testing.assert_allclose(stats.times, [0.5, 1.0])


def test_template_noise_variance_law():
    s, T = 0.3, 1.0
    sys_ = LandmarkSystem(K11, 0.0, sigma_nu=[[s, 0.0]])
    x0 = np.array([[[0.0, 0.0]], [[0.4, 0.1]]])
    stats = run_ensemble(EnsembleSpec(sys_, x0, T, 20, base_seed=3, realizations=3000))
    assert stats.variance[0, 0, 0, 0] == pytest.approx(s ** 2 * T, rel=0.1)
    np.testing.assert_array_equal(stats.variance[0, 1], 0.0)


def test_same_seed_bit_identical():
    spec = dict(system=NOISY, x0=X0, T=1.0, steps=20, base_seed=11, realizations=50)
    a, b = run_ensemble(EnsembleSpec(**spec)), run_ensemble(EnsembleSpec(**spec))
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.variance, b.variance)
    np.testing.assert_array_equal(a.covariance, b.covariance)
    c = run_ensemble(EnsembleSpec(**{**spec, "base_seed": 12}))
    assert not np.array_equal(a.mean, c.mean)


def test_schedule_independence(monkeypatch):
    spec = dict(system=NOISY, x0=X0, T=1.0, steps=20, base_seed=5, realizations=300,
                block_size=64)
    serial = run_ensemble(EnsembleSpec(**spec, workers=1))
    threaded = run_ensemble(EnsembleSpec(**spec, workers=3))
    monkeypatch.setenv("METAMORPH_THREADS", "4")
    from_env = run_ensemble(EnsembleSpec(**spec))
    for other in (threaded, from_env):
        np.testing.assert_array_equal(serial.mean, other.mean)
        np.testing.assert_array_equal(serial.variance, other.variance)
        np.testing.assert_array_equal(serial.covariance, other.covariance)


def test_blocked_moments_match_direct_moments():
    spec = EnsembleSpec(NOISY, X0, 1.0, 20, base_seed=5, realizations=300, block_size=64,
                        keep_trajectories=True)
    stats = run_ensemble(spec)
    ends = stats.trajectories[:, -1]
    np.testing.assert_allclose(stats.mean[-1], ends.mean(axis=0), atol=1e-13)
    np.testing.assert_allclose(stats.variance[-1], ends.var(axis=0, ddof=1), atol=1e-13)
    _, cov = endpoint_moments(ends[:, 0])
    np.testing.assert_allclose(stats.covariance[-1], cov, atol=1e-13)


def test_covariance_symmetric_psd():
    stats = run_ensemble(EnsembleSpec(NOISY, X0, 1.0, 20, realizations=200))
    cov = stats.covariance[-1]
    np.testing.assert_allclose(cov, cov.T, atol=1e-15)
    assert np.linalg.eigvalsh(cov).min() >= -1e-10
    assert np.all(stats.variance >= 0)
    np.testing.assert_allclose(stats.standard_error(), np.sqrt(stats.variance / 200))


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_failure_policy():
    lenient = EnsembleSpec(Explosive(), 0.0, 3.0, 60, realizations=200, max_failure_fraction=1.0)
    stats = run_ensemble(lenient)
    assert stats.failures > 2
    assert stats.count + stats.failures == 200
    assert len(stats.failed_realizations) == stats.failures
    assert np.all(np.isfinite(stats.mean))
    with pytest.raises(EnsembleFailure):
        run_ensemble(EnsembleSpec(Explosive(), 0.0, 3.0, 60, realizations=200))


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        EnsembleSpec(NOISY, X0, 1.0, 10, realizations=0)
    with pytest.raises(InvalidInputError):
        EnsembleSpec(NOISY, X0, 1.0, 10, method="rk4")
    with pytest.raises(InvalidInputError):
        EnsembleSpec(NOISY, X0, 1.0, 10, output_times=[0.55]).output_indices()


# -- endpoint moments ----------------------------------------------------------------

def test_endpoint_moments_examples(rng):
    with pytest.raises(InvalidInputError):
        endpoint_moments(np.ones((1, 3)))
    x = rng.normal(size=(4, 2))
    mean, _ = endpoint_moments(np.stack([x, -x]))
    np.testing.assert_array_equal(mean, 0.0)


def test_endpoint_moments_recover_known_covariance(rng):
    C = np.array([[1.0, 0.6, -0.2], [0.6, 2.0, 0.3], [-0.2, 0.3, 0.5]])
    sample = rng.multivariate_normal([1.0, -2.0, 0.5], C, size=10 ** 4)
    mean, cov = endpoint_moments(sample)
    np.testing.assert_allclose(mean, [1.0, -2.0, 0.5], atol=0.05)
    scale = np.sqrt(np.outer(np.diag(C), np.diag(C)))
    assert np.max(np.abs(cov - C) / scale) < 0.1
