"""Test the DC measurement model, the injection attack and the J test"""
import os.path
import sys

import numpy as np
import pytest
from scipy import integrate

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from uadetect import powergrid
from uadetect.powergrid import AttackSpec, DcGridModel, RankDeficientError
from uadetect.readparam import ConfigError


def two_meter_grid():
    """One state seen twice with unit noise: J = (z0 - z1)^2 / 2"""
    return DcGridModel([[1.], [1.]], noise_sigma=1.)


def test_measure_examples():
    grid = DcGridModel(np.eye(3)[:, :2], noise_sigma=0.5)
    z = powergrid.measure(grid, [2., -1.], seed=0)
    e = 0.5 * np.random.default_rng(0).standard_normal(3)
    assert np.allclose(z, np.array([2., -1., 0.]) + e)


def test_measurement_noise_level():
    """Residuals z - H x have the requested spread"""
    grid = powergrid.default_grid()
    x = np.tile(grid.state_mean, (20000, 1))
    z = powergrid.measure(grid, x, seed=1)
    noise = z - x.dot(grid.H.T)
    assert noise.shape == (20000, 8)
    assert abs(np.std(noise) - 0.01) < 2e-4


def test_inject_attack_is_additive():
    grid = powergrid.default_grid()
    rng = np.random.default_rng(2)
    z = powergrid.measurement_batch(grid, 10, rng=rng)
    attack = AttackSpec([0.01, 0., -0.02, 0.005])
    attacked = powergrid.inject_attack(z, grid, attack)
    assert np.allclose(attacked - z, grid.H.dot(attack.shift_c))
    zero = AttackSpec(np.zeros(4))
    assert np.array_equal(powergrid.inject_attack(z, grid, zero), z)


def test_estimator_follows_attack():
    """The estimate moves by exactly the injected state shift"""
    grid = powergrid.default_grid()
    z = powergrid.measurement_batch(grid, 5, seed=3)
    attack = AttackSpec([0.02, -0.01, 0., 0.03])
    before = powergrid.estimate_state(z, grid)
    after = powergrid.estimate_state(powergrid.inject_attack(z, grid, attack),
                                     grid)
    assert np.allclose(after - before, attack.shift_c, atol=1e-12)


def test_j_zero_in_column_space():
    grid = powergrid.default_grid()
    z = grid.H.dot([0.3, -0.2, 0.1, 0.05])
    assert powergrid.jx_statistic(z, grid) == pytest.approx(0., abs=1e-16)


def test_j_test_single_dof():
    """dof 1, 5% level: J = 4 rejects, J = 3 does not"""
    grid = two_meter_grid()
    J, reject = powergrid.jx_test([np.sqrt(8.), 0.], grid, 0.05)
    assert J == pytest.approx(4.)
    assert reject
    J, reject = powergrid.jx_test([np.sqrt(6.), 0.], grid, 0.05)
    assert J == pytest.approx(3.)
    assert not reject


def test_j_test_vectorised():
    grid = two_meter_grid()
    J, reject = powergrid.jx_test([[np.sqrt(8.), 0.], [0., np.sqrt(6.)]],
                                  grid, 0.05)
    assert np.allclose(J, [4., 3.])
    assert list(reject) == [True, False]


def test_chi2_quantile_known_values():
    assert powergrid.chi2_quantile(1, 0.95) == pytest.approx(3.841459,
                                                             abs=1e-6)
    assert powergrid.chi2_quantile(4, 0.95) == pytest.approx(9.487729,
                                                             abs=1e-6)


def _chi2_cdf_dof1(q):
    # substituting x = t^2 removes the singularity of the density at 0
    integrand = lambda t: 2. * np.exp(-t**2 / 2.) / np.sqrt(2. * np.pi)
    return integrate.quad(integrand, 0., np.sqrt(q))[0]


def _chi2_cdf_dof4(q):
    return integrate.quad(lambda x: x * np.exp(-x / 2.) / 4., 0., q)[0]


@pytest.mark.parametrize('p', [0.01, 0.5, 0.95, 0.999])
def test_chi2_quantile_inverts_density(p):
    assert _chi2_cdf_dof1(powergrid.chi2_quantile(1, p)) \
           == pytest.approx(p, abs=1e-8)
    assert _chi2_cdf_dof4(powergrid.chi2_quantile(4, p)) \
           == pytest.approx(p, abs=1e-8)


def test_chi2_quantile_errors():
    for dof, p in [(0, 0.5), (1, 0.), (1, 1.), (2, -0.1)]:
        with pytest.raises(ValueError):
            powergrid.chi2_quantile(dof, p)


def test_attack_invisible_to_j():
    """J is unchanged by H c for random states, noise and shifts"""
    grid = powergrid.default_grid()
    rng = np.random.default_rng(4)
    n = 10**4
    z = powergrid.measure(grid, powergrid.sample_states(grid, n, rng=rng),
                          rng=rng)
    shifts = rng.normal(scale=0.05, size=(n, grid.n_state))
    attacked = z + shifts.dot(grid.H.T)
    assert np.allclose(powergrid.jx_statistic(attacked, grid),
                       powergrid.jx_statistic(z, grid), rtol=1e-6, atol=1e-8)


def test_batch_j_is_sum():
    grid = powergrid.default_grid()
    zs = powergrid.measurement_batch(grid, 50, seed=5)
    assert powergrid.batch_jx_statistic(zs, grid) \
           == pytest.approx(np.sum(powergrid.jx_statistic(zs, grid)))


def test_clean_j_has_chi2_mean():
    """Mean J over many clean vectors is close to the dof"""
    grid = powergrid.default_grid()
    zs = powergrid.measurement_batch(grid, 20000, seed=6)
    # sd of the mean is sqrt(2 * 4 / 20000) ~ 0.02
    assert abs(np.mean(powergrid.jx_statistic(zs, grid)) - grid.dof) < 0.1


def test_rank_deficient():
    with pytest.raises(RankDeficientError):
        DcGridModel([[1., 1.], [2., 2.], [3., 3.]])
    with pytest.raises(RankDeficientError):
        DcGridModel(np.eye(2))


def test_grid_validation():
    with pytest.raises(ValueError):
        DcGridModel(powergrid.DEFAULT_H, noise_sigma=0.)
    with pytest.raises(ValueError):
        DcGridModel(powergrid.DEFAULT_H, state_mean=[0., 1.])
    with pytest.raises(ValueError):
        DcGridModel(powergrid.DEFAULT_H, state_cov=-np.ones(4))


def test_default_grid():
    grid = powergrid.default_grid()
    assert (grid.m_meas, grid.n_state, grid.dof) == (8, 4, 4)
    assert np.allclose(np.diag(grid.state_cov), 0.005**2)
    assert np.allclose(grid.measurement_mean(),
                       powergrid.DEFAULT_H.dot([0.1, 0.05, -0.05, -0.1]))
    assert np.allclose(grid.measurement_cov(),
                       grid.measurement_cov().T)


def test_default_attack():
    """Shifts the state seen by two meters, with ||H c|| = 3 sigma"""
    grid = powergrid.default_grid()
    attack = powergrid.default_attack(grid)
    a = attack.attack_vector(grid)
    assert list(np.flatnonzero(a)) == [6, 7]
    assert attack.target_meters == (6, 7)
    assert np.linalg.norm(a) == pytest.approx(3. * grid.noise_sigma)
    assert np.count_nonzero(attack.shift_c) == 1
    with pytest.raises(ValueError):
        powergrid.default_attack(grid, state_ix=4)


def test_attack_shape_mismatch():
    with pytest.raises(ValueError):
        AttackSpec([1., 2.]).attack_vector(powergrid.default_grid())


def test_measurement_batch_seeded():
    grid = powergrid.default_grid()
    attack = powergrid.default_attack(grid)
    clean = powergrid.measurement_batch(grid, 50, seed=7)
    attacked = powergrid.measurement_batch(grid, 50, seed=7, attack=attack)
    assert clean.shape == (50, 8)
    assert np.allclose(attacked - clean, attack.attack_vector(grid))
    with pytest.raises(ValueError):
        powergrid.measurement_batch(grid, 0)


def test_load_grid(tmp_path):
    grid_file = tmp_path / 'grid.pars.txt'
    grid_file.write_text('# three meters, two states\n'
                         'noise_sigma = 0.02\n'
                         'state_mean = [0.5, -0.5]\n'
                         '[H]\n'
                         '1, 0\n'
                         '0, 1\n'
                         '1, -1\n')
    grid, pars = powergrid.load_grid(str(grid_file))
    assert grid.H.shape == (3, 2)
    assert grid.noise_sigma == 0.02
    assert np.allclose(grid.state_mean, [0.5, -0.5])
    assert np.allclose(np.diag(grid.state_cov), 0.005**2)
    assert pars['noise_sigma'] == 0.02


def test_load_grid_defaults(tmp_path):
    grid_file = tmp_path / 'grid.pars.txt'
    grid_file.write_text('state_sigma = 0.001\n')
    grid, _ = powergrid.load_grid(str(grid_file))
    assert np.array_equal(grid.H, powergrid.DEFAULT_H)
    assert np.allclose(np.diag(grid.state_cov), 1e-6)


def test_load_grid_errors(tmp_path):
    grid_file = tmp_path / 'grid.pars.txt'
    grid_file.write_text('voltage = 3\n')
    with pytest.raises(ConfigError):
        powergrid.load_grid(str(grid_file))

    grid_file.write_text('[H]\n1, 0\nx, 1\n')
    with pytest.raises(ConfigError):
        powergrid.load_grid(str(grid_file))

    grid_file.write_text('[H]\n1, 1\n2, 2\n3, 3\n')
    with pytest.raises(RankDeficientError):
        powergrid.load_grid(str(grid_file))

    with pytest.raises(ConfigError):
        powergrid.load_grid(str(tmp_path / 'missing.txt'))
