"""
powergrid.py

A linear (DC) surrogate of a power system measurement model

    z = H x + e,    e ~ N(0, noise_sigma^2 I)

together with the unobservable data injection attack z' = z + H c, the
least-squares state estimator and the classical chi-square residual
(J) test for bad data.

An attack built from the column space of H moves the state estimate by
exactly c and leaves the residual, and hence J, untouched. It does
however move the distribution of z, which is what the universal
detector picks up on.
"""
from __future__ import division

import logging

import numpy as np
from scipy.stats import chi2

from . import readparam

# 4 bus states, 8 meters: three injections, three line flows and one
# more injection. Entries follow DC power-flow incidence patterns.
DEFAULT_H = np.array([
    [1.,  0.,  0.,  0.],
    [0.,  1.,  0.,  0.],
    [0.,  0.,  1.,  0.],
    [1., -1.,  0.,  0.],
    [0.,  1., -1.,  0.],
    [1.,  0., -1.,  0.],
    [0.,  0.,  1., -1.],
    [0.,  0.,  0.,  1.],
])

DEFAULT_GRID_PARS = {
    'noise_sigma': 0.01,
    'state_mean': [0.1, 0.05, -0.05, -0.1],
    'state_sigma': 0.005,
}

DEFAULT_ATTACK_PARS = {
    # ||H c|| as a multiple of noise_sigma
    'attack_scale': 3.0,
    # -1 picks the state observed by the fewest meters
    'attack_state': -1,
}


class RankDeficientError(ValueError):
    """The measurement matrix cannot support state estimation"""
    pass


class DcGridModel(object):
    """
    Measurement model with Gaussian states.

    Attributes
    ----------
    H : [m_meas, n_state] float array
    noise_sigma : float
    state_mean : [n_state] float array
    state_cov : [n_state, n_state] float array
    """

    def __init__(self, H, noise_sigma=0.01, state_mean=None, state_cov=None):
        H = np.array(H, dtype=np.float64)
        if H.ndim != 2:
            raise ValueError('H must be a 2D matrix, got shape {}'.format(
                    H.shape))
        m_meas, n_state = H.shape
        if np.linalg.matrix_rank(H) < n_state:
            raise RankDeficientError('H ({}x{}) has rank {}, needs full '
                                     'column rank'.format(
                    m_meas, n_state, np.linalg.matrix_rank(H)))
        if m_meas <= n_state:
            raise RankDeficientError('J test needs more meters than states, '
                                     'got {} meters for {} states'.format(
                    m_meas, n_state))
        if not noise_sigma > 0:
            raise ValueError('noise_sigma must be positive, got {}'.format(
                    noise_sigma))

        if state_mean is None:
            state_mean = np.zeros(n_state)
        state_mean = np.array(state_mean, dtype=np.float64).reshape(-1)
        if state_mean.shape != (n_state,):
            raise ValueError('state_mean must have {} entries'.format(n_state))

        if state_cov is None:
            state_cov = np.zeros((n_state, n_state))
        state_cov = np.array(state_cov, dtype=np.float64)
        # A vector is read as the diagonal of the covariance
        if state_cov.ndim == 1:
            state_cov = np.diag(state_cov)
        if state_cov.shape != (n_state, n_state):
            raise ValueError('state_cov must be {0}x{0}'.format(n_state))
        if not np.allclose(state_cov, state_cov.T):
            raise ValueError('state_cov must be symmetric')
        if np.min(np.linalg.eigvalsh(state_cov)) < -1e-12:
            raise ValueError('state_cov must be positive semi-definite')

        self.H = H
        self.noise_sigma = float(noise_sigma)
        self.state_mean = state_mean
        self.state_cov = state_cov

    @property
    def m_meas(self):
        return self.H.shape[0]

    @property
    def n_state(self):
        return self.H.shape[1]

    @property
    def dof(self):
        """Measurement redundancy, the J test degrees of freedom"""
        return self.m_meas - self.n_state

    def measurement_mean(self):
        return self.H.dot(self.state_mean)

    def measurement_cov(self):
        """Covariance of clean measurements, H Sigma H^T + noise_sigma^2 I"""
        return self.H.dot(self.state_cov).dot(self.H.T) \
               + self.noise_sigma**2 * np.eye(self.m_meas)


class AttackSpec(object):
    """
    An unobservable injection a = H c.

    Parameters
    ----------
    shift_c : [n_state] float array_like
        The state offset the estimator is fooled into reporting
    target_meters : [int] {None}
        Meters the attack touches, recorded for reference
    """

    def __init__(self, shift_c, target_meters=None):
        self.shift_c = np.array(shift_c, dtype=np.float64).reshape(-1)
        self.target_meters = None if target_meters is None \
                             else tuple(int(i) for i in target_meters)

    def attack_vector(self, grid):
        if self.shift_c.shape != (grid.n_state,):
            raise ValueError('shift_c has {} entries, grid has {} states'
                             .format(len(self.shift_c), grid.n_state))
        return grid.H.dot(self.shift_c)


def default_grid(noise_sigma=None, state_mean=None, state_sigma=None):
    """The 4 state, 8 meter surrogate grid with independent state loads"""
    pars = DEFAULT_GRID_PARS
    if noise_sigma is None:
        noise_sigma = pars['noise_sigma']
    if state_mean is None:
        state_mean = pars['state_mean']
    if state_sigma is None:
        state_sigma = pars['state_sigma']
    n_state = DEFAULT_H.shape[1]
    return DcGridModel(DEFAULT_H, noise_sigma=noise_sigma,
                       state_mean=state_mean,
                       state_cov=np.full(n_state, float(state_sigma)**2))


def default_attack(grid, scale=DEFAULT_ATTACK_PARS['attack_scale'],
                   state_ix=DEFAULT_ATTACK_PARS['attack_state']):
    """
    Shift a single state so that ||H c|| = scale * noise_sigma.

    With the default grid the last state is seen by two meters only, so
    the attack corrupts exactly two measurements.

    Parameters
    ----------
    grid : DcGridModel
    scale : float {3.0}
    state_ix : int {-1}
        State to shift. -1 picks the state observed by the fewest meters.
    """
    meters_per_state = np.sum(grid.H != 0, axis=0)
    if state_ix < 0:
        state_ix = int(np.argmin(meters_per_state))
    if not 0 <= state_ix < grid.n_state:
        raise ValueError('state_ix {} out of range for {} states'.format(
                state_ix, grid.n_state))
    column = grid.H[:, state_ix]
    shift_c = np.zeros(grid.n_state)
    shift_c[state_ix] = scale * grid.noise_sigma / np.linalg.norm(column)
    target_meters = np.flatnonzero(column)
    logging.debug('Default attack shifts state {} touching meters {}'.format(
            state_ix, list(target_meters)))
    return AttackSpec(shift_c, target_meters=target_meters)


def _rng(rng=None, seed=None):
    if rng is None:
        rng = np.random.default_rng(seed)
    return rng


def _check_states(x, grid):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (grid.n_state,) or x.ndim > 2:
        raise ValueError('State has shape {}, grid has {} states'.format(
                x.shape, grid.n_state))
    return x


def _check_measurements(z, grid):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1:] != (grid.m_meas,) or z.ndim > 2:
        raise ValueError('Measurement has shape {}, grid has {} meters'
                         .format(z.shape, grid.m_meas))
    return z


def sample_states(grid, N, rng=None, seed=None):
    """N i.i.d. states from N(state_mean, state_cov), as [N, n_state]"""
    rng = _rng(rng, seed)
    # eigh rather than cholesky so that degenerate covariances are allowed
    evals, evecs = np.linalg.eigh(grid.state_cov)
    root = evecs * np.sqrt(np.clip(evals, 0., None))
    return grid.state_mean + rng.standard_normal((N, grid.n_state)).dot(root.T)


def measure(grid, x, seed=None, rng=None):
    """
    Noisy measurements of one state [n_state] or many [n, n_state].

    Returns
    -------
    z : [m_meas] -or- [n, m_meas] float array
        H x + e with e ~ N(0, noise_sigma^2)
    """
    x = _check_states(x, grid)
    rng = _rng(rng, seed)
    clean = x.dot(grid.H.T)
    return clean + grid.noise_sigma * rng.standard_normal(clean.shape)


def inject_attack(z, grid, attack):
    """z' = z + H shift_c, for a single measurement or a batch"""
    z = _check_measurements(z, grid)
    return z + attack.attack_vector(grid)


def estimate_state(z, grid):
    """
    Least-squares state estimate, argmin_x ||z - H x||.
    Accepts [m_meas] or [n, m_meas]; returns [n_state] or [n, n_state].
    """
    z = _check_measurements(z, grid)
    x_hat = np.linalg.lstsq(grid.H, z.T, rcond=None)[0]
    return x_hat.T


def jx_statistic(z, grid):
    """J = ||z - H x_hat||^2 / noise_sigma^2, per measurement vector"""
    z = _check_measurements(z, grid)
    residual = z - estimate_state(z, grid).dot(grid.H.T)
    return np.sum(residual**2, axis=-1) / grid.noise_sigma**2


def chi2_quantile(dof, p):
    """
    Inverse chi-square CDF.

    Parameters
    ----------
    dof : int
        Degrees of freedom, at least 1
    p : float
        Probability, strictly inside (0, 1)
    """
    if not dof >= 1:
        raise ValueError('dof must be at least 1, got {}'.format(dof))
    if not 0. < p < 1.:
        raise ValueError('p must lie in (0,1), got {}'.format(p))
    return float(chi2.ppf(p, dof))


def jx_test(z, grid, fp_level):
    """
    Chi-square bad data test on the estimation residual.

    Returns
    -------
    J : float -or- float array
    reject : bool -or- bool array
        True where J exceeds the (1 - fp_level) quantile with
        m_meas - n_state degrees of freedom
    """
    J = jx_statistic(z, grid)
    reject = J > chi2_quantile(grid.dof, 1. - fp_level)
    if np.ndim(J) == 0:
        return float(J), bool(reject)
    return J, reject


def batch_jx_statistic(zs, grid):
    """
    Batch level J score: the sum of per-sample J over an [N, m_meas]
    batch, chi-square with N * (m_meas - n_state) dof for clean data.
    """
    zs = _check_measurements(zs, grid)
    return float(np.sum(jx_statistic(zs, grid)))


def measurement_batch(grid, N, rng=None, attack=None, seed=None):
    """
    N i.i.d. measurement vectors [N, m_meas], each from an independent
    state draw. If `attack` is given, every vector carries H shift_c.
    """
    if N < 1:
        raise ValueError('Batch size must be positive, got {}'.format(N))
    rng = _rng(rng, seed)
    z = measure(grid, sample_states(grid, N, rng=rng), rng=rng)
    if attack is not None:
        z = inject_attack(z, grid, attack)
    return z


def load_grid(param_file):
    """
    Read a grid from a parameter file: `key = value` lines for
    noise_sigma, state_mean and state_sigma (or state_cov, the diagonal
    of the state covariance), then a line `[H]` followed by the
    matrix rows as comma separated values.

    Returns
    -------
    grid : DcGridModel
    pars : dict
        The resolved scalar parameters
    """
    custom_pars = {}
    h_rows = []
    in_matrix = False
    try:
        with open(param_file, 'r') as fp:
            for lineno, line in enumerate(fp, start=1):
                stripped = line.split('#')[0].strip()
                if stripped == '':
                    continue
                if stripped == '[H]':
                    in_matrix = True
                    continue
                if in_matrix:
                    try:
                        h_rows.append([float(v) for v in stripped.split(',')])
                    except ValueError:
                        raise readparam.ConfigError(
                                '{} line {}: bad H row: {}'.format(
                                        param_file, lineno, stripped))
                    continue
                key, raw = readparam.parse_line(stripped, lineno=lineno)
                custom_pars[key] = readparam.convert_value(raw)
    except (IOError, OSError) as err:
        raise readparam.ConfigError('Could not read grid file {}: {}'.format(
                param_file, err))

    allowed = set(DEFAULT_GRID_PARS) | {'state_cov'}
    unknown = sorted(set(custom_pars) - allowed)
    if unknown:
        raise readparam.ConfigError('Unknown grid parameter(s) in {}: {}'
                                    .format(param_file, ', '.join(unknown)))
    pars = dict(DEFAULT_GRID_PARS)
    pars.update(custom_pars)

    if not h_rows:
        H = DEFAULT_H
    elif len(set(len(row) for row in h_rows)) != 1:
        raise readparam.ConfigError('{}: H rows have differing lengths'
                                    .format(param_file))
    else:
        H = np.array(h_rows)
    n_state = H.shape[1]
    state_mean = pars['state_mean']
    if len(h_rows) and 'state_mean' not in custom_pars:
        state_mean = np.zeros(n_state)
    if 'state_cov' in custom_pars:
        state_cov = custom_pars['state_cov']
    else:
        state_cov = np.full(n_state, float(pars['state_sigma'])**2)
    try:
        grid = DcGridModel(H, noise_sigma=pars['noise_sigma'],
                           state_mean=state_mean, state_cov=state_cov)
    except RankDeficientError:
        raise
    except ValueError as err:
        raise readparam.ConfigError('{}: {}'.format(param_file, err))
    return grid, pars
