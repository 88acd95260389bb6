"""
The unobservable injection attack on the surrogate grid: invisible to
the residual test, visible to the coincidence test.
"""
import logging
import sys

import numpy as np

sys.path.insert(0, '..')
from uadetect import evaluate
from uadetect import powergrid
from uadetect.evaluate import ExperimentPlan


def test_j_invariant_under_attack():
    grid = powergrid.default_grid()
    rng = np.random.default_rng(99)
    n = 10**4
    states = powergrid.sample_states(grid, n, rng=rng)
    z = powergrid.measure(grid, states, rng=rng)
    shifts = rng.normal(scale=0.02, size=(n, grid.n_state))
    attacked = z + shifts.dot(grid.H.T)
    diff = powergrid.jx_statistic(attacked, grid) \
           - powergrid.jx_statistic(z, grid)
    assert np.max(np.abs(diff)) <= 1e-9


def test_oracle_sees_what_j_test_misses():
    plan = ExperimentPlan(scenario='grid', detectors=['uad_oracle', 'jtest'],
                          batches_per_class=2000, seed=21)
    _, curves = evaluate.run_experiment(plan)
    logging.info('Grid AUCs: {}'.format(
            dict((name, curve.auc) for name, curve in curves.items())))
    assert 0.45 <= curves['jtest'].auc <= 0.55
    assert curves['uad_oracle'].auc > 0.6
