"""Test the command line surface through cli.main"""
import os.path
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from uadetect import cli
from uadetect import tabletool
from uadetect import uniformity


def read_bytes(filename):
    with open(filename, 'rb') as fp:
        return fp.read()


def make_training_csv(tmp_path, nrows=600, seed=0):
    filename = str(tmp_path / 'nominal.csv')
    rows = np.random.default_rng(seed).normal(size=(nrows, 1))
    tabletool.write_rows(rows, filename)
    return filename


def train_small(data, outdir, *extra):
    return cli.main(['train', data, '--out', outdir, '--seed', '3',
                     '--iters', '4', '--critic-iters', '2',
                     '--val-every', '2'] + list(extra))


def test_threshold(capsys):
    assert cli.main(['threshold', '200', '50', '0.05']) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert int(out) == uniformity.threshold(200, 50, 0.05)


def test_threshold_bad_alpha(capsys):
    assert cli.main(['threshold', '200', '50', '1.5']) == cli.EXIT_CONFIG
    assert 'error' in capsys.readouterr().err


def test_pmf(capsys):
    assert cli.main(['pmf', '3', '2']) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'k,probability'
    values = [line.split(',') for line in lines[1:]]
    assert [int(k) for k, _ in values] == [0, 1, 2]
    assert [float(p) for _, p in values] == [1. / 3., 0., 2. / 3.]


def test_help_and_usage():
    with pytest.raises(SystemExit) as err:
        cli.main(['--help'])
    assert err.value.code == 0
    with pytest.raises(SystemExit) as err:
        cli.main(['scenario', 'case7'])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        cli.main([])
    assert err.value.code == 2


def test_train_empty_csv(tmp_path):
    data = str(tmp_path / 'empty.csv')
    with open(data, 'w') as fp:
        fp.write('z0\n')
    assert train_small(data, str(tmp_path / 'out')) == cli.EXIT_DATA


def test_train_constant_csv(tmp_path):
    data = str(tmp_path / 'constant.csv')
    tabletool.write_rows(np.full((600, 1), 2.5), data)
    assert train_small(data, str(tmp_path / 'out')) == cli.EXIT_DATA


def test_train_unknown_config_key(tmp_path):
    data = make_training_csv(tmp_path)
    config = str(tmp_path / 'train.pars')
    with open(config, 'w') as fp:
        fp.write('learning_rat = 0.01\n')
    assert train_small(data, str(tmp_path / 'out'), '--config', config) \
           == cli.EXIT_CONFIG


def test_train_bad_flag_value(tmp_path):
    data = make_training_csv(tmp_path)
    assert train_small(data, str(tmp_path / 'out'), '--alpha', '2') \
           == cli.EXIT_CONFIG


def test_train_divergence(tmp_path):
    data = make_training_csv(tmp_path)
    assert train_small(data, str(tmp_path / 'out'),
                       '--learning-rate', '1e300') == cli.EXIT_NUMERIC


def test_train_is_reproducible(tmp_path):
    """Same data, seed and flags: byte identical model and trace"""
    data = make_training_csv(tmp_path)
    first = str(tmp_path / 'first')
    second = str(tmp_path / 'second')
    assert train_small(data, first) == cli.EXIT_OK
    assert train_small(data, second) == cli.EXIT_OK
    for name in ('model.uadm', 'trace.csv'):
        assert read_bytes(os.path.join(first, name)) \
               == read_bytes(os.path.join(second, name))
    assert os.path.exists(os.path.join(first, cli.PAR_LOG))


def test_detect(tmp_path):
    data = make_training_csv(tmp_path)
    outdir = str(tmp_path / 'model')
    assert train_small(data, outdir) == cli.EXIT_OK
    batches = str(tmp_path / 'batches.csv')
    rng = np.random.default_rng(1)
    tabletool.write_batches(rng.normal(size=(3, 50, 1)), batches)
    verdicts = str(tmp_path / 'verdicts.csv')
    assert cli.main(['detect', os.path.join(outdir, 'model.uadm'), batches,
                     '--out', verdicts, '--nthreads', '2']) == cli.EXIT_OK
    with open(verdicts) as fp:
        lines = fp.read().splitlines()
    assert lines[0] == 'batch_id,k1,threshold,decision'
    assert len(lines) == 4
    for batch_id, line in enumerate(lines[1:]):
        fields = line.split(',')
        assert int(fields[0]) == batch_id
        assert 0 <= int(fields[1]) <= 50
        assert fields[3] in ('anomaly', 'normal')
        assert (fields[3] == 'anomaly') == (int(fields[1]) <= int(fields[2]))


def test_detect_wrong_shape(tmp_path):
    data = make_training_csv(tmp_path)
    outdir = str(tmp_path / 'model')
    assert train_small(data, outdir) == cli.EXIT_OK
    model = os.path.join(outdir, 'model.uadm')

    wide = str(tmp_path / 'wide.csv')
    tabletool.write_rows(np.zeros((50, 2)), wide)
    assert cli.main(['detect', model, wide, '--out',
                     str(tmp_path / 'v.csv')]) == cli.EXIT_DATA

    ragged = str(tmp_path / 'ragged.csv')
    tabletool.write_rows(np.zeros((70, 1)), ragged)
    assert cli.main(['detect', model, ragged, '--out',
                     str(tmp_path / 'v.csv')]) == cli.EXIT_DATA

    gap = str(tmp_path / 'gap.csv')
    rows = np.full((50, 1), 0.1)
    rows[17] = np.nan
    tabletool.write_rows(rows, gap)
    assert cli.main(['detect', model, gap, '--out',
                     str(tmp_path / 'v.csv')]) == cli.EXIT_DATA


def test_detect_corrupt_model(tmp_path):
    model = str(tmp_path / 'model.uadm')
    with open(model, 'w') as fp:
        fp.write('[header]\nformat_version = 1\n')
    batches = str(tmp_path / 'batches.csv')
    tabletool.write_rows(np.zeros((50, 1)), batches)
    assert cli.main(['detect', model, batches, '--out',
                     str(tmp_path / 'v.csv')]) == cli.EXIT_DATA


def test_scenario_files(tmp_path):
    outdir = str(tmp_path / 'case2')
    assert cli.main(['scenario', 'case2', '--out', outdir, '--seed', '4',
                     '--batches', '5', '--train-samples', '100']) \
           == cli.EXIT_OK
    assert tabletool.read_rows(os.path.join(outdir, 'train.csv')).shape \
           == (100, 1)
    h1 = tabletool.read_batches(os.path.join(outdir, 'h1_batches.csv'), 50)
    assert h1.shape == (5, 50, 1)
    nuisance = tabletool.read_rows(os.path.join(outdir, 'h1_nuisance.csv'))
    assert np.all((nuisance[:, 1] >= 0.5) & (nuisance[:, 1] <= 0.8))
    assert os.path.exists(os.path.join(outdir, 'h0_batches.csv'))
    assert os.path.exists(os.path.join(outdir, cli.PAR_LOG))


def test_scenario_negative_seed(tmp_path):
    assert cli.main(['scenario', 'case1', '--out', str(tmp_path / 'neg'),
                     '--seed', '-1', '--batches', '5']) == cli.EXIT_CONFIG


def test_grid_scenario_attack_is_constant_shift(tmp_path):
    outdir = str(tmp_path / 'grid')
    assert cli.main(['scenario', 'grid', '--out', outdir, '--seed', '5',
                     '--batches', '3', '--train-samples', '60']) \
           == cli.EXIT_OK
    clean = tabletool.read_rows(os.path.join(outdir, 'clean_batches.csv'))
    attacked = tabletool.read_rows(os.path.join(outdir,
                                                'attacked_batches.csv'))
    assert clean.shape == (150, 8)
    shift = attacked - clean
    assert np.allclose(shift, shift[0], atol=1e-12)
    assert np.linalg.norm(shift[0]) == pytest.approx(0.03)


def reproduce_small(outdir):
    return cli.main(['reproduce', '1', '--out', outdir, '--seed', '6',
                     '--batches', '20', '--train-samples', '600',
                     '--train-iters', '2'])


def test_reproduce_is_deterministic(tmp_path):
    first = str(tmp_path / 'first')
    second = str(tmp_path / 'second')
    assert reproduce_small(first) == cli.EXIT_OK
    assert reproduce_small(second) == cli.EXIT_OK
    for name in ('model_uad.uadm', 'roc_uad.csv', 'roc_uad_oracle.csv',
                 'summary.csv'):
        assert read_bytes(os.path.join(first, name)) \
               == read_bytes(os.path.join(second, name))
    with open(os.path.join(first, 'roc_uad_oracle.csv')) as fp:
        lines = fp.read().splitlines()
    assert lines[0] == 'fpr,tpr'
    assert lines[-1].startswith('auc=')


def test_reproduce_oracle_only(tmp_path):
    outdir = str(tmp_path / 'oracle')
    assert cli.main(['reproduce', 'mixture', '--out', outdir, '--seed', '7',
                     '--batches', '20', '--detectors', 'uad_oracle']) \
           == cli.EXIT_OK
    assert not os.path.exists(os.path.join(outdir, 'model_uad.uadm'))
    assert os.path.exists(os.path.join(outdir, 'roc_uad_oracle.csv'))


def test_reproduce_rejects_jtest_off_grid(tmp_path):
    assert cli.main(['reproduce', '2', '--out', str(tmp_path / 'x'),
                     '--detectors', 'jtest']) == cli.EXIT_CONFIG
