"""
tabletool.py

A bunch of functions that help move observation data, batches and
results between numpy arrays and CSV files, by way of astropy tables.

Conventions
-----------
- comma separated, '.' decimal point
- a header line is present iff the first field of the first non-blank
  line is not a number
- floats are written with 17 significant digits, enough to read back
  the identical 64-bit value
- every file is written to a temporary path and renamed into place,
  so a failed run never leaves a half written output behind
"""
from contextlib import contextmanager
import os

import numpy as np
from astropy.io.ascii import InconsistentTableError
from astropy.table import Table

FLOAT_FORMAT = '.17g'


class DataError(ValueError):
    """An input data file is empty, ragged or not numeric"""
    pass


@contextmanager
def atomic_open(filename, mode='w'):
    """
    Open `filename + '.tmp'` for writing, and rename it over `filename`
    only once the block completes without an exception.
    """
    tmp_filename = filename + '.tmp'
    try:
        with open(tmp_filename, mode) as fp:
            yield fp
        os.replace(tmp_filename, filename)
    finally:
        if os.path.exists(tmp_filename):
            os.remove(tmp_filename)


def _first_line(filename):
    with open(filename, 'r') as fp:
        for line in fp:
            if line.strip():
                return line.strip()
    return None


def has_header(first_line):
    first_field = first_line.split(',')[0].strip()
    try:
        float(first_field)
    except ValueError:
        return True
    return False


def load(filename):
    """
    Read a CSV of observations into an astropy Table.

    Raises
    ------
    DataError
        If the file is missing, holds no data rows, or has rows of
        inconsistent length
    """
    try:
        first_line = _first_line(filename)
    except (IOError, OSError) as err:
        raise DataError('Could not read {}: {}'.format(filename, err))
    if first_line is None:
        raise DataError('{}: no rows'.format(filename))
    fmt = 'ascii.csv' if has_header(first_line) else 'ascii.no_header'
    try:
        table = Table.read(filename, format=fmt, delimiter=',', guess=False)
    except (InconsistentTableError, ValueError) as err:
        raise DataError('{}: {}'.format(filename, err))
    if len(table) == 0:
        raise DataError('{}: no rows'.format(filename))
    return table


def table_to_array(table, filename='table'):
    """Stack the columns of `table` into a float [nrows, ncols] array"""
    columns = []
    for colname in table.colnames:
        col = table[colname]
        if getattr(col, 'mask', None) is not None and np.any(col.mask):
            bad_row = int(np.argmax(np.asarray(col.mask))) + 1
            raise DataError('{}: missing value in column {} (data row {})'
                            .format(filename, colname, bad_row))
        try:
            columns.append(np.asarray(col, dtype=np.float64))
        except ValueError:
            raise DataError('{}: column {} is not numeric'.format(
                    filename, colname))
    return np.vstack(columns).T


def read_rows(filename, ncols=None):
    """
    Read a CSV of observations, one per row.

    Parameters
    ----------
    filename : str
    ncols : int {None}
        If given, the required number of columns

    Returns
    -------
    rows : [nrows, ncols] float array
    """
    rows = table_to_array(load(filename), filename=filename)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(rows), axis=1))
    if len(bad_rows):
        raise DataError('{}: non-finite value in data row {}'.format(
                filename, bad_rows[0] + 1))
    if ncols is not None and rows.shape[1] != ncols:
        raise DataError('{}: expected {} column(s) per row, found {}'.format(
                filename, ncols, rows.shape[1]))
    return rows


def split_batches(rows, batch_N, filename='data'):
    """
    Cut consecutive rows into batches of `batch_N`.

    Returns
    -------
    batches : [nbatches, batch_N, ncols] float array
    """
    rows = np.asarray(rows)
    if len(rows) % batch_N != 0:
        raise DataError('{}: {} rows do not divide into batches of {}'.format(
                filename, len(rows), batch_N))
    return rows.reshape(-1, batch_N, rows.shape[1])


def read_batches(filename, batch_N, ncols=None):
    return split_batches(read_rows(filename, ncols=ncols), batch_N,
                         filename=filename)


def build_table(columns, colnames):
    """Build an astropy Table from a list of 1D arrays"""
    return Table([np.asarray(col) for col in columns], names=colnames)


def write_table(table, filename, float_cols=None, footer=None):
    """
    Store table as CSV, atomically.

    Parameters
    ----------
    table : astropy.table.Table
    filename : str
    float_cols : [str] {None}
        Columns to print with 17 significant digits. Defaults to every
        floating point column.
    footer : str {None}
        A final line appended after the table, e.g. 'auc=0.93'
    """
    if float_cols is None:
        float_cols = [name for name in table.colnames
                      if table[name].dtype.kind == 'f']
    formats = dict((name, FLOAT_FORMAT) for name in float_cols)
    with atomic_open(filename) as fp:
        table.write(fp, format='ascii.csv', formats=formats)
        if footer is not None:
            fp.write(footer.rstrip('\n') + '\n')


def write_rows(rows, filename, colnames=None):
    """Write an [nrows, ncols] float array as CSV with a header line"""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    if colnames is None:
        colnames = ['z{}'.format(i) for i in range(rows.shape[1])]
    write_table(build_table(rows.T, colnames), filename)


def write_batches(batches, filename, colnames=None):
    """Write [nbatches, batch_N, ncols] (or [nbatches, batch_N]) batches"""
    batches = np.asarray(batches, dtype=np.float64)
    if batches.ndim == 2:
        batches = batches[:, :, np.newaxis]
    write_rows(batches.reshape(-1, batches.shape[-1]), filename,
               colnames=colnames)
