"""
This module defines the parameter reading functions.
Used to parse a flat text file of `key = value` lines into a dictionary
which is merged over a dictionary of defaults, e.g.
wigan.TrainConfig.DEFAULT_PARS or evaluate.DEFAULT_PLAN_PARS.

Values are converted on the way in: ints, then floats, then booleans,
then bracketed lists such as `[1, 32, 32, 1]`. Anything else stays a
string. Everything after a `#` is a comment.

Notes
-----
The same line grammar is used for the header of persisted detector
models and for grid scenario files, see `parse_line`.
"""
import logging
import os

SEED_ENV_VAR = 'UAD_SEED'
FALLBACK_SEED = 1


class ConfigError(ValueError):
    """A parameter file or flag could not be turned into a valid config"""
    pass


def default_seed():
    """
    The seed used when neither a parameter file nor a flag gives one.
    Honours the `UAD_SEED` environment variable.
    """
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == '':
        return FALLBACK_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError('{} must be an integer, got {!r}'.format(
                SEED_ENV_VAR, raw))


def convert_value(value):
    """
    Convert a raw string token into an int, float, bool or list if it
    looks like one. Lists of numbers become lists of floats.
    """
    if not isinstance(value, str):
        return value
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass

    # Order is important, as int(True) -> 1
    if value.lower() == 'true':
        return True
    if value.lower() == 'false':
        return False

    # Assumes first char is '[' and last char is ']'
    # Can allow for trailing ','
    if len(value) >= 2 and value[0] == '[' and value[-1] == ']':
        items = [val.strip() for val in value[1:-1].split(',') if val.strip()]
        try:
            return [float(val) for val in items]
        except ValueError:
            return items
    return value


def parse_line(line, lineno=None):
    """
    Break a single `key = value  # comment` line into a (key, raw_value)
    pair. Blank and comment lines give None.

    Parameters
    ----------
    line : str
        One line of a parameter file
    lineno : int {None}
        Only used to give a helpful error message

    Returns
    -------
    pair : (str, str) -or- None
    """
    stripped = line.strip()
    if stripped == '' or stripped[0] == '#':
        return None

    # Break line up based on equal sign
    linesplit = stripped.split('=', 1)
    if len(linesplit) < 2 or linesplit[0].strip() == '':
        where = '' if lineno is None else ' (line {})'.format(lineno)
        raise ConfigError('Error parsing input line{}: {}'.format(
                where, stripped))

    # Trim trailing comments from portion after equal sign
    value = linesplit[1].split('#')[0].strip()
    return linesplit[0].strip(), value


def readParam(param_file, default_pars=None, strict=False):
    """
    This function reads a parameter file.

    Parameters
    ----------
    param_file : string
       A string giving the name of the parameter file
    default_pars : dict {None}
       Default values. Parsed values take priority.
    strict : bool {False}
       If True, keys that do not appear in `default_pars` raise a
       ConfigError rather than being passed through

    Returns
    -------
    param_dict : dict
       A dict containing a parsed representation of the input file
       merged over the defaults
    """
    if default_pars is None:
        default_pars = {}

    custom_pars = {}
    try:
        with open(param_file, 'r') as fp:
            for lineno, line in enumerate(fp, start=1):
                pair = parse_line(line, lineno=lineno)
                if pair is None:
                    continue
                custom_pars[pair[0]] = pair[1]
    except (IOError, OSError) as err:
        raise ConfigError('Could not read parameter file {}: {}'.format(
                param_file, err))

    for k in custom_pars:
        custom_pars[k] = convert_value(custom_pars[k])

    if strict:
        unknown = sorted(set(custom_pars) - set(default_pars))
        if unknown:
            raise ConfigError('Unknown parameter(s) in {}: {}'.format(
                    param_file, ', '.join(unknown)))

    combined_pars = dict(default_pars)
    combined_pars.update(custom_pars)
    return combined_pars


def resolve_pars(default_pars, param_file=None, overrides=None, strict=True):
    """
    Build the fully resolved parameter set for a run: defaults, then the
    parameter file, then explicit overrides (e.g. command line flags).
    Overrides that are None are ignored.
    """
    if param_file is not None:
        pars = readParam(param_file, default_pars=default_pars, strict=strict)
    else:
        pars = dict(default_pars)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if strict and k not in default_pars:
            raise ConfigError('Unknown parameter: {}'.format(k))
        pars[k] = convert_value(v)
    return pars


def log_used_pars(custom_pars, default_pars=None, par_log_file=None):
    """
    Write parameter record to file, making a note which have been
    changed.

    Parameters
    ----------
    custom_pars : dict
        A dict that has been generated by `readParam` or `resolve_pars`
    default_pars : dict {None}
        The defaults `custom_pars` was built over
    par_log_file : str {None}
        Destination. If None, `custom_pars['par_log_file']` is used.

    Returns
    -------
    None

    Side effects
    ------------
    Writes a file to `par_log_file`
    """
    if default_pars is None:
        default_pars = {}
    if par_log_file is None:
        par_log_file = custom_pars['par_log_file']

    # update defaults (no change if already performed)
    combined_pars = dict(default_pars)
    combined_pars.update(custom_pars)

    tmp_file = par_log_file + '.tmp'
    with open(tmp_file, 'w') as fp:
        fp.write('# Parameters used\n\n')
        for k in sorted(combined_pars.keys()):
            if k not in default_pars.keys():
                msg = '# [NO PROVIDED DEFAULT]'
            elif combined_pars[k] != default_pars[k]:
                msg = '# [CHANGED]'
            else:
                msg = ''
            line = '{:25} = {:45} {}\n'.format(k, format_value(combined_pars[k]),
                                               msg)
            fp.write(line.replace("'", ''))
    os.replace(tmp_file, par_log_file)
    logging.info('Parameters logged to {}'.format(par_log_file))


def format_value(value):
    """Inverse of `convert_value`, good enough for the parameter log"""
    if isinstance(value, (list, tuple)):
        return '[{}]'.format(', '.join(format_value(v) for v in value))
    if isinstance(value, float):
        return repr(value)
    return str(value)
