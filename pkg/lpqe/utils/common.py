import json
import os
import sys
from datetime import datetime
from typing import Any, Dict, Iterable

import click
import psutil
import yaml

from lpqe.utils.states import Result

DEBUG = {'enabled': False}


def timestamp():
    """Return current time"""
    return datetime.now().strftime('%Y-%m-%d %H:%M:%S.%f')[:-3]


def log_color(msg, nl=True, fg=None, err=False):
    """Echo colored message to console prepended by timestamp"""
    click.secho('[{0!s}]  {1!s}'.format(timestamp(), msg), nl=nl, fg=fg, err=err)


def log_error(msg, nl=True):
    """Echo error message to console prepended by timestamp"""
    log_color(msg, nl=nl, fg='red', err=True)


def log_info(msg, nl=True):
    """Echo informational message to console prepended by timestamp"""
    log_color(msg, nl=nl)


def log_ok(msg, nl=True):
    """Echo positive result message to console prepended by timestamp"""
    log_color(msg, nl=nl, fg='green')


def log_warn(msg, nl=True):
    """Echo warning message to console prepended by timestamp"""
    log_color(msg, nl=nl, fg='yellow', err=True)


def log_debug(msg, nl=True):
    """Echo debug message to console if debug is enabled"""
    if DEBUG['enabled']:
        log_color(msg, nl=nl, fg='blue')


def set_debug(enabled: bool):
    """Switch debug logging"""
    DEBUG['enabled'] = bool(enabled)


def ensure_dir(path):
    """Create directory if it does not exist yet"""
    try:
        os.makedirs(path)
    except FileExistsError:
        # directory already exists
        pass


def dump_dict_to_file(out_file, data):
    """Dump dict to a YAML file"""
    # noinspection PyBroadException
    try:
        with open(out_file, 'w') as dump_f:
            yaml.safe_dump(data, dump_f, default_flow_style=False, sort_keys=True)
    except IOError as dump_err:
        log_error("I/O error({}): {}".format(dump_err.errno, dump_err.strerror))
        return False
    except Exception:  # handle other exceptions such as representer errors
        log_error("Unexpected error: {}".format(sys.exc_info()[0]))
        return False
    return True


def load_dict_from_file(in_file) -> Result:
    """Load dict from a YAML file"""
    try:
        with open(in_file, 'r') as load_f:
            data = yaml.safe_load(load_f)
    except IOError as err:
        return Result(False, "{0} - I/O error({1}): {2}".format(in_file, err.errno, err.strerror))
    except yaml.YAMLError as err:
        msg = "{0} - error while loading YAML: {1!s}".format(in_file, err)
        if hasattr(err, 'problem_mark'):
            mark = err.problem_mark
            msg += " (position {}:{})".format(mark.line + 1, mark.column + 1)
        return Result(False, msg)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        return Result(False, "{0} - top level must be a mapping".format(in_file))
    return Result(True, data)


def dump_to_file(out_file, data):
    """Dump data to a file"""
    # noinspection PyBroadException
    try:
        with open(out_file, 'w') as out_f:
            out_f.write(data)
    except IOError as err:
        log_error("{0} - I/O error({1}): {2}".format(out_file, err.errno, err.strerror))
        return False
    except Exception as err:  # handle other exceptions such as attribute errors
        log_error("{0} - Unexpected error: {1} ({2})".format(out_file, sys.exc_info()[0], err))
        return False
    return True


def json_line(record: Dict[str, Any]) -> str:
    """Serialise a record as one canonical JSON line"""
    return json.dumps(record, sort_keys=True, separators=(',', ':'))


def dump_json_lines(out_file, records: Iterable[Dict[str, Any]], append=False):
    """Dump records to a JSON lines file"""
    try:
        with open(out_file, 'a' if append else 'w') as out_f:
            for record in records:
                out_f.write(json_line(record) + '\n')
    except IOError as err:
        log_error("{0} - I/O error({1}): {2}".format(out_file, err.errno, err.strerror))
        return False
    return True


def memory_rss_mb():
    """Return resident set size of the current process in MiB"""
    return psutil.Process(os.getpid()).memory_info().rss / (1024.0 * 1024.0)
