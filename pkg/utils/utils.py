from datetime import datetime
import logging
import os
import pytz

from utils import constant


def get_date_str_today():
    return datetime.now(tz=pytz.timezone('America/Los_Angeles')).strftime("%Y-%m-%d")


def get_log_level_from_str(log_level_str):
    if log_level_str == 'debug':
        return logging.DEBUG
    elif log_level_str == 'info':
        return logging.INFO
    elif log_level_str == 'warning':
        return logging.WARNING
    elif log_level_str == 'error':
        return logging.ERROR
    elif log_level_str == 'fatal':
        return logging.FATAL
    else:
        return None


def get_thread_count(default=1):
    """
    Worker cap from the CONSOL_THREADS environment variable.
    """
    value = os.environ.get(constant.THREADS_ENV, '')
    if value.strip() == '':
        return default
    try:
        count = int(value)
    except ValueError:
        logging.error(f'Ignoring non-integer {constant.THREADS_ENV}={value}')
        return default
    return max(1, count)


def parse_grid(grid_str):
    """
    Parse `-10..10` (inclusive, unit step) or a comma list `1,3,5` into floats.
    """
    grid_str = grid_str.strip()
    if '..' in grid_str:
        lo, hi = grid_str.split('..', 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f'empty grid {grid_str}')
        return [float(x) for x in range(lo, hi + 1)]
    values = [float(x) for x in grid_str.split(',') if x.strip() != '']
    if len(values) == 0:
        raise ValueError(f'empty grid {grid_str}')
    return values
