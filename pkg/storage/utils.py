import json
import logging
import os
import tempfile

import pandas as pd


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return parent


def write_text_atomic(text, path):
    """
    Write to a temp file in the target directory, then rename over `path`.
    """
    parent = _ensure_parent(path)
    fd, tmp_path = tempfile.mkstemp(dir=parent, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    return path


def write_json_atomic(obj, path):
    write_text_atomic(json.dumps(obj, indent=2, sort_keys=True) + '\n', path)
    logging.info(f'JSON written to {path}')
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_csv_atomic(df, path):
    # Default float formatting is repr, i.e. shortest round-trip decimal.
    write_text_atomic(df.to_csv(index=False, lineterminator='\n'), path)
    logging.info(f'{len(df)} rows written to {path}')
    return path


def read_csv(path):
    return pd.read_csv(path, float_precision='round_trip')
