import os

import numpy as np
import pandas as pd

from datasets.generators import Dataset
from storage import utils as storage
from utils.errors import ConfigError


def meta_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return f'{root}.meta.json'


def to_frame(ds):
    columns = {f'x{i + 1}': ds.X[:, i] for i in range(ds.X.shape[1])}
    columns.update({f'y{i + 1}': ds.Y[:, i] for i in range(ds.Y.shape[1])})
    return pd.DataFrame(columns)


def save_dataset(ds, csv_path):
    storage.write_csv_atomic(to_frame(ds), csv_path)
    storage.write_json_atomic(ds.meta, meta_path(csv_path))
    return csv_path


def load_dataset(csv_path):
    if not os.path.isfile(csv_path):
        raise ConfigError(f'dataset file not found: {csv_path}')
    df = storage.read_csv(csv_path)
    x_cols = [c for c in df.columns if c.startswith('x')]
    y_cols = [c for c in df.columns if c.startswith('y')]
    if len(x_cols) == 0 or len(y_cols) == 0 or len(x_cols) + len(y_cols) != len(df.columns):
        raise ConfigError(f'{csv_path}: expected columns x1..xn,y1..ym, got {list(df.columns)}')
    meta = storage.read_json(meta_path(csv_path)) if os.path.isfile(meta_path(csv_path)) else {}
    X = df[x_cols].to_numpy(dtype=np.float64)
    Y = df[y_cols].to_numpy(dtype=np.float64)
    return Dataset(X, Y, meta)
