import numpy as np
from sklearn.utils.validation import check_array, check_X_y


def check_xy(X, y):
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    return X, y.astype(np.float64)


def check_x(X, n_features=None):
    X = check_array(X, dtype=np.float64)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_offset(offset, n):
    if offset is None:
        return None
    offset = np.asarray(offset, dtype=np.float64).ravel()
    if offset.shape[0] != n:
        raise ValueError(f"offset has length {offset.shape[0]}, expected {n}")
    return offset
