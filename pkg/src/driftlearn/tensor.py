"""Array helpers: dtype policy, initialization, finiteness checks.

Dense arrays are plain numpy ndarrays. Everything defaults to float64;
float32 can be selected per model through the ``dtype`` argument that the
layer constructors accept.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, TrainingError

DEFAULT_DTYPE = np.float64

_DTYPE_NAMES = {
    "float64": np.float64,
    "float32": np.float32,
}


def resolve_dtype(name) -> np.dtype:
    """Map a config string (or dtype) to a numpy float dtype."""
    if isinstance(name, str):
        try:
            return np.dtype(_DTYPE_NAMES[name])
        except KeyError:
            raise DimensionError(f"unsupported dtype {name!r}; use float64 or float32")
    return np.dtype(name)


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=DEFAULT_DTYPE):
    """Xavier/Glorot uniform draw: U(-limit, limit), limit = sqrt(6/(fan_in+fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype, copy=False)


def check_finite(arr: np.ndarray, what: str, layer_index: int | None = None) -> np.ndarray:
    """Raise TrainingError if ``arr`` holds NaN or infinity."""
    if not np.all(np.isfinite(arr)):
        raise TrainingError(f"non-finite values in {what}", layer_index=layer_index)
    return arr
