"""Input validation helpers in the spirit of ``sklearn.utils.check_array``."""
import numpy as np

from .ofdm import N_SUBCARRIERS


def check_subcarrier_array(x, *, name="X", min_ndim=1, max_ndim=3, allow_real=True):
    """Return ``x`` as a finite complex array whose last axis has 52 entries."""
    arr = np.asarray(x)
    if not allow_real and not np.iscomplexobj(arr):
        raise TypeError(f"{name} must be complex-valued")
    arr = arr.astype(complex, copy=False)
    if not min_ndim <= arr.ndim <= max_ndim:
        raise ValueError(f"{name} must have {min_ndim}..{max_ndim} dimensions, got shape {arr.shape}")
    if arr.shape[-1] != N_SUBCARRIERS:
        raise ValueError(f"{name} must have {N_SUBCARRIERS} subcarriers on its last axis, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_positive_int(value, name):
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
