"""Fingerprint construction from a group of micro-CSI vectors.

Pipeline per group: drop whole vectors whose gradient variance is too large
(clipping-type corruption), drop per-subcarrier values with a large Z-score
(burst-noise corruption), average what is left, and Z-score normalize the
result across subcarriers.

Deviations are complex: ``sigma = sqrt(mean |x - mean(x)|**2)``. The same
definition is used for filtering and for the final normalization, so every
normalized fingerprint has zero complex mean and unit deviation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive_int, check_subcarrier_array
from .exceptions import (
    ConstantFingerprintError,
    EmptyBatchError,
    EmptySubcarrierWarning,
    InsufficientDataError,
    NotConvergedWarning,
)
from .extract import MicroCsi

DEFAULT_OMEGA1 = 2e-3
DEFAULT_OMEGA2 = 1.0
EMPTY_SUBCARRIER = "empty_subcarrier"
_FLAT_RTOL = 1e-13
# relative spread below which a denoised vector carries nothing but rounding
_CONST_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Fingerprint:
    values: np.ndarray
    n_csi_used: int = 1
    n_kept: int = 1
    device_claim: str = ""
    normalized: bool = True
    flags: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True, eq=False)
class FingerprintBatchStats:
    mean: np.ndarray
    deviation: np.ndarray
    kept_counts: np.ndarray


def _as_batch(batch):
    """Stack a list of ``MicroCsi`` (or anything array-like) to ``(M, 52)``."""
    if isinstance(batch, np.ndarray):
        return check_subcarrier_array(batch, name="batch", min_ndim=2, max_ndim=2)
    rows = [b.values if isinstance(b, MicroCsi) else b for b in batch]
    if not rows:
        raise EmptyBatchError("empty micro-CSI batch")
    return check_subcarrier_array(np.stack(rows), name="batch", min_ndim=2, max_ndim=2)


def gradient_variance(mc):
    """Variance of first differences across adjacent subcarriers.

    The step across the DC gap (-1 to +1) counts as an ordinary difference.
    Works on a single vector or along the last axis of a stack.
    """
    x = np.asarray(mc.values if isinstance(mc, MicroCsi) else mc, dtype=complex)
    if x.shape[-1] < 2:
        raise ValueError("need at least two subcarriers")
    g = np.diff(x, axis=-1)
    var = np.mean(np.abs(g - g.mean(axis=-1, keepdims=True)) ** 2, axis=-1)
    return float(var) if var.ndim == 0 else var


def filter_case2(batch, omega1: float = DEFAULT_OMEGA1):
    """Keep members whose gradient variance is strictly below ``omega1``."""
    if omega1 <= 0:
        raise ValueError("omega1 must be positive")
    items = list(batch)
    if not items:
        raise EmptyBatchError("empty micro-CSI batch")
    keep = gradient_variance(_as_batch(items)) < omega1
    if not keep.any():
        raise EmptyBatchError(f"all {len(items)} micro-CSI vectors exceed omega1={omega1}")
    return [m for m, k in zip(items, keep) if k]


def subcarrier_stats(batch) -> FingerprintBatchStats:
    x = _as_batch(batch)
    u = x.mean(axis=0)
    sigma = np.sqrt(np.mean(np.abs(x - u) ** 2, axis=0))
    return FingerprintBatchStats(mean=u, deviation=sigma,
                                 kept_counts=np.full(x.shape[1], x.shape[0]))


def _construct(x, valid, omega1, omega2, outlier_elimination, normalize):
    """Vectorized core over groups: ``x`` is ``(G, M, K)``, ``valid`` is ``(G, M)``.

    Returns a dict of per-group arrays; groups that fail carry flags in
    ``empty`` / ``constant`` instead of raising.
    """
    keep = valid.copy()
    if outlier_elimination:
        keep &= gradient_variance(np.where(valid[..., None], x, 0)) < omega1
    n_kept = keep.sum(axis=1)
    empty = n_kept == 0
    w = keep[..., None]
    cnt = np.maximum(n_kept, 1)[:, None]
    u = np.where(w, x, 0).sum(axis=1) / cnt
    empty_sub = np.zeros(u.shape, dtype=bool)
    if outlier_elimination:
        dev = np.abs(x - u[:, None, :])
        sigma = np.sqrt(np.where(w, dev ** 2, 0).sum(axis=1) / cnt)
        # spread at rounding level counts as none (a tiled vector's mean is not bit-exact)
        flat = sigma <= _FLAT_RTOL * np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = dev / sigma[:, None, :]
        inlier = w & ((z < omega2) | flat[:, None, :])
        kcnt = inlier.sum(axis=1)
        empty_sub = (kcnt == 0) & ~empty[:, None]
        denoised = np.where(inlier, x, 0).sum(axis=1) / np.maximum(kcnt, 1)
        denoised = np.where(empty_sub, u, denoised)
    else:
        denoised = u
    constant = np.zeros(len(x), dtype=bool)
    values = denoised
    if normalize:
        mu = denoised.mean(axis=1, keepdims=True)
        sd = np.sqrt(np.mean(np.abs(denoised - mu) ** 2, axis=1, keepdims=True))
        constant = (sd[:, 0] <= _CONST_RTOL * np.abs(mu[:, 0])) & ~empty
        with np.errstate(divide="ignore", invalid="ignore"):
            values = (denoised - mu) / sd
            # second pass removes the rounding left by a large mean
            values = values - values.mean(axis=1, keepdims=True)
            values = values / np.sqrt(np.mean(np.abs(values) ** 2, axis=1, keepdims=True))
    return {"values": values, "n_kept": n_kept, "empty": empty,
            "constant": constant, "empty_sub": empty_sub.any(axis=1)}


def construct_fingerprint(batch, omega1: float = DEFAULT_OMEGA1, omega2: float = DEFAULT_OMEGA2,
                          *, outlier_elimination: bool = True, normalize: bool = True,
                          n_csi: int | None = None, device_claim: str = "") -> Fingerprint:
    """Build one fingerprint from a pooled group of micro-CSI vectors.

    ``batch`` holds ``N_rx * N_csi`` vectors (all chains of all packets).
    With ``outlier_elimination=False`` both filters are skipped and the
    group is simply averaged; with ``normalize=False`` the averaged vector
    is returned as is.
    """
    items = batch if isinstance(batch, np.ndarray) else list(batch)
    x = _as_batch(items)
    tagged = [m for m in items if isinstance(m, MicroCsi)] if isinstance(items, list) else []
    if n_csi is None:
        n_csi = len({m.packet_index for m in tagged}) if tagged else len(x)
    if not device_claim and tagged:
        claims = {m.device_id for m in tagged}
        device_claim = claims.pop() if len(claims) == 1 else ""
    res = _construct(x[None], np.ones((1, len(x)), dtype=bool), omega1, omega2,
                     outlier_elimination, normalize)
    if res["empty"][0]:
        raise EmptyBatchError(f"all {len(x)} micro-CSI vectors exceed omega1={omega1}")
    if res["constant"][0]:
        raise ConstantFingerprintError("denoised fingerprint is constant across subcarriers")
    flags = frozenset()
    if res["empty_sub"][0]:
        warnings.warn("Z-score filter emptied a subcarrier; used the unfiltered mean",
                      EmptySubcarrierWarning, stacklevel=2)
        flags = frozenset({EMPTY_SUBCARRIER})
    return Fingerprint(values=res["values"][0], n_csi_used=int(n_csi), n_kept=int(res["n_kept"][0]),
                       device_claim=device_claim, normalized=normalize, flags=flags)


def fingerprints_from_stream(micro, n_csi: int, valid=None, *, omega1: float = DEFAULT_OMEGA1,
                             omega2: float = DEFAULT_OMEGA2, outlier_elimination: bool = True,
                             normalize: bool = True, device_claim: str = "") -> list[Fingerprint]:
    """One fingerprint per consecutive group of ``n_csi`` packets.

    ``micro`` is ``(n_packets, n_rx, 52)``; ``valid`` optionally masks
    packet/chain entries (e.g. deep-faded ones). A trailing partial group is
    dropped. Groups that end up empty or constant are skipped with a warning.
    """
    n_csi = check_positive_int(n_csi, "n_csi")
    micro = check_subcarrier_array(np.where(np.isfinite(micro), micro, 0), name="micro",
                                   min_ndim=2, max_ndim=3)
    if micro.ndim == 2:
        micro = micro[:, None, :]
    n_packets, n_rx, k = micro.shape
    if valid is None:
        valid = np.ones((n_packets, n_rx), dtype=bool)
    valid = np.broadcast_to(np.asarray(valid, dtype=bool).reshape(n_packets, -1), (n_packets, n_rx))
    n_groups = n_packets // n_csi
    if n_groups == 0:
        raise InsufficientDataError(f"{n_packets} measurements cannot fill a group of {n_csi}")
    used = n_groups * n_csi
    x = micro[:used].reshape(n_groups, n_csi * n_rx, k)
    v = valid[:used].reshape(n_groups, n_csi * n_rx)
    res = _construct(x, v, omega1, omega2, outlier_elimination, normalize)
    bad = res["empty"] | res["constant"]
    if bad.any():
        warnings.warn(f"skipped {int(bad.sum())} of {n_groups} groups (empty after filtering or constant)",
                      stacklevel=2)
    if res["empty_sub"][~bad].any():
        warnings.warn(f"{int(res['empty_sub'][~bad].sum())} fingerprints used the unfiltered mean "
                      "on at least one subcarrier", EmptySubcarrierWarning, stacklevel=2)
    out = []
    for g in np.flatnonzero(~bad):
        flags = frozenset({EMPTY_SUBCARRIER}) if res["empty_sub"][g] else frozenset()
        out.append(Fingerprint(values=res["values"][g], n_csi_used=n_csi, n_kept=int(res["n_kept"][g]),
                               device_claim=device_claim, normalized=normalize, flags=flags))
    return out


def relative_change(new, old) -> float:
    return float(np.linalg.norm(new - old) / np.linalg.norm(old))


def select_n_csi(stream, rel_err_threshold: float = 0.1, *, omega1: float = DEFAULT_OMEGA1,
                 omega2: float = DEFAULT_OMEGA2, step: int = 2) -> int:
    """Smallest group size at which the fingerprint estimate stops moving.

    Group sizes 1, 3, 5, ... are tried in turn on the leading packets of
    ``stream`` (one entry per packet: its per-chain micro-CSI). The first size
    whose fingerprint differs from the previous size's by a relative L2 error
    below ``rel_err_threshold`` is returned. Sizes whose whole batch is
    rejected by the gradient filter produce no estimate and are stepped over.
    If the stream runs out first, the largest size tried is returned with a
    ``NotConvergedWarning``.
    """
    packets = [np.atleast_2d(p.values if isinstance(p, MicroCsi) else
                             np.stack([m.values for m in p]) if not isinstance(p, np.ndarray) else p)
               for p in stream]
    if not packets:
        raise InsufficientDataError("empty measurement stream")
    prev = None
    n = 1
    last = None
    while n <= len(packets):
        last = n
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmptySubcarrierWarning)
                fp = construct_fingerprint(np.concatenate(packets[:n]), omega1, omega2).values
        except (EmptyBatchError, ConstantFingerprintError):
            n += step
            continue
        if prev is not None and relative_change(fp, prev) < rel_err_threshold:
            return n
        prev = fp
        n += step
    warnings.warn(f"fingerprint did not settle within {len(packets)} measurements",
                  NotConvergedWarning, stacklevel=2)
    return last


class FingerprintBuilder(TransformerMixin, BaseEstimator):
    """Transformer from a micro-CSI stream to fingerprints.

    ``transform`` takes ``(n_packets, n_rx, 52)`` (or ``(n_packets, 52)`` for a
    single chain) and returns ``(S, 52)`` normalized fingerprints, one per
    consecutive group of ``n_csi`` packets. NaN rows, as produced by
    ``MicroCsiExtractor(on_fade="nan")``, are excluded from their group.
    """

    def __init__(self, n_csi=20, omega1=DEFAULT_OMEGA1, omega2=DEFAULT_OMEGA2,
                 outlier_elimination=True, normalize=True):
        self.n_csi = n_csi
        self.omega1 = omega1
        self.omega2 = omega2
        self.outlier_elimination = outlier_elimination
        self.normalize = normalize

    def fit(self, X=None, y=None):
        check_positive_int(self.n_csi, "n_csi")
        if self.omega1 <= 0 or self.omega2 <= 0:
            raise ValueError("omega1 and omega2 must be positive")
        self.n_features_in_ = 52
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=complex)
        valid = np.all(np.isfinite(X), axis=-1)
        fps = fingerprints_from_stream(X, self.n_csi, valid, omega1=self.omega1, omega2=self.omega2,
                                       outlier_elimination=self.outlier_elimination,
                                       normalize=self.normalize)
        if not fps:
            return np.empty((0, X.shape[-1]), dtype=complex)
        return np.stack([f.values for f in fps])
