"""KNN open-set matcher over complex fingerprints.

A test fingerprint's authentication distance is the mean of its ``k``
smallest distances to the claimed identity's library; it is accepted when
that distance is at most a threshold calibrated on legitimate data
only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from ._validation import check_subcarrier_array
from .fingerprint import Fingerprint

METRICS = ("manhattan", "euclidean", "chebyshev", "hermitian_angle", "euclidean_angle")


def realify(x) -> np.ndarray:
    """``(..., K)`` complex to ``(..., 2K)`` real as ``[re..., im...]``."""
    x = np.asarray(x, dtype=complex)
    return np.concatenate([x.real, x.imag], axis=-1)


def _values(fps) -> np.ndarray:
    if isinstance(fps, Fingerprint):
        return fps.values[None]
    if isinstance(fps, np.ndarray):
        return np.atleast_2d(fps)
    return np.stack([f.values if isinstance(f, Fingerprint) else np.asarray(f) for f in fps])


def _angle(cos):
    return np.arccos(np.clip(cos, -1.0, 1.0))


def pairwise_distances(a, b, metric: str = "manhattan") -> np.ndarray:
    """Distance matrix between rows of two complex arrays of equal width."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    b = np.atleast_2d(np.asarray(b, dtype=complex))
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"fingerprint lengths differ: {a.shape[-1]} vs {b.shape[-1]}")
    if metric == "manhattan":
        return cdist(realify(a), realify(b), "cityblock")
    if metric == "euclidean":
        return cdist(realify(a), realify(b), "euclidean")
    if metric == "chebyshev":
        return cdist(realify(a), realify(b), "chebyshev")
    if metric in ("hermitian_angle", "euclidean_angle"):
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if np.any(na == 0) or np.any(nb == 0):
            raise ValueError(f"{metric} is undefined for zero-norm fingerprints")
        inner = a.conj() @ b.T  # <a, b> = sum conj(a) b
        num = np.abs(inner) if metric == "hermitian_angle" else inner.real
        return _angle(num / np.outer(na, nb))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def fp_distance(a, b, metric: str = "manhattan") -> float:
    va, vb = _values(a), _values(b)
    d = float(pairwise_distances(va, vb, metric)[0, 0])
    if metric.endswith("angle") and np.array_equal(va, vb):
        return 0.0  # arccos(1 - eps) would give ~1e-8
    return d


def default_k(size: int) -> int:
    return max(1, int(round(math.sqrt(size))))


@dataclass(eq=False)
class FingerprintLibrary:
    identity: str
    fingerprints: list
    k: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fingerprints = list(self.fingerprints)
        if not self.fingerprints:
            raise ValueError("a library needs at least one fingerprint")
        if self.k is None:
            self.k = default_k(len(self.fingerprints))
        if not 1 <= self.k <= len(self.fingerprints):
            raise ValueError(f"k={self.k} outside 1..{len(self.fingerprints)}")

    @property
    def size(self) -> int:
        return len(self.fingerprints)

    def matrix(self) -> np.ndarray:
        return _values(self.fingerprints)


@dataclass(frozen=True)
class AuthDecision:
    distance: float
    threshold: float
    accept: bool
    identity_claim: str
    metric: str


def knn_mean_distance(dist: np.ndarray, k: int) -> np.ndarray:
    """Mean of the ``k`` smallest entries in each row."""
    if k >= dist.shape[1]:
        return dist.mean(axis=1)
    return np.sort(np.partition(dist, k - 1, axis=1)[:, :k], axis=1).mean(axis=1)


def auth_distance(test, lib: FingerprintLibrary, metric: str = "manhattan"):
    d = pairwise_distances(_values(test), lib.matrix(), metric)
    out = knn_mean_distance(d, lib.k)
    return float(out[0]) if isinstance(test, Fingerprint) else out


def calibrate_threshold(legit_scores, target_far: float = 0.0) -> float:
    """Largest-score threshold whose false-alarm rate on ``legit_scores`` is at most ``target_far``.

    Scores equal to the threshold are accepted. ``target_far=0`` yields the
    maximum score.
    """
    s = np.sort(np.asarray(legit_scores, dtype=float))
    if s.size == 0:
        raise ValueError("no legitimate scores to calibrate on")
    if not 0.0 <= target_far < 1.0:
        raise ValueError(f"target_far must lie in [0, 1), got {target_far}")
    allowed = int(math.floor(target_far * s.size + 1e-9))
    return float(s[s.size - 1 - allowed])


def authenticate(test, lib: FingerprintLibrary, threshold: float,
                 metric: str = "manhattan") -> AuthDecision:
    d = auth_distance(test, lib, metric)
    d = float(np.atleast_1d(d)[0])
    return AuthDecision(distance=d, threshold=float(threshold), accept=bool(d <= threshold),
                        identity_claim=lib.identity, metric=metric)


class KnnAuthenticator(OutlierMixin, BaseEstimator):
    """One-identity open-set authenticator with an sklearn outlier-detector API.

    ``fit`` takes the enrolled fingerprints of a single identity, splits off
    ``calibration_fraction`` of them to calibrate the acceptance threshold
    against the rest at ``target_far``, then keeps the full set as the
    library. ``predict`` returns +1 (accept) / -1 (reject) and
    ``decision_function`` returns ``threshold - distance``, so negative
    values are rejections. ``auth_distance`` gives the raw distances.

    Parameters
    ----------
    metric : str
        One of ``METRICS``.
    k : int or None
        Neighbours to average; ``None`` means ``round(sqrt(S))``.
    target_far : float
        False-alarm rate allowed on the calibration split.
    calibration_fraction : float
        Share of enrolled fingerprints held out for calibration. With 0 the
        threshold is calibrated leave-one-out on the full library.
    split : {"tail", "random"}
        ``"tail"`` holds out the last enrolled fingerprints (collected
        later, so under channel states the rest has not seen); ``"random"``
        draws them with ``random_state``.
    random_state : int, RandomState or None
        Controls the random calibration split.
    """

    def __init__(self, metric="manhattan", k=None, target_far=0.0,
                 calibration_fraction=0.2, split="tail", random_state=0, identity=""):
        self.metric = metric
        self.k = k
        self.target_far = target_far
        self.calibration_fraction = calibration_fraction
        self.split = split
        self.random_state = random_state
        self.identity = identity

    def fit(self, X, y=None):
        X = check_subcarrier_array(_values(X), name="X", min_ndim=2, max_ndim=2)
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        n = len(X)
        n_cal = int(round(self.calibration_fraction * n))
        if n_cal > 0 and n - n_cal >= 1:
            if self.split == "tail":
                perm = np.r_[n - n_cal:n, 0:n - n_cal]
            elif self.split == "random":
                perm = check_random_state(self.random_state).permutation(n)
            else:
                raise ValueError(f"split must be 'tail' or 'random', got {self.split!r}")
            cal, ref = X[perm[:n_cal]], X[perm[n_cal:]]
            k_ref = min(self.k, len(ref)) if self.k is not None else default_k(len(ref))
            scores = knn_mean_distance(pairwise_distances(cal, ref, self.metric), k_ref)
        elif n >= 2:
            d = pairwise_distances(X, X, self.metric)
            np.fill_diagonal(d, np.inf)
            k_loo = min(self.k or default_k(n - 1), n - 1)
            scores = knn_mean_distance(d, k_loo)
        else:
            scores = np.zeros(1)
        self.calibration_scores_ = scores
        self.threshold_ = calibrate_threshold(scores, self.target_far)
        k = min(self.k, n) if self.k is not None else None
        self.library_ = FingerprintLibrary(self.identity, list(X), k=k)
        self.library_matrix_ = X
        return self

    def auth_distance(self, X):
        """Authentication distance of each row (larger means more anomalous)."""
        check_is_fitted(self, "library_")
        X = check_subcarrier_array(_values(X), name="X", min_ndim=2, max_ndim=2)
        return knn_mean_distance(pairwise_distances(X, self.library_matrix_, self.metric),
                                 self.library_.k)

    def score_samples(self, X):
        # sklearn convention: higher is more normal
        return -self.auth_distance(X)

    def decision_function(self, X):
        check_is_fitted(self, "threshold_")
        return self.threshold_ - self.auth_distance(X)

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def authenticate(self, fp) -> AuthDecision:
        check_is_fitted(self, "library_")
        return authenticate(fp, self.library_, self.threshold_, self.metric)
