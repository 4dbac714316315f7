"""802.11 legacy OFDM grid, leaked-tap index sets and the LS projector.

All vectors over subcarriers use ascending signed order ``-26..-1, 1..26``.
Frequency and tap indices are reduced modulo the DFT length before they
enter the exponent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .exceptions import IllConditionedError

N_FFT = 64
N_SUBCARRIERS = 52
SAMPLE_PERIOD = 50e-9
DEFAULT_NP = 8

SUBCARRIERS = np.concatenate([np.arange(-26, 0), np.arange(1, 27)])
SUBCARRIERS.setflags(write=False)

# 802.11a/g L-LTF BPSK values on subcarriers -26..26, DC removed
LEGACY_LTF = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1,
     1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=float,
)
LEGACY_LTF.setflags(write=False)


@dataclass(frozen=True)
class OfdmGrid:
    n_fft: int = N_FFT
    subcarriers: tuple = field(default_factory=lambda: tuple(int(k) for k in SUBCARRIERS))
    sample_period: float = SAMPLE_PERIOD

    def __post_init__(self):
        if self.n_fft != N_FFT:
            raise ValueError(f"only the {N_FFT}-point legacy grid is supported, got {self.n_fft}")
        k = self.subcarriers
        if len(k) != N_SUBCARRIERS or 0 in k or set(k) != {-x for x in k}:
            raise ValueError("subcarrier set must be 52 indices symmetric about 0 without DC")
        if list(k) != sorted(k):
            raise ValueError("subcarriers must be in ascending signed order")

    @property
    def n_subcarriers(self) -> int:
        return len(self.subcarriers)


DEFAULT_GRID = OfdmGrid()


@dataclass(frozen=True)
class TapSet:
    n_p: int
    indices: tuple

    def __len__(self):
        return len(self.indices)


def tap_index_set(n_p: int = DEFAULT_NP, n_fft: int = N_FFT) -> TapSet:
    """Residues of ``-n_p..n_p`` modulo ``n_fft``, in that order.

    >>> tap_index_set(2).indices
    (62, 63, 0, 1, 2)
    """
    if n_fft != N_FFT:
        raise ValueError(f"n_fft must be {N_FFT}, got {n_fft}")
    n_p = int(n_p)
    if n_p < 0:
        raise ValueError(f"n_p must be non-negative, got {n_p}")
    if 2 * n_p + 1 > N_SUBCARRIERS:
        raise ValueError(
            f"n_p={n_p} gives {2 * n_p + 1} taps for {N_SUBCARRIERS} subcarriers; "
            "the LS system would be underdetermined"
        )
    return TapSet(n_p=n_p, indices=tuple((n % n_fft) for n in range(-n_p, n_p + 1)))


@dataclass(frozen=True, eq=False)
class PartialDft:
    matrix: np.ndarray
    grid: OfdmGrid
    taps: TapSet

    @property
    def shape(self):
        return self.matrix.shape


def dft_submatrix(rows, cols, n_fft: int = N_FFT) -> np.ndarray:
    """Rows/columns of the unitary ``n_fft``-point DFT matrix."""
    k = np.mod(np.asarray(rows, dtype=np.int64), n_fft)[:, None]
    n = np.mod(np.asarray(cols, dtype=np.int64), n_fft)[None, :]
    # integer product mod N keeps the phase argument exact for large indices
    return np.exp(-2j * np.pi * np.mod(k * n, n_fft) / n_fft) / np.sqrt(n_fft)


def build_partial_dft(grid: OfdmGrid = DEFAULT_GRID, taps: TapSet | None = None) -> PartialDft:
    if taps is None:
        taps = tap_index_set(DEFAULT_NP, grid.n_fft)
    m = dft_submatrix(grid.subcarriers, taps.indices, grid.n_fft)
    m.setflags(write=False)
    return PartialDft(matrix=m, grid=grid, taps=taps)


def build_projector(pdft: PartialDft, rcond: float = 1e-10) -> np.ndarray:
    """Orthogonal projector onto the column space of the partial DFT.

    Equivalent to ``F (F^H F)^{-1} F^H`` but computed from a thin QR factor,
    so the normal equations are never formed.
    """
    q, r = scipy.linalg.qr(pdft.matrix, mode="economic")
    d = np.abs(np.diag(r))
    if d.size and d.min() <= rcond * d.max():
        raise IllConditionedError(
            f"tap set with n_p={pdft.taps.n_p} is rank deficient on this grid"
        )
    p = q @ q.conj().T
    # exact Hermitian symmetry; QR leaves ~1e-16 asymmetry
    p = 0.5 * (p + p.conj().T)
    p.setflags(write=False)
    return p


@lru_cache(maxsize=32)
def projector_for(n_p: int = DEFAULT_NP) -> tuple[PartialDft, np.ndarray]:
    """Cached ``(partial DFT, projector)`` pair for the default grid."""
    pdft = build_partial_dft(DEFAULT_GRID, tap_index_set(n_p))
    return pdft, build_projector(pdft)
