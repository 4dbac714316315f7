"""Least-squares channel estimation over the leaked-tap subspace and
element-wise micro-CSI recovery."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_subcarrier_array
from .exceptions import DeepFadeError, ZeroNoiseWarning
from .ofdm import DEFAULT_NP, PartialDft, build_projector, projector_for

DEFAULT_EPS_FADE = 1e-3


@dataclass(frozen=True, eq=False)
class MicroCsi:
    """Estimate of ``1 + f`` for one chain of one packet."""

    values: np.ndarray
    device_id: str = ""
    packet_index: int = 0
    chain_index: int = 0


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    freq_response: np.ndarray
    tap_coefficients: np.ndarray


def estimate_channel_ls(csi_chain, pdft: PartialDft) -> ChannelEstimate:
    c = check_subcarrier_array(csi_chain, name="csi_chain", max_ndim=1)
    a, *_ = np.linalg.lstsq(pdft.matrix, c, rcond=None)
    return ChannelEstimate(freq_response=pdft.matrix @ a, tap_coefficients=a)


def _projector(pdft):
    if pdft is None:
        return projector_for(DEFAULT_NP)[1]
    return build_projector(pdft)


def micro_csi_array(chains, n_p: int = DEFAULT_NP, eps_fade: float = DEFAULT_EPS_FADE,
                    projector=None):
    """Vectorized extraction over any leading shape.

    Returns ``(values, faded)`` where ``faded`` marks vectors whose channel
    estimate dips below ``eps_fade`` of its own peak. Faded rows still hold
    the raw quotient and should be discarded by the caller.
    """
    c = check_subcarrier_array(chains, name="chains", max_ndim=4)
    p = projector if projector is not None else projector_for(n_p)[1]
    h = c @ p.T
    mag = np.abs(h)
    peak = mag.max(axis=-1, keepdims=True)
    faded = np.any(mag < eps_fade * peak, axis=-1) | (peak[..., 0] == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = c / h
    return values, faded


def extract_micro_csi(m, pdft: PartialDft | None = None,
                      eps_fade: float = DEFAULT_EPS_FADE) -> list[MicroCsi]:
    """Divide each chain by its LS channel estimate; one ``MicroCsi`` per chain."""
    values, faded = micro_csi_array(m.chains, eps_fade=eps_fade, projector=_projector(pdft))
    if faded.any():
        chain = int(np.flatnonzero(faded)[0])
        raise DeepFadeError(
            f"packet {m.packet_index} of {m.device_id!r}: channel estimate fades on chain {chain}",
            chain_index=chain,
        )
    return [MicroCsi(values=v, device_id=m.device_id, packet_index=m.packet_index, chain_index=i)
            for i, v in enumerate(values)]


def estimate_snr(lts_copy1, lts_copy2) -> float:
    """SNR in dB from two received copies of the same training symbol.

    Signal power is the mean squared magnitude over both copies; noise power
    is half the mean squared magnitude of their difference.
    """
    a = np.asarray(lts_copy1, dtype=complex)
    b = np.asarray(lts_copy2, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"copies differ in shape: {a.shape} vs {b.shape}")
    signal = 0.5 * (np.mean(np.abs(a) ** 2) + np.mean(np.abs(b) ** 2))
    noise = np.mean(np.abs(a - b) ** 2) / 2.0
    if noise == 0:
        warnings.warn("training-symbol copies are identical", ZeroNoiseWarning, stacklevel=2)
        return math.inf
    return float(10.0 * np.log10(signal / noise))


class MicroCsiExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping raw CSI arrays ``(..., 52)`` to micro-CSI arrays.

    Parameters
    ----------
    n_p : int
        Leaked taps on each side of the strongest tap.
    eps_fade : float
        Relative floor on the channel estimate; see ``on_fade``.
    on_fade : {"raise", "nan"}
        What to do with vectors whose channel estimate fades.
    """

    def __init__(self, n_p=DEFAULT_NP, eps_fade=DEFAULT_EPS_FADE, on_fade="raise"):
        self.n_p = n_p
        self.eps_fade = eps_fade
        self.on_fade = on_fade

    def fit(self, X=None, y=None):
        if self.on_fade not in ("raise", "nan"):
            raise ValueError(f"on_fade must be 'raise' or 'nan', got {self.on_fade!r}")
        self.pdft_, self.projector_ = projector_for(self.n_p)
        return self

    def transform(self, X):
        check_is_fitted(self, "projector_")
        values, faded = micro_csi_array(X, eps_fade=self.eps_fade, projector=self.projector_)
        if faded.any():
            if self.on_fade == "raise":
                raise DeepFadeError(f"{int(faded.sum())} CSI vector(s) in deep fade")
            values[faded] = np.nan
        return values
