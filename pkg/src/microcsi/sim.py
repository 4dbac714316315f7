"""Frequency-domain CSI synthesizer with known hardware distortions.

Measurements follow ``c = h * (1 + f) + z`` per receive chain, where ``h`` is a
single-path line-of-sight channel leaked over a few taps by the pulse-shaping
filter, ``f`` the device's micro-scale distortion and ``z`` white noise.
Every random draw is keyed on explicit integer seeds so that batch and
per-packet generation give bit-identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ofdm import (
    DEFAULT_GRID,
    LEGACY_LTF,
    N_FFT,
    SUBCARRIERS,
    OfdmGrid,
    dft_submatrix,
)

SPEED_OF_LIGHT = 3e8
PULSE_ROLLOFF = 0.5
PULSE_SUPPORT = 8
MAX_DISTORTION = 0.2

CASE1 = "case1"
CASE2 = "case2"
ABNORMAL_KINDS = (CASE1, CASE2)


@dataclass(frozen=True, eq=False)
class DeviceProfile:
    device_id: str
    distortion: np.ndarray
    seed: int
    intensity: float

    def __post_init__(self):
        self.distortion.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    taps: np.ndarray
    offsets: np.ndarray
    freq_response: np.ndarray
    delay: float
    excess_taps: dict = field(default_factory=dict)

    @property
    def center_tap(self):
        return self.taps[self.offsets == 0][0]


@dataclass(eq=False)
class CsiMeasurement:
    device_id: str
    packet_index: int
    chains: np.ndarray
    snr_db: float | None = None
    flags: frozenset = frozenset()

    def __post_init__(self):
        self.chains = np.atleast_2d(np.asarray(self.chains, dtype=complex))
        if self.chains.ndim != 2 or self.chains.shape[1] != len(SUBCARRIERS):
            raise ValueError(f"chains must have shape (n_rx, 52), got {self.chains.shape}")
        if not 1 <= self.chains.shape[0] <= 4:
            raise ValueError(f"1 <= n_rx <= 4 required, got {self.chains.shape[0]}")
        self.flags = frozenset(self.flags)

    @property
    def n_rx(self) -> int:
        return self.chains.shape[0]


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def make_device_profile(seed: int, intensity: float = 0.05, device_id: str | None = None,
                        smooth_window: int = 5, max_attempts: int = 1000) -> DeviceProfile:
    """Draw a smooth random distortion over the 52 subcarriers with RMS ``intensity``.

    White complex Gaussian values are moving-averaged across neighbouring
    subcarriers, then rescaled. Draws whose peak reaches the micro-scale
    bound are redrawn from the next sub-stream of the same seed.
    """
    if not 0.0 < intensity < MAX_DISTORTION:
        raise ValueError(f"intensity must lie in (0, {MAX_DISTORTION}), got {intensity}")
    n = len(SUBCARRIERS)
    kernel = np.ones(smooth_window) / smooth_window
    for attempt in range(max_attempts):
        rng = _rng(seed, attempt)
        white = rng.standard_normal(n + smooth_window - 1) + 1j * rng.standard_normal(n + smooth_window - 1)
        f = np.convolve(white, kernel, mode="valid")
        f *= intensity / np.sqrt(np.mean(np.abs(f) ** 2))
        if np.max(np.abs(f)) < MAX_DISTORTION:
            break
    else:
        raise ValueError(f"could not draw a profile with peak below {MAX_DISTORTION} at intensity {intensity}")
    return DeviceProfile(device_id=device_id if device_id is not None else f"dev{seed}",
                         distortion=f, seed=seed, intensity=float(intensity))


def blend_profiles(base: DeviceProfile, own: DeviceProfile, similarity: float,
                   intensity: float | None = None, device_id: str | None = None) -> DeviceProfile:
    """Mix a shared (model-level) distortion with a device's own one.

    ``similarity`` is the share of distortion power taken from ``base``; the
    result is rescaled to ``intensity`` (default: ``own.intensity``).
    """
    if not 0.0 <= similarity <= 1.0:
        raise ValueError("similarity must lie in [0, 1]")
    intensity = own.intensity if intensity is None else float(intensity)
    f = (np.sqrt(similarity) * base.distortion / base.intensity
         + np.sqrt(1.0 - similarity) * own.distortion / own.intensity)
    f = f * intensity / np.sqrt(np.mean(np.abs(f) ** 2))
    return DeviceProfile(device_id=device_id or own.device_id, distortion=f, seed=own.seed,
                         intensity=intensity)


def scale_distortion(profile: DeviceProfile, gain: float) -> DeviceProfile:
    """The same device with its distortion scaled by ``gain`` (intensity drift)."""
    if gain == 1.0:
        return profile
    return DeviceProfile(device_id=profile.device_id, distortion=profile.distortion * gain,
                         seed=profile.seed, intensity=profile.intensity * abs(gain))


def pulse_shape(t, rolloff: float = PULSE_ROLLOFF) -> np.ndarray:
    """Raised-cosine pulse sampled at ``t`` (in sample periods)."""
    t = np.asarray(t, dtype=float)
    denom = 1.0 - (2.0 * rolloff * t) ** 2
    singular = np.isclose(denom, 0.0)
    safe = np.where(singular, 1.0, denom)
    p = np.sinc(t) * np.cos(np.pi * rolloff * t) / safe
    limit = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff))
    return np.where(singular, limit, p)


def make_los_channel(seed: int, n_p_sim: int = 8, grid: OfdmGrid = DEFAULT_GRID,
                     delay: float | None = None, gain: complex | None = None,
                     excess_taps: dict | None = None) -> ChannelRealization:
    """Single line-of-sight path leaked over taps ``-n_p_sim..n_p_sim``.

    Tap ``n`` carries ``gain * p(n - delay)`` with ``p`` the raised-cosine
    pulse, truncated beyond ``PULSE_SUPPORT`` samples. ``freq_response`` is the
    non-normalized DFT of the taps on the used subcarriers, so a unit tap at
    offset 0 gives a flat response of 1. ``excess_taps`` maps offsets to extra
    complex taps (e.g. a late reflection outside the estimator's tap set).
    """
    if n_p_sim < 0:
        raise ValueError("n_p_sim must be non-negative")
    rng = _rng(seed)
    if delay is None:
        delay = -0.5
        while delay == -0.5:  # exact half-sample delay ties the two central taps
            delay = float(rng.uniform(-0.5, 0.5))
    if gain is None:
        gain = rng.uniform(0.5, 2.0) * np.exp(2j * np.pi * rng.uniform())
    offsets = np.arange(-n_p_sim, n_p_sim + 1)
    taps = gain * pulse_shape(offsets - delay)
    taps = np.where(np.abs(offsets) <= PULSE_SUPPORT, taps, 0.0).astype(complex)
    excess_taps = dict(excess_taps or {})
    all_offsets, all_taps = offsets, taps
    if excess_taps:
        extra = np.array(sorted(excess_taps))
        if np.any(np.abs(extra) <= n_p_sim):
            raise ValueError("excess taps must lie outside the leaked tap support")
        all_offsets = np.concatenate([offsets, extra])
        all_taps = np.concatenate([taps, [excess_taps[o] for o in extra]])
    h = np.sqrt(grid.n_fft) * dft_submatrix(grid.subcarriers, all_offsets, grid.n_fft) @ all_taps
    return ChannelRealization(taps=taps, offsets=offsets, freq_response=h,
                              delay=float(delay), excess_taps=excess_taps)


def synthesize_csi(profile: DeviceProfile, channels, snr_db: float = 34.0, n_packets: int = 1,
                   seed: int = 0, start_index: int = 0, doppler_hz: float = 0.0,
                   packet_interval: float = 50e-6) -> list[CsiMeasurement]:
    """Noisy CSI for ``n_packets`` packets, one chain per channel.

    Noise variance is set per chain from the mean power of the distorted
    channel. ``doppler_hz`` rotates each packet by a common phase drifting
    across packets; the channel itself is held fixed within a measurement.
    Packet ``i`` draws its noise from the ``(seed, start_index + i)`` stream.
    """
    if isinstance(channels, ChannelRealization):
        channels = [channels]
    if not channels:
        raise ValueError("at least one channel (receive chain) is required")
    if n_packets < 1:
        raise ValueError("n_packets must be >= 1")
    snr_db = float(snr_db)
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError(f"SNR must be finite or +inf, got {snr_db}")
    clean = np.stack([ch.freq_response for ch in channels]) * (1.0 + profile.distortion)
    noise_std = None
    if snr_db != math.inf:
        power = np.mean(np.abs(clean) ** 2, axis=1, keepdims=True)
        noise_std = np.sqrt(power / 10.0 ** (snr_db / 10.0) / 2.0)
    out = []
    for i in range(n_packets):
        idx = start_index + i
        chains = clean
        if doppler_hz:
            chains = chains * np.exp(2j * np.pi * doppler_hz * idx * packet_interval)
        if noise_std is not None:
            rng = _rng(seed, idx)
            z = rng.standard_normal((2,) + clean.shape)
            chains = chains + noise_std * (z[0] + 1j * z[1])
        out.append(CsiMeasurement(device_id=profile.device_id, packet_index=idx,
                                  chains=np.array(chains), snr_db=snr_db))
    return out


def _clip_lts(chain: np.ndarray, clip_ratio: float) -> np.ndarray:
    """Hard-clip the I/Q rails of the received time-domain L-LTF and re-estimate CSI."""
    spectrum = np.zeros(N_FFT, dtype=complex)
    spectrum[np.mod(SUBCARRIERS, N_FFT)] = chain * LEGACY_LTF
    y = np.fft.ifft(spectrum)
    level = clip_ratio * np.sqrt(np.mean(y.real ** 2 + y.imag ** 2) / 2.0)
    y = np.clip(y.real, -level, level) + 1j * np.clip(y.imag, -level, level)
    return np.fft.fft(y)[np.mod(SUBCARRIERS, N_FFT)] * LEGACY_LTF


def inject_abnormal(m: CsiMeasurement, kind: str, seed: int = 0, magnitude: float = 0.1,
                    clip_ratio: float = 1.0) -> CsiMeasurement:
    """Corrupt a measurement the way a misbehaving collector does.

    ``case1`` adds a burst of relative size ``magnitude`` (about ten times a
    typical extracted micro-CSI deviation) on 2-4 random subcarriers.
    ``case2`` clips the received training symbol in the time domain at
    ``clip_ratio`` times the per-rail RMS, which spreads distortion over all
    subcarriers.
    """
    rng = _rng(seed, m.packet_index)
    chains = m.chains.copy()
    if kind == CASE1:
        count = int(rng.integers(2, 5))
        idx = rng.choice(chains.shape[1], size=count, replace=False)
        phase = np.exp(2j * np.pi * rng.uniform(size=(chains.shape[0], count)))
        chains[:, idx] += magnitude * np.abs(chains[:, idx]) * phase
    elif kind == CASE2:
        chains = np.stack([_clip_lts(c, clip_ratio) for c in chains])
    else:
        raise ValueError(f"unknown abnormal kind {kind!r}; expected one of {ABNORMAL_KINDS}")
    return replace(m, chains=chains, flags=m.flags | {kind})


def doppler_shift(speed: float, carrier_hz: float) -> float:
    if speed < 0:
        raise ValueError("speed must be non-negative")
    return speed * carrier_hz / SPEED_OF_LIGHT


def ici_upper_bound(f_d: float, t_s: float = 50e-9) -> float:
    """Upper bound on Doppler-induced inter-carrier interference power."""
    if f_d < 0:
        raise ValueError("Doppler frequency must be non-negative")
    return (2.0 * math.pi * f_d * t_s) ** 2 / 12.0
