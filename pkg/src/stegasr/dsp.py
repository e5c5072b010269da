"""Differentiable log-mel front end, channel attacks, and quality metrics.

The feature chain (framing -> Hann window -> power spectrum -> mel bank ->
log) is written as plain linear algebra with an explicit analytic adjoint,
so a gradient with respect to features can be pulled back to a gradient
with respect to waveform samples exactly. The DFT is realized as fixed
cosine/sine matrices rather than an FFT: the adjoint is then literally a
transpose, which keeps the sample-gradient path easy to verify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, lfilter

from .audio_io import AudioClip, resample


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end configuration. Travels inside model files so that the
    embedding and extraction ends always agree on it."""

    sample_rate: int = 16000
    win_len: int = 512
    hop: int = 320
    n_mels: int = 26
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-6

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.win_len:
            return 0
        return 1 + (n_samples - self.win_len) // self.hop


@dataclass
class FeatureMatrix:
    """T x F grid of log-mel energies plus the frame rate."""

    frames: np.ndarray
    frame_rate: float


@dataclass
class FeatureContext:
    """Per-frame spectra cached by the forward pass, sufficient to map a
    feature-space gradient back onto waveform samples."""

    cfg: FeatureConfig
    n_samples: int
    real: np.ndarray
    imag: np.ndarray
    mel_power: np.ndarray


_DFT_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_WINDOW_CACHE: dict[int, np.ndarray] = {}
_MEL_CACHE: dict[FeatureConfig, np.ndarray] = {}


def _dft_maps(win_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine maps of shape (win_len, win_len//2 + 1)."""
    maps = _DFT_CACHE.get(win_len)
    if maps is None:
        n_bins = win_len // 2 + 1
        angles = 2.0 * np.pi * np.outer(np.arange(win_len), np.arange(n_bins)) / win_len
        maps = (np.cos(angles), -np.sin(angles))
        _DFT_CACHE[win_len] = maps
    return maps


def _hann(win_len: int) -> np.ndarray:
    w = _WINDOW_CACHE.get(win_len)
    if w is None:
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_len) / win_len)
        _WINDOW_CACHE[win_len] = w
    return w


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(cfg: FeatureConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular mel filter."""
    pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(pts)[1:-1]


def _mel_matrix(cfg: FeatureConfig) -> np.ndarray:
    """Triangular mel bank, shape (n_mels, n_bins)."""
    mat = _MEL_CACHE.get(cfg)
    if mat is None:
        n_bins = cfg.win_len // 2 + 1
        freqs = np.arange(n_bins) * cfg.sample_rate / cfg.win_len
        edges = mel_to_hz(
            np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
        )
        left, center, right = edges[:-2], edges[1:-1], edges[2:]
        up = (freqs[None, :] - left[:, None]) / (center - left)[:, None]
        dn = (right[:, None] - freqs[None, :]) / (right - center)[:, None]
        mat = np.maximum(0.0, np.minimum(up, dn))
        _MEL_CACHE[cfg] = mat
    return mat


def features_forward(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()):
    """Waveform -> log-mel features, plus the context for the adjoint.

    Returns (FeatureMatrix, FeatureContext). Only 16 kHz input is
    supported; the clip must span at least one analysis window.
    """
    if cfg.sample_rate != 16000:
        raise ValueError(f"unsupported sample rate {cfg.sample_rate} (need 16000)")
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"clip rate {clip.sample_rate} does not match config {cfg.sample_rate}"
        )
    x = clip.samples
    if x.size < cfg.win_len:
        raise ValueError(
            f"clip too short: {x.size} samples, need at least {cfg.win_len}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.win_len)[:: cfg.hop]
    windowed = frames * _hann(cfg.win_len)
    cos_map, sin_map = _dft_maps(cfg.win_len)
    real = windowed @ cos_map
    imag = windowed @ sin_map
    power = real * real + imag * imag
    mel_power = power @ _mel_matrix(cfg).T
    feats = np.log(np.maximum(mel_power, cfg.log_floor))
    ctx = FeatureContext(cfg, x.size, real, imag, mel_power)
    return FeatureMatrix(feats, cfg.frame_rate), ctx


def features_backward(ctx: FeatureContext, grad_features: np.ndarray) -> np.ndarray:
    """Exact adjoint of features_forward.

    Maps a T x F gradient with respect to the log-mel output to a
    gradient with respect to the input samples (same length as the
    original waveform).
    """
    cfg = ctx.cfg
    grad_features = np.asarray(grad_features, dtype=np.float64)
    if grad_features.shape != ctx.mel_power.shape:
        raise ValueError(
            f"gradient shape {grad_features.shape} does not match "
            f"features {ctx.mel_power.shape}"
        )
    d_mel = grad_features / np.maximum(ctx.mel_power, cfg.log_floor)
    d_power = d_mel @ _mel_matrix(cfg)
    cos_map, sin_map = _dft_maps(cfg.win_len)
    d_windowed = (2.0 * ctx.real * d_power) @ cos_map.T
    d_windowed += (2.0 * ctx.imag * d_power) @ sin_map.T
    d_frames = d_windowed * _hann(cfg.win_len)
    grad_x = np.zeros(ctx.n_samples)
    for t in range(d_frames.shape[0]):
        start = t * cfg.hop
        grad_x[start : start + cfg.win_len] += d_frames[t]
    return grad_x


# ---------------------------------------------------------------------------
# Channel attacks


def attack_awgn(clip: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Add white Gaussian noise at exactly the requested SNR.

    The noise vector is drawn from the seeded generator and rescaled so
    the measured SNR equals snr_db by construction.
    """
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    x = clip.samples
    p_sig = float(np.mean(x * x)) if x.size else 0.0
    if p_sig == 0.0:
        raise ValueError("cannot set an SNR against a silent signal")
    noise = np.random.default_rng(seed).standard_normal(x.size)
    p_noise = float(np.mean(noise * noise))
    noise *= np.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return AudioClip(x + noise, clip.sample_rate)


def attack_resample(clip: AudioClip) -> AudioClip:
    """Resample to twice the original rate and back again."""
    doubled = resample(clip, 2 * clip.sample_rate)
    restored = resample(doubled, clip.sample_rate)
    y = restored.samples
    if y.size > len(clip):
        y = y[: len(clip)]
    elif y.size < len(clip):
        y = np.concatenate([y, np.zeros(len(clip) - y.size)])
    return AudioClip(y, clip.sample_rate)


def attack_lowpass(clip: AudioClip, cutoff_hz: float = 6000.0) -> AudioClip:
    """Second-order Butterworth low-pass (bilinear transform with
    pre-warping), applied once, causally, from zero initial state."""
    if cutoff_hz >= clip.sample_rate / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must be below Nyquist ({clip.sample_rate / 2} Hz)"
        )
    b, a = butter(2, cutoff_hz, fs=clip.sample_rate)
    return AudioClip(lfilter(b, a, clip.samples), clip.sample_rate)


def attack_echo(clip: AudioClip, delay_s: float = 0.030, attenuation: float = 0.5) -> AudioClip:
    """Add a delayed copy: y[n] = x[n] + attenuation * x[n - D].

    The first D samples pass through unchanged (no signal exists before
    the clip starts) and the output keeps the input length.
    """
    delay = int(round(delay_s * clip.sample_rate))
    if len(clip) <= delay:
        raise ValueError(f"clip of {len(clip)} samples shorter than {delay}-sample echo delay")
    y = clip.samples.copy()
    y[delay:] += attenuation * clip.samples[:-delay]
    return AudioClip(y, clip.sample_rate)


# ---------------------------------------------------------------------------
# Metrics

SNR_CAP_DB = 99.0


def snr_db(reference: AudioClip, test: AudioClip) -> float:
    """10*log10 of reference power over error power, capped at 99 dB.

    The cap doubles as the sentinel for a bit-identical pair.
    """
    if len(reference) != len(test) or reference.sample_rate != test.sample_rate:
        raise ValueError("reference and test clips must share length and rate")
    ref = reference.samples
    p_ref = float(np.sum(ref * ref))
    if p_ref == 0.0:
        raise ValueError("reference signal is silent")
    err = ref - test.samples
    p_err = float(np.sum(err * err))
    if p_err == 0.0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(p_ref / p_err), SNR_CAP_DB)


def linf_norm(delta) -> float:
    """Largest absolute entry of a perturbation."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.size == 0:
        raise ValueError("empty perturbation has no norm")
    return float(np.max(np.abs(delta)))
