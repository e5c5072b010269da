"""WAV reading/writing and sample-rate conversion.

Samples live as real values on the signed 16-bit integer scale
([-32768, 32767]), never normalized: every amplitude-dependent knob in
this package (perturbation budgets, tone amplitudes, learning rates)
is expressed on that scale, so rescaling here would silently change
their meaning.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass

import numpy as np
from scipy.signal import upfirdn

INT16_MIN = -32768
INT16_MAX = 32767

# Resampler filter design: taps per polyphase branch and Kaiser shape.
RESAMPLE_TAPS_PER_PHASE = 64
RESAMPLE_KAISER_BETA = 8.6


class AudioFormatError(ValueError):
    """Unreadable, unsupported, or truncated WAV content."""


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform: float64 samples on the int16 scale plus a sample rate.

    Immutable after construction; the sample buffer is write-protected so
    clips can be shared freely between concurrent operations.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> AudioClip:
    """Read a mono 16-bit PCM WAV file without any amplitude scaling.

    Rejects anything that is not plain mono/16-bit PCM; unknown RIFF
    chunks are skipped. Raises FileNotFoundError for a missing file and
    AudioFormatError for format or truncation problems.
    """
    try:
        wf = wave.open(str(path), "rb")
    except FileNotFoundError:
        raise
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    with wf:
        if wf.getcomptype() != "NONE":
            raise AudioFormatError(f"{path}: compressed WAV not supported")
        if wf.getsampwidth() != 2:
            raise AudioFormatError(
                f"{path}: only 16-bit PCM supported, got {8 * wf.getsampwidth()}-bit"
            )
        if wf.getnchannels() != 1:
            raise AudioFormatError(
                f"{path}: only mono supported, got {wf.getnchannels()} channels"
            )
        n_frames = wf.getnframes()
        raw = wf.readframes(n_frames)
        if len(raw) != 2 * n_frames:
            raise AudioFormatError(f"{path}: truncated data chunk")
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64)
        return AudioClip(samples, wf.getframerate())


def write_wav(clip: AudioClip, path, clamp: bool = False) -> None:
    """Write a clip as canonical mono 16-bit PCM.

    Samples are quantized with round-half-to-even. Values outside the
    int16 range are an error unless `clamp` is set, in which case they
    saturate at the range bounds.
    """
    samples = clip.samples
    if clamp:
        samples = np.clip(samples, INT16_MIN, INT16_MAX)
    elif samples.size and (samples.min() < INT16_MIN or samples.max() > INT16_MAX):
        bad = float(samples[np.argmax(np.abs(samples))])
        raise ValueError(
            f"sample {bad} outside int16 range; pass clamp=True to saturate"
        )
    quantized = np.rint(samples).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(quantized.tobytes())


_FILTER_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _resample_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc low-pass for polyphase rational resampling.

    Length 64*up + 1 (odd, so the filter is symmetric about one tap),
    cutoff at the narrower of the two Nyquist frequencies, total gain
    normalized so zero-stuffed interpolation has unity DC gain.
    """
    key = (up, down)
    h = _FILTER_CACHE.get(key)
    if h is None:
        length = RESAMPLE_TAPS_PER_PHASE * up + 1
        n = np.arange(length) - (length - 1) // 2
        cutoff = 1.0 / max(up, down)
        h = cutoff * np.sinc(cutoff * n) * np.kaiser(length, RESAMPLE_KAISER_BETA)
        h *= up / h.sum()
        _FILTER_CACHE[key] = h
    return h


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rational-rate conversion (polyphase windowed sinc).

    Output length is round(len * target_rate / sample_rate). Converting
    to the clip's own rate is an exact pass-through (no filtering).
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    g = math.gcd(clip.sample_rate, target_rate)
    up = target_rate // g
    down = clip.sample_rate // g
    x = clip.samples
    n_in = x.size
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    if n_in == 0 or n_out == 0:
        return AudioClip(np.zeros(n_out), target_rate)

    h = _resample_filter(up, down)
    half = (h.size - 1) // 2
    # Align the filter's group delay to a whole number of output samples,
    # then make sure the padded filter yields at least n_out usable values.
    pre_pad = (down - half % down) % down
    skip = (half + pre_pad) // down
    min_len = (n_out + skip - 1) * down - (n_in - 1) * up + 1
    post_pad = max(0, min_len - (h.size + pre_pad))
    h_padded = np.concatenate([np.zeros(pre_pad), h, np.zeros(post_pad)])
    y = upfirdn(h_padded, x, up, down)[skip : skip + n_out]
    if y.size < n_out:
        y = np.concatenate([y, np.zeros(n_out - y.size)])
    return AudioClip(y, target_rate)
