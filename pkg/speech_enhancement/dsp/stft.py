"""
Short-time Fourier transform for multichannel waveforms.

Framing starts at sample 0 with no centre padding; a trailing partial frame is
dropped. Frames are weighted by a periodic Hamming window and synthesis uses
weighted overlap-add normalized by the summed squared window, so analysis
followed by synthesis reproduces every covered sample.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft, signal

from ..exceptions import ConfigurationError, InvalidInputError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_WINDOW_LEN = 1024
DEFAULT_HOP = 160
_DENOMINATOR_MIN = 1e-10


@dataclass
class WaveformBlock:
    """Multichannel waveform, samples shaped (n_samples, n_channels)"""
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2:
            raise InvalidInputError(f"waveform must be 1-D or 2-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("waveform contains non-finite samples")
        self.samples = samples

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_channels(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    def channel(self, m):
        return self.samples[:, m]


@dataclass
class Spectrogram:
    """Complex STFT data shaped (n_freq, n_frames, n_channels)"""
    data: np.ndarray
    frame_hop: int = DEFAULT_HOP
    window_len: int = DEFAULT_WINDOW_LEN
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3:
            raise InvalidInputError(f"spectrogram must be (F, T, M), got shape {data.shape}")
        if data.shape[0] != self.window_len // 2 + 1:
            raise InvalidInputError(
                f"spectrogram has {data.shape[0]} bins, expected {self.window_len // 2 + 1}"
            )
        self.data = data.astype(np.complex128, copy=False)

    @property
    def n_freq(self):
        return self.data.shape[0]

    @property
    def n_frames(self):
        return self.data.shape[1]

    @property
    def n_channels(self):
        return self.data.shape[2]

    def frames(self, start, stop):
        """Spectrogram restricted to frames [start, stop)"""
        return Spectrogram(self.data[:, start:stop], self.frame_hop, self.window_len, self.sample_rate)


def spectral_data(x):
    """Complex array behind ``x``, which may be a Spectrogram or a plain array"""
    if isinstance(x, Spectrogram):
        return x.data
    return np.asarray(x)


def analysis_window(window_len):
    """Periodic Hamming window, 0.54 - 0.46 cos(2 pi n / N)"""
    return signal.get_window('hamming', window_len, fftbins=True)


def frame_count(n_samples, window_len=DEFAULT_WINDOW_LEN, hop=DEFAULT_HOP):
    if n_samples < window_len:
        return 0
    return (n_samples - window_len) // hop + 1


def covered_samples(n_frames, window_len=DEFAULT_WINDOW_LEN, hop=DEFAULT_HOP):
    """Number of samples reconstructable from ``n_frames`` frames"""
    if n_frames <= 0:
        return 0
    return (n_frames - 1) * hop + window_len


def _check_framing(window_len, hop):
    if window_len <= 0 or window_len % 2:
        raise ConfigurationError(f"window length must be even and positive, got {window_len}")
    if not 0 < hop <= window_len:
        raise ConfigurationError(f"hop must be in (0, window length], got {hop}")


def stft_forward(waveform, window_len=DEFAULT_WINDOW_LEN, hop=DEFAULT_HOP):
    """Windowed real FFT of every full frame; returns F = window_len/2 + 1 bins"""
    _check_framing(window_len, hop)
    if waveform.n_samples < window_len:
        raise InvalidInputError(
            f"signal has {waveform.n_samples} samples, shorter than one window ({window_len})"
        )
    n_frames = frame_count(waveform.n_samples, window_len, hop)
    # (frames, channels, window)
    frames = np.lib.stride_tricks.sliding_window_view(waveform.samples, window_len, axis=0)
    frames = frames[: (n_frames - 1) * hop + 1: hop]
    spectra = fft.rfft(frames * analysis_window(window_len), axis=-1)
    return Spectrogram(
        np.transpose(spectra, (2, 0, 1)),
        frame_hop=hop,
        window_len=window_len,
        sample_rate=waveform.sample_rate,
    )


def _synthesis_frames(spec):
    # (frames, channels, window), already multiplied by the synthesis window
    frames = fft.irfft(np.transpose(spec.data, (1, 2, 0)), n=spec.window_len, axis=-1)
    return frames * analysis_window(spec.window_len)


def stft_inverse(spec):
    """Weighted overlap-add with squared-window normalization"""
    _check_framing(spec.window_len, spec.frame_hop)
    n_out = covered_samples(spec.n_frames, spec.window_len, spec.frame_hop)
    window_sq = analysis_window(spec.window_len) ** 2
    numerator = np.zeros((n_out, spec.n_channels))
    denominator = np.zeros(n_out)
    for t, frame in enumerate(_synthesis_frames(spec)):
        start = t * spec.frame_hop
        numerator[start:start + spec.window_len] += frame.T
        denominator[start:start + spec.window_len] += window_sq
    if n_out and np.min(denominator) < _DENOMINATOR_MIN:
        raise ConfigurationError("overlap-add normalization vanishes inside the covered region")
    samples = numerator / denominator[:, None] if n_out else numerator
    return WaveformBlock(samples, sample_rate=spec.sample_rate)


class StreamingSynthesizer:
    """
    Incremental overlap-add for consecutive spectrogram segments.

    Samples are released once no later frame can overlap them; concatenating
    every released block and the final flush equals ``stft_inverse`` of the
    whole spectrogram.
    """

    def __init__(self, window_len=DEFAULT_WINDOW_LEN, hop=DEFAULT_HOP,
                 sample_rate=DEFAULT_SAMPLE_RATE, n_channels=1):
        _check_framing(window_len, hop)
        self.window_len = window_len
        self.hop = hop
        self.sample_rate = sample_rate
        self.window_sq = analysis_window(window_len) ** 2
        self.numerator = np.zeros((0, n_channels))
        self.denominator = np.zeros(0)
        self.offset = 0  # absolute index of numerator[0]
        self.frames_seen = 0

    def push(self, spec):
        """Add the next frames; return the samples that are now final"""
        end = covered_samples(self.frames_seen + spec.n_frames, self.window_len, self.hop) - self.offset
        if end > len(self.denominator):
            grow = end - len(self.denominator)
            self.numerator = np.vstack([self.numerator, np.zeros((grow, self.numerator.shape[1]))])
            self.denominator = np.concatenate([self.denominator, np.zeros(grow)])
        for i, frame in enumerate(_synthesis_frames(spec)):
            start = (self.frames_seen + i) * self.hop - self.offset
            self.numerator[start:start + self.window_len] += frame.T
            self.denominator[start:start + self.window_len] += self.window_sq
        self.frames_seen += spec.n_frames
        # the next frame starts here; everything before it is complete
        return self._release(self.frames_seen * self.hop - self.offset)

    def flush(self):
        return self._release(len(self.denominator))

    def _release(self, count):
        count = max(0, min(count, len(self.denominator)))
        if count and np.min(self.denominator[:count]) < _DENOMINATOR_MIN:
            raise ConfigurationError("overlap-add normalization vanishes inside the covered region")
        released = self.numerator[:count] / self.denominator[:count, None] if count else self.numerator[:0]
        self.numerator = self.numerator[count:]
        self.denominator = self.denominator[count:]
        self.offset += count
        return WaveformBlock(released, sample_rate=self.sample_rate)
