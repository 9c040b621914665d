"""
WAV input/output through soundfile.

Interleaved channels map to microphone indices in order. Only 16 kHz audio is
accepted; resampling is out of scope.
"""

import logging
from pathlib import Path

import numpy as np
import soundfile as sf

from .dsp.stft import DEFAULT_SAMPLE_RATE, WaveformBlock
from .exceptions import AudioIOError, InvalidInputError

logger = logging.getLogger(__name__)

SUBTYPES = {'pcm16': 'PCM_16', 'float': 'FLOAT'}


def _check_rate(path, sample_rate):
    if sample_rate != DEFAULT_SAMPLE_RATE:
        raise InvalidInputError(
            f"{path}: sample rate {sample_rate} Hz is not supported (expected {DEFAULT_SAMPLE_RATE} Hz)"
        )


def wav_info(path):
    path = Path(path)
    if not path.is_file():
        raise AudioIOError(f"input file not found: {path}")
    try:
        return sf.info(str(path))
    except (RuntimeError, sf.LibsndfileError) as exc:
        raise AudioIOError(f"cannot read {path}: {exc}") from exc


def read_wav(path, min_channels=1):
    info = wav_info(path)
    _check_rate(path, info.samplerate)
    if info.channels < min_channels:
        raise InvalidInputError(
            f"{path}: needs at least {min_channels} channels, got {info.channels}"
        )
    try:
        samples, sample_rate = sf.read(str(path), dtype='float64', always_2d=True)
    except (RuntimeError, sf.LibsndfileError) as exc:
        raise AudioIOError(f"cannot read {path}: {exc}") from exc
    logger.debug(f"Read {path}: {samples.shape[0]} samples x {samples.shape[1]} channels")
    return WaveformBlock(samples, sample_rate)


def iter_wav_blocks(path, block_samples, min_channels=1):
    """Yield consecutive WaveformBlocks of ``block_samples`` samples"""
    info = wav_info(path)
    _check_rate(path, info.samplerate)
    if info.channels < min_channels:
        raise InvalidInputError(
            f"{path}: needs at least {min_channels} channels, got {info.channels}"
        )
    try:
        for block in sf.blocks(str(path), blocksize=block_samples, dtype='float64', always_2d=True):
            yield WaveformBlock(block, info.samplerate)
    except (RuntimeError, sf.LibsndfileError) as exc:
        raise AudioIOError(f"cannot read {path}: {exc}") from exc


def _prepare(block, subtype):
    samples = block.samples
    if subtype == 'PCM_16':
        clipped = np.clip(samples, -1.0, 1.0)
        if np.any(clipped != samples):
            logger.warning("Clipping samples outside [-1, 1] for 16-bit output")
        samples = clipped
    return samples


def write_wav(path, block, fmt='pcm16'):
    subtype = SUBTYPES[fmt]
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), _prepare(block, subtype), block.sample_rate, subtype=subtype)
    except (OSError, RuntimeError, sf.LibsndfileError) as exc:
        raise AudioIOError(f"cannot write {path}: {exc}") from exc
    logger.debug(f"Wrote {path}: {block.n_samples} samples x {block.n_channels} channels")


class StreamingWavWriter:
    """Appendable WAV output for online runs"""

    def __init__(self, path, sample_rate=DEFAULT_SAMPLE_RATE, channels=1, fmt='pcm16'):
        self.path = Path(path)
        self.subtype = SUBTYPES[fmt]
        self.samples_written = 0
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.handle = sf.SoundFile(str(self.path), 'w', samplerate=sample_rate,
                                       channels=channels, subtype=self.subtype)
        except (OSError, RuntimeError, sf.LibsndfileError) as exc:
            raise AudioIOError(f"cannot open {self.path} for writing: {exc}") from exc

    def write(self, block):
        if block.n_samples == 0:
            return
        try:
            self.handle.write(_prepare(block, self.subtype))
            self.handle.flush()
        except (RuntimeError, sf.LibsndfileError) as exc:
            raise AudioIOError(f"cannot write {self.path}: {exc}") from exc
        self.samples_written += block.n_samples

    def close(self):
        self.handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False
