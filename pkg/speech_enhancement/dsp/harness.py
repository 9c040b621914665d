"""
Synthetic anechoic scenes with known ground truth.

Sources are a harmonic complex with vibrato and a syllabic on/off envelope
(the speech stand-in, always source 0) and low-frequency band-limited noise.
The harmonics reach up to 7.6 kHz while the noise stays below about 1 kHz, so at
any SNR near 0 dB the speech dominates most frequency bins. Each source is
spatialized by a per-frequency rank-one steering vector in the full-length
Fourier domain and the mixture is the exact sum of the source images.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft, signal

from ..choices import BeamformerFamily, TimeMode
from ..exceptions import InvalidInputError
from .beamform import BeamformerSpec, beamform
from .spatial import SpatialEstimates
from .stft import (
    DEFAULT_SAMPLE_RATE,
    DEFAULT_WINDOW_LEN,
    WaveformBlock,
    spectral_data,
    stft_forward,
)

logger = logging.getLogger(__name__)

SOURCE_KINDS = ('harmonic', 'noise')
STEERING_MODELS = ('delays', 'random', 'custom')
SI_SDR_CAP = 80.0
MAX_DELAY_SAMPLES = 4.0
PEAK_LEVEL = 0.9
HARMONIC_CEILING = 7600.0


@dataclass
class SceneSpec:
    n_mics: int = 4
    n_sources: int = 2
    kinds: tuple = None
    steering_model: str = 'delays'
    snr_db: float = 0.0
    duration: float = 8.0
    seed: int = 0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    custom_steering: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kinds is None:
            self.kinds = ('harmonic',) + ('noise',) * (self.n_sources - 1)
        self.kinds = tuple(self.kinds)

    def validate(self):
        if self.n_mics < 2:
            raise InvalidInputError(f"a scene needs at least 2 microphones, got {self.n_mics}")
        if self.n_sources < 1:
            raise InvalidInputError("a scene needs at least one source")
        if len(self.kinds) != self.n_sources or any(k not in SOURCE_KINDS for k in self.kinds):
            raise InvalidInputError(f"source kinds must be {self.n_sources} of {SOURCE_KINDS}")
        if self.steering_model not in STEERING_MODELS:
            raise InvalidInputError(f"unknown steering model '{self.steering_model}'")
        if self.steering_model == 'custom' and self.custom_steering is None:
            raise InvalidInputError("custom steering model needs custom_steering vectors")
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise InvalidInputError(f"invalid SNR {self.snr_db}")
        if self.duration < 1:
            raise InvalidInputError(f"scene duration must be at least 1 s, got {self.duration}")
        return self

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate))

    def as_dict(self):
        data = asdict(self)
        data.pop('custom_steering')
        data['kinds'] = list(self.kinds)
        data['snr_db'] = None if np.isinf(self.snr_db) else float(self.snr_db)
        return data


@dataclass
class SceneTruth:
    spec: SceneSpec
    mixture: WaveformBlock
    images: list             # one WaveformBlock per source
    steering: np.ndarray     # unit-norm steering at STFT bins, (n_sources, F, M)
    masks: np.ndarray        # ideal binary masks at channel 0, (n_sources, F, T)

    @property
    def target(self):
        return self.images[0]


def _harmonic_source(rng, n_samples, sample_rate):
    t = np.arange(n_samples) / sample_rate
    f0 = rng.uniform(100.0, 220.0)
    vibrato = 1 + 0.03 * np.sin(2 * np.pi * rng.uniform(3.0, 6.0) * t)
    phase = 2 * np.pi * np.cumsum(f0 * vibrato) / sample_rate
    harmonics = np.arange(1, int(HARMONIC_CEILING // (1.03 * f0)) + 1)
    offsets = rng.uniform(0, 2 * np.pi, len(harmonics))
    tone = np.zeros(n_samples)
    for h, offset in zip(harmonics, offsets):
        tone += np.sin(h * phase + offset) / h
    syllable_rate = rng.uniform(2.5, 4.5)
    envelope = np.maximum(np.sin(2 * np.pi * syllable_rate * t + rng.uniform(0, 2 * np.pi)), 0.0)
    return tone * envelope


def _noise_source(rng, n_samples, sample_rate):
    low = rng.uniform(80.0, 150.0)
    high = rng.uniform(500.0, 900.0)
    sos = signal.butter(4, [low, high], btype='bandpass', fs=sample_rate, output='sos')
    return signal.sosfilt(sos, rng.standard_normal(n_samples))


def _unit_rms(x):
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _steering_at(spec, rng):
    """Callable mapping normalized frequencies (cycles per sample) to steering (n_sources, len, M)"""
    m = spec.n_mics
    if spec.steering_model == 'delays':
        delays = rng.uniform(-MAX_DELAY_SAMPLES, MAX_DELAY_SAMPLES, (spec.n_sources, m))
        gains = np.clip(1 + 0.1 * rng.standard_normal((spec.n_sources, m)), 0.5, 1.5)

        def evaluate(nu):
            return gains[:, None, :] * np.exp(-2j * np.pi * nu[None, :, None] * delays[:, None, :])
        return evaluate

    n_bins = DEFAULT_WINDOW_LEN // 2 + 1
    if spec.steering_model == 'random':
        shape = (spec.n_sources, n_bins, m)
        table = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        table *= np.sqrt(m) / np.linalg.norm(table, axis=-1, keepdims=True)
    else:
        table = np.asarray(spec.custom_steering, dtype=np.complex128)
        if table.ndim == 2:
            table = np.broadcast_to(table[:, None], (spec.n_sources, n_bins, m))
        if table.shape != (spec.n_sources, n_bins, m):
            raise InvalidInputError(f"custom steering shaped {table.shape}, expected ({spec.n_sources}, {n_bins}, {m})")

    def evaluate(nu):
        index = np.clip(np.round(nu * DEFAULT_WINDOW_LEN).astype(int), 0, n_bins - 1)
        return table[:, index]
    return evaluate


def synth_scene(spec):
    """Generate sources, spatialize them and mix at the requested SNR"""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    sources = []
    for kind in spec.kinds:
        make = _harmonic_source if kind == 'harmonic' else _noise_source
        sources.append(_unit_rms(make(rng, n, spec.sample_rate)))

    steering_fn = _steering_at(spec, rng)
    nu = fft.rfftfreq(n)
    response = steering_fn(nu)  # (n_sources, n//2 + 1, M)
    images = np.stack([
        fft.irfft(fft.rfft(s)[:, None] * response[i], n=n, axis=0)
        for i, s in enumerate(sources)
    ])  # (n_sources, n, M)

    target_power = np.mean(images[0] ** 2)
    if spec.n_sources > 1:
        interference_power = np.mean(np.sum(images[1:], axis=0) ** 2)
        if np.isinf(spec.snr_db):
            images[1:] = 0.0
        elif interference_power > 0:
            images[1:] *= np.sqrt(target_power / (interference_power * 10 ** (spec.snr_db / 10)))

    peak = np.max(np.abs(np.sum(images, axis=0)))
    if peak > 0:
        images *= PEAK_LEVEL / peak
    mixture = np.sum(images, axis=0)

    stft_nu = np.arange(DEFAULT_WINDOW_LEN // 2 + 1) / DEFAULT_WINDOW_LEN
    steering = steering_fn(stft_nu)
    steering = steering / np.linalg.norm(steering, axis=-1, keepdims=True)

    image_blocks = [WaveformBlock(img, spec.sample_rate) for img in images]
    masks = ideal_binary_masks([stft_forward(b) for b in image_blocks])
    logger.info(
        f"Synthesized scene: {spec.n_mics} mics, {spec.n_sources} sources, "
        f"SNR {spec.snr_db} dB, {spec.duration} s, seed {spec.seed}"
    )
    return SceneTruth(spec, WaveformBlock(mixture, spec.sample_rate), image_blocks, steering, masks)


def _mono(x):
    samples = getattr(x, 'samples', x)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        if samples.shape[1] != 1:
            raise InvalidInputError(f"expected a single-channel signal, got {samples.shape[1]} channels")
        samples = samples[:, 0]
    return samples


def si_sdr(reference, estimate, sample_rate=None):
    """
    Scale-invariant SDR in dB, capped to [-80, 80].

    When ``sample_rate`` is given both signals must last at least one second.
    """
    reference, estimate = _mono(reference), _mono(estimate)
    if reference.shape != estimate.shape:
        raise InvalidInputError(
            f"reference has {len(reference)} samples but estimate has {len(estimate)}"
        )
    if sample_rate is not None and len(reference) < sample_rate:
        raise InvalidInputError("SI-SDR needs at least one second of signal")
    reference_energy = np.dot(reference, reference)
    if reference_energy <= 0:
        raise InvalidInputError("SI-SDR reference is all zero")

    target = np.dot(estimate, reference) / reference_energy * reference
    residual = estimate - target
    target_energy = np.dot(target, target)
    residual_energy = np.dot(residual, residual)
    if residual_energy <= 0:
        return SI_SDR_CAP
    if target_energy <= 0:
        return -SI_SDR_CAP
    return float(np.clip(10 * np.log10(target_energy / residual_energy), -SI_SDR_CAP, SI_SDR_CAP))


def si_sdr_improvement(truth, estimate, channel=0):
    """SI-SDR of ``estimate`` minus that of the unprocessed mixture channel"""
    estimate = _mono(estimate)
    n = len(estimate)
    reference = truth.target.samples[:n, channel]
    baseline = truth.mixture.samples[:n, channel]
    return si_sdr(reference, estimate) - si_sdr(reference, baseline)


def ideal_binary_mask(target, interference, reference=0):
    """1 where the target magnitude exceeds the interference magnitude at ``reference``"""
    target = spectral_data(target)
    interference = spectral_data(interference)
    return (np.abs(target[..., reference]) > np.abs(interference[..., reference])).astype(np.float64)


def ideal_binary_masks(image_spectrograms, reference=0):
    """Ideal binary mask of every source against the sum of the others, (N, F, T)"""
    data = np.stack([s.data for s in image_spectrograms])
    total = np.sum(data, axis=0)
    return np.stack([ideal_binary_mask(d, total - d, reference) for d in data])


def phase_sensitive_mask(target, mixture, reference=0):
    """Re(target / mixture) at ``reference`` clipped to [0, 1]; 0 where the mixture vanishes"""
    target = spectral_data(target)[..., reference]
    mixture = spectral_data(mixture)[..., reference]
    nonzero = np.abs(mixture) > 0
    ratio = np.where(nonzero, target / np.where(nonzero, mixture, 1.0), 0.0)
    return np.clip(np.real(ratio), 0.0, 1.0)


def mask_weighted_scms(x, masks):
    """
    Speech and noise covariances per frequency from a time-frequency mask.

    P_f = sum_t a X / sum_t a and Q_f = sum_t (1 - a) X / sum_t (1 - a); a
    frequency whose weights sum to zero falls back to uniform weights.
    """
    data = x.data
    masks = np.asarray(masks, dtype=np.float64)
    if masks.shape != data.shape[:2]:
        raise InvalidInputError(f"mask shaped {masks.shape} does not match spectrogram {data.shape[:2]}")
    if np.any(masks < 0) or np.any(masks > 1) or not np.all(np.isfinite(masks)):
        raise InvalidInputError("mask values must lie in [0, 1]")

    outer = data[..., :, None] * np.conj(data[..., None, :])
    covariances = []
    for weights, name in ((masks, 'speech'), (1.0 - masks, 'noise')):
        if np.sum(weights) <= 0:
            raise InvalidInputError(f"{name} mask weights are all zero")
        totals = np.sum(weights, axis=1)
        weights = np.where(totals[:, None] > 0, weights, 1.0)
        totals = np.sum(weights, axis=1)
        covariances.append(np.einsum('ft,ftij->fij', weights, outer) / totals[:, None, None])
    return tuple(covariances)


def oracle_mask_mvdr(x, masks, reference=0):
    """Time-invariant MVDR with speech and noise covariances taken from ``masks``"""
    speech, noise = mask_weighted_scms(x, masks)
    est = SpatialEstimates(speech_ti=speech, noise_ti=noise, anchor=reference)
    spec = BeamformerSpec(BeamformerFamily.MVDR, TimeMode.TIME_INVARIANT, reference)
    return beamform(spec, est, x).output

