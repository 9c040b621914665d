"""
Beamformers built from speech/noise spatial covariance estimates.

Three families, each time-variant or time-invariant:

    full-rank WF   w = (P + Q)^-1 P u_m
    rank-1 WF      w = Q^-1 p (p^H Q^-1 p + 1/lambda)^-1 p^H u_m
    MVDR           w = Q^-1 p (p^H Q^-1 p)^-1 p^H u_m

Time-variant rank-1 WF and MVDR keep the speech steering time-invariant and
only let Q vary per frame.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..choices import BeamformerFamily, TimeMode
from ..exceptions import FilterConstructionError, InvalidInputError
from .linalg import regularize
from .spatial import extract_steering
from .stft import Spectrogram

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BeamformerSpec:
    family: str = BeamformerFamily.MVDR
    time_mode: str = TimeMode.TIME_INVARIANT
    reference: int = None  # None selects the channel automatically

    def __post_init__(self):
        try:
            object.__setattr__(self, 'family', BeamformerFamily(self.family))
            object.__setattr__(self, 'time_mode', TimeMode(self.time_mode))
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from exc

    def validate(self, n_channels):
        if self.reference is not None and not 0 <= self.reference < n_channels:
            raise InvalidInputError(
                f"reference channel {self.reference} out of range for {n_channels} channels"
            )
        return self

    @property
    def label(self):
        mode = 'TV' if self.time_mode == TimeMode.TIME_VARIANT else 'TI'
        return f"MNMF-{mode}-{self.family.value.upper()}"


@dataclass
class BeamformerFilterField:
    """Filter vectors w, (F, M) when time-invariant or (F, T, M) when time-variant"""
    weights: np.ndarray
    reference: int
    time_mode: str = TimeMode.TIME_INVARIANT

    def __post_init__(self):
        bad = ~np.all(np.isfinite(self.weights), axis=-1)
        if np.any(bad):
            raise FilterConstructionError(
                "filter has non-finite entries", index=tuple(np.argwhere(bad)[0])
            )

    @property
    def time_variant(self):
        return self.weights.ndim == 3


class BeamformResult(NamedTuple):
    filters: BeamformerFilterField
    output: Spectrogram


def _solve(a, b):
    """Solve regularized A w = b over stacked matrices; failures name the (f[, t]) bin"""
    a = regularize(a)
    bad = ~np.all(np.isfinite(a), axis=(-1, -2)) | ~(np.real(np.trace(a, axis1=-2, axis2=-1)) > 0)
    if np.any(bad):
        raise FilterConstructionError(
            "covariance is zero or non-finite while building filter", index=tuple(np.argwhere(bad)[0])
        )
    try:
        return np.linalg.solve(a, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        for index in np.ndindex(a.shape[:-2]):
            try:
                np.linalg.solve(a[index], b[index])
            except np.linalg.LinAlgError:
                raise FilterConstructionError(
                    "singular covariance while building filter", index=index
                ) from exc
        raise FilterConstructionError(f"singular covariance while building filter: {exc}") from exc


def _full_rank(speech, noise, reference):
    return _solve(speech + noise, speech[..., :, reference])


def _rank1(steering, power, noise, reference, distortionless):
    whitened = _solve(noise, np.broadcast_to(steering, noise.shape[:-1]))
    gain = np.real(np.sum(np.conj(steering) * whitened, axis=-1))
    if not distortionless:
        with np.errstate(divide='ignore'):
            gain = gain + np.where(power > 0, 1.0 / np.where(power > 0, power, 1.0), np.inf)
    with np.errstate(divide='ignore', invalid='ignore'):
        scale = np.conj(steering[..., reference]) / gain
    return whitened * scale[..., None]


def build_filter(spec, est, reference=None):
    """Closed-form filter of ``spec.family`` for one reference channel"""
    reference = spec.reference if reference is None else reference
    if reference is None:
        raise InvalidInputError("build_filter needs an explicit reference channel")
    spec.validate(est.n_channels)
    if not 0 <= reference < est.n_channels:
        raise InvalidInputError(f"reference channel {reference} out of range")

    mode = spec.time_mode
    if spec.family == BeamformerFamily.FULL_RANK_WF:
        weights = _full_rank(est.speech(mode), est.noise(mode), reference)
    else:
        steering, power = extract_steering(est, TimeMode.TIME_INVARIANT)
        noise = est.noise(mode)
        if mode == TimeMode.TIME_VARIANT:
            steering = np.broadcast_to(steering[:, None], noise.shape[:-1])
            power = np.broadcast_to(power[:, None], noise.shape[:-2])
        weights = _rank1(steering, power, noise, reference,
                         distortionless=spec.family == BeamformerFamily.MVDR)
    return BeamformerFilterField(weights, reference, mode)


def _energy(weights, covariance):
    if weights.ndim == 2:
        weights = weights[:, None]
    if covariance.ndim == 3:
        covariance = covariance[:, None]
    projected = (covariance @ weights[..., None])[..., 0]
    return float(np.real(np.sum(np.conj(weights) * projected)))


def select_reference(candidate_filters, est):
    """
    Channel maximizing sum w^H P w / sum w^H Q w.

    A zero noise energy counts as an infinite ratio; ties go to the lowest index.
    """
    speech = est.speech_tv if est.speech_tv is not None else est.speech_ti
    noise = est.noise_tv if est.noise_tv is not None else est.noise_ti
    ratios = []
    for filters in candidate_filters:
        noise_energy = _energy(filters.weights, noise)
        ratios.append(np.inf if noise_energy <= 0 else _energy(filters.weights, speech) / noise_energy)
    best = int(np.argmax(ratios))
    logger.debug(f"Reference channel ratios {['%.3e' % r for r in ratios]}, selected {best}")
    return best


def apply_filter(w, x):
    """s_ft = w^H x_ft, returned as a single-channel spectrogram"""
    data = x.data
    weights = w.weights
    if weights.shape[-1] != data.shape[-1] or weights.shape[0] != data.shape[0]:
        raise InvalidInputError(f"filter shaped {weights.shape} does not match spectrogram {data.shape}")
    if weights.ndim == 2:
        weights = weights[:, None]
    elif weights.shape[1] != data.shape[1]:
        raise InvalidInputError(
            f"time-variant filter covers {weights.shape[1]} frames, spectrogram has {data.shape[1]}"
        )
    output = np.sum(np.conj(weights) * data, axis=-1)
    return Spectrogram(output[..., None], x.frame_hop, x.window_len, x.sample_rate)


def candidate_filters(spec, est):
    return [build_filter(spec, est, m) for m in range(est.n_channels)]


def beamform(spec, est, x):
    """Build filters (choosing the reference when unset) and apply them to ``x``"""
    spec.validate(est.n_channels)
    if spec.reference is None:
        candidates = candidate_filters(spec, est)
        filters = candidates[select_reference(candidates, est)]
    else:
        filters = build_filter(spec, est, spec.reference)
    return BeamformResult(filters, apply_filter(filters, x))
