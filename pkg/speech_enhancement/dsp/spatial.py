"""
Spatial side of MNMF-informed beamforming.

Initialization builds the source spatial covariances from ILRMA mixing vectors,
with the speech source anchored on the principal component of the average
observed covariance. Extraction splits a fitted model into speech and noise
covariances and reduces the speech part to a steering vector and power.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..choices import TimeMode
from ..exceptions import ConfigurationError, InvalidInputError
from .ilrma import ilrma_run, mixing_from_demixing
from .linalg import principal_eigenvector
from .mnmf import MnmfParams, observations, source_variances

logger = logging.getLogger(__name__)

DEFAULT_LOADING = 0.01
SPEECH_SOURCE = 0
_NORM_MIN = 1e-300


@dataclass(frozen=True)
class EpsilonPolicy:
    """Identity loading added to g g^H; relative loading scales with tr(g g^H) / M"""
    loading: float = DEFAULT_LOADING
    relative: bool = True

    def epsilon(self, g):
        if not self.relative:
            return np.full(g.shape[:-1], self.loading)
        return self.loading * np.sum(np.abs(g) ** 2, axis=-1) / g.shape[-1]


class Initialization(NamedTuple):
    params: MnmfParams
    ilrma_cost_trace: list


def average_covariance(x):
    """(1/T) sum_t x_ft x_ft^H per frequency"""
    obs = observations(x)
    return np.einsum('fti,ftj->fij', obs, np.conj(obs)) / obs.shape[1]


def speech_anchor(x, anchor=0):
    """Principal eigenvector of the average observed covariance, (F, M)"""
    return principal_eigenvector(average_covariance(x), anchor=anchor, check=False)


def _column_norms(vectors):
    return np.maximum(np.linalg.norm(vectors, axis=-2), _NORM_MIN)


def init_spatial(x, ilrma_result, epsilon_policy=None, n_sources=None, anchor=0):
    """
    Source spatial covariances G (N, F, M, M) from ILRMA mixing vectors.

    The ILRMA source most similar to the speech anchor (largest frequency-averaged
    |cosine|) becomes source 0; the others follow in their original order. At
    every bin where the anchor is closer to that source's column than to any
    other column, the column is replaced by the anchor rescaled to its norm.
    Elsewhere some other source dominates the observed covariance and the
    ILRMA column is kept.
    """
    epsilon_policy = epsilon_policy or EpsilonPolicy()
    mixing = mixing_from_demixing(ilrma_result)  # (F, M, N)
    n_chan = mixing.shape[1]
    n_sources = n_chan if n_sources is None else n_sources
    if not 1 <= n_sources <= mixing.shape[2]:
        raise ConfigurationError(
            f"cannot initialize {n_sources} sources from {mixing.shape[2]} ILRMA sources"
        )

    speech = speech_anchor(x, anchor)  # unit norm
    norms = _column_norms(mixing)  # (F, N)
    similarity = np.abs(np.einsum('fmn,fm->fn', np.conj(mixing), speech)) / norms
    matched = int(np.argmax(np.mean(similarity, axis=0)))
    agrees = np.argmax(similarity, axis=1) == matched  # (F,)
    logger.debug(
        f"ILRMA source {matched} matched to the speech anchor; anchor used at "
        f"{int(np.sum(agrees))}/{len(agrees)} bins"
    )

    anchored = np.where(agrees[:, None], speech * norms[:, matched][:, None], mixing[:, :, matched])
    others = [n for n in range(mixing.shape[2]) if n != matched][: n_sources - 1]
    steering = [anchored] + [mixing[:, :, n] for n in others]
    steering = np.stack(steering)  # (N, F, M)

    outer = steering[..., :, None] * np.conj(steering[..., None, :])
    loading = epsilon_policy.epsilon(steering)
    return outer + loading[..., None, None] * np.eye(n_chan)


def initialize(x, config):
    """ILRMA-informed MNMF initialization, reproducible from ``config.seed``"""
    obs = observations(x)
    n_freq, n_frames, n_chan = obs.shape
    n_sources = config.n_sources or n_chan
    if n_sources > n_chan:
        raise ConfigurationError(
            f"{n_sources} sources requested but ILRMA initialization supports at most M={n_chan}"
        )
    ilrma_seed, factor_seed = np.random.SeedSequence(config.seed).spawn(2)
    demixing = ilrma_run(x, config.ilrma_bases, config.ilrma_iterations,
                         seed=ilrma_seed, reference=config.anchor_channel)
    spatial = init_spatial(x, demixing, EpsilonPolicy(config.init_loading),
                           n_sources=n_sources, anchor=config.anchor_channel)

    rng = np.random.default_rng(factor_seed)
    params = MnmfParams(
        basis=0.1 + 0.9 * rng.random((config.n_basis, n_freq)),
        activation=0.1 + 0.9 * rng.random((config.n_basis, n_frames)),
        weights=0.1 + 0.9 * rng.random((n_sources, config.n_basis)),
        spatial=spatial,
    )

    # match the overall model power to the observed power
    spatial_trace = np.real(np.trace(spatial, axis1=-2, axis2=-1))
    model_power = np.mean(np.einsum('nft,nf->ft', source_variances(params), spatial_trace))
    observed_power = np.mean(np.sum(np.abs(obs) ** 2, axis=-1))
    if model_power > 0 and observed_power > 0:
        params.activation *= observed_power / model_power
    return Initialization(params, demixing.cost_trace)


def initialize_params(x, config):
    return initialize(x, config).params


@dataclass
class SpatialEstimates:
    """
    Speech (P) and noise (Q) covariances.

    Time-variant fields are (F, T, M, M) and may be absent when only the
    time-invariant (F, M, M) estimates are known.
    """
    speech_ti: np.ndarray
    noise_ti: np.ndarray
    speech_tv: np.ndarray = None
    noise_tv: np.ndarray = None
    anchor: int = 0

    @property
    def n_channels(self):
        return self.speech_ti.shape[-1]

    def speech(self, mode):
        return self._pick(mode, self.speech_tv, self.speech_ti)

    def noise(self, mode):
        return self._pick(mode, self.noise_tv, self.noise_ti)

    @staticmethod
    def _pick(mode, variant, invariant):
        if TimeMode(mode) == TimeMode.TIME_INVARIANT:
            return invariant
        if variant is None:
            raise InvalidInputError("time-variant covariances are not available")
        return variant


class SteeringEstimate(NamedTuple):
    steering: np.ndarray  # unit-norm p, (F, M) or (F, T, M)
    power: np.ndarray     # lambda = ||P||_F


def extract_scms(p, speech_source=SPEECH_SOURCE, anchor=0):
    """P_ft from the speech source, Q_ft from all other sources, plus frame averages"""
    if not 0 <= speech_source < p.n_sources:
        raise InvalidInputError(f"speech source {speech_source} out of range for N={p.n_sources}")
    variance = source_variances(p)
    speech = variance[speech_source][..., None, None] * p.spatial[speech_source][:, None]
    noise = np.zeros_like(speech)
    for n in range(p.n_sources):
        if n != speech_source:
            noise += variance[n][..., None, None] * p.spatial[n][:, None]
    return SpatialEstimates(
        speech_ti=np.mean(speech, axis=1),
        noise_ti=np.mean(noise, axis=1),
        speech_tv=speech,
        noise_tv=noise,
        anchor=anchor,
    )


def extract_steering(est, mode=TimeMode.TIME_INVARIANT):
    """Principal eigenvector of P and lambda = ||P||_F"""
    speech = est.speech(mode)
    steering = principal_eigenvector(speech, anchor=est.anchor, check=False)
    power = np.linalg.norm(speech, ord='fro', axis=(-2, -1))
    return SteeringEstimate(steering, power)


def steering_outer(steering):
    return steering[..., :, None] * np.conj(steering[..., None, :])


def steering_cosine(estimated, planted):
    """|p^H q| / (||p|| ||q||) per frequency"""
    inner = np.abs(np.sum(np.conj(estimated) * planted, axis=-1))
    return inner / np.maximum(np.linalg.norm(estimated, axis=-1) * np.linalg.norm(planted, axis=-1), _NORM_MIN)
