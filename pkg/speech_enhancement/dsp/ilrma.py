"""
Determined blind source separation by independent low-rank matrix analysis.

Only used to initialize the MNMF spatial covariances. Each source gets a small
Itakura-Saito NMF model of its power spectrogram and the demixing matrices are
refined by iterative projection. Per-iteration power normalization keeps the
negative log-likelihood unchanged, so the recorded trace is non-increasing.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EstimationFailureError, InvalidInputError, SingularMatrixError
from .linalg import conj_transpose, regularize
from .stft import spectral_data

logger = logging.getLogger(__name__)

DEFAULT_BASES = 2
DEFAULT_ITERATIONS = 50
NMF_FLOOR = 1e-12
CONDITION_LIMIT = 1e12
PROJECTION_MIN = 1e-12


@dataclass
class DemixingMatrixField:
    """Demixing matrices W_f shaped (F, M, N); source n is y_n = w_n^H x"""
    demixing: np.ndarray
    cost_trace: list = field(default_factory=list)
    reference: int = 0

    @property
    def n_freq(self):
        return self.demixing.shape[0]

    @property
    def n_sources(self):
        return self.demixing.shape[2]


def negative_log_likelihood(power, variance, demixing):
    """
    ILRMA objective: sum(|y|^2 / r + log r) - 2 T sum_f log|det W_f|.

    ``power`` and ``variance`` are shaped (N, F, T).
    """
    n_frames = power.shape[-1]
    _, logabsdet = np.linalg.slogdet(demixing)
    return float(np.sum(power / variance + np.log(variance)) - 2 * n_frames * np.sum(logabsdet))


def _demix(demixing, xc):
    # (F, N, T) -> (N, F, T) powers
    y = conj_transpose(demixing) @ xc
    return np.abs(np.transpose(y, (1, 0, 2))) ** 2


def _weighted_covariance(xc, variance):
    # U_f = (1/T) sum_t x x^H / r
    n_frames = xc.shape[-1]
    u = (xc / variance[:, None, :]) @ conj_transpose(xc) / n_frames
    condition = np.linalg.cond(u)
    bad = ~np.isfinite(condition) | (condition > CONDITION_LIMIT)
    if np.any(bad):
        logger.warning(f"Regularizing weighted covariance at {int(np.sum(bad))} frequency bins")
        u[bad] = regularize(u[bad])
    return u


def _projection_update(demixing, u, n):
    """w_n <- (W^H U)^-1 e_n, then w_n <- w_n / sqrt(w_n^H U w_n)"""
    n_freq, n_chan, _ = demixing.shape
    unit = np.zeros((n_freq, n_chan))
    unit[:, n] = 1.0
    try:
        w = np.linalg.solve(conj_transpose(demixing) @ u, unit[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise EstimationFailureError(f"iterative projection failed for source {n}: {exc}") from exc
    scale = np.real(np.einsum('fi,fij,fj->f', np.conj(w), u, w))
    bad = ~np.isfinite(scale) | (scale <= 0) | ~np.all(np.isfinite(w), axis=-1)
    if np.any(bad):
        raise EstimationFailureError(
            f"iterative projection produced an invalid filter for source {n}",
            index=(int(np.argmax(bad)),),
        )
    demixing[:, :, n] = w / np.sqrt(scale)[:, None]


def _nmf_update(power, basis, activation):
    """One Itakura-Saito multiplicative update of (basis, activation) for one source"""
    variance = basis @ activation
    basis *= np.sqrt(((power / variance ** 2) @ activation.T) / ((1 / variance) @ activation.T))
    np.maximum(basis, NMF_FLOOR, out=basis)
    variance = basis @ activation
    activation *= np.sqrt((basis.T @ (power / variance ** 2)) / (basis.T @ (1 / variance)))
    np.maximum(activation, NMF_FLOOR, out=activation)
    return basis @ activation


def ilrma_run(x, k_il=DEFAULT_BASES, iterations=DEFAULT_ITERATIONS, seed=None, reference=0):
    """
    Estimate demixing matrices for the determined case (N = M).

    After the last iteration each demixing column is projected back onto the
    ``reference`` channel so the implied mixing matrices carry physical scale.
    """
    data = spectral_data(x)
    n_freq, n_frames, n_chan = data.shape
    if n_frames < n_chan:
        raise InvalidInputError(f"ILRMA needs at least {n_chan} frames, got {n_frames}")
    if k_il < 1:
        raise InvalidInputError(f"ILRMA needs at least one basis, got {k_il}")

    rng = np.random.default_rng(seed)
    xc = np.ascontiguousarray(np.transpose(data, (0, 2, 1)))  # (F, M, T)
    demixing = np.tile(np.eye(n_chan, dtype=np.complex128), (n_freq, 1, 1))
    basis = 0.1 + 0.9 * rng.random((n_chan, n_freq, k_il))
    activation = 0.1 + 0.9 * rng.random((n_chan, k_il, n_frames))
    variance = basis @ activation
    power = _demix(demixing, xc)

    trace = [negative_log_likelihood(power, variance, demixing)]
    for epoch in range(iterations):
        for n in range(n_chan):
            variance[n] = _nmf_update(power[n], basis[n], activation[n])
            _projection_update(demixing, _weighted_covariance(xc, variance[n]), n)

        power = _demix(demixing, xc)
        mean_power = np.mean(power, axis=(1, 2))
        if np.any(~np.isfinite(mean_power)):
            raise EstimationFailureError(f"separated source power is not finite at iteration {epoch}")
        # a silent source (e.g. a dead channel) keeps its scale
        live = mean_power > 0
        scale = np.where(live, 1 / np.sqrt(np.where(live, mean_power, 1.0)), 1.0)
        demixing *= scale[None, None, :]
        power *= scale[:, None, None] ** 2
        variance *= scale[:, None, None] ** 2
        basis *= scale[:, None, None] ** 2

        trace.append(negative_log_likelihood(power, variance, demixing))
        logger.debug(f"ILRMA iteration {epoch + 1}/{iterations}: cost {trace[-1]:.6e}")

    demixing = _project_back(demixing, reference)
    logger.info(f"ILRMA finished {iterations} iterations on {n_freq} bins x {n_frames} frames")
    return DemixingMatrixField(demixing, trace, reference)


def _project_back(demixing, reference):
    # pinv keeps ill-conditioned bins (e.g. a silent channel) from aborting the run
    mixing = np.linalg.pinv(conj_transpose(demixing))
    anchor = mixing[:, reference, :]  # (F, N)
    anchor = np.where(np.abs(anchor) < PROJECTION_MIN, 1.0, anchor)
    return demixing * np.conj(anchor)[:, None, :]


def mixing_from_demixing(w):
    """Mixing matrices G_f = W_f^-H, shaped (F, M, N)"""
    demixing = w.demixing if isinstance(w, DemixingMatrixField) else np.asarray(w)
    if demixing.ndim == 2:
        demixing = demixing[None]
    condition = np.linalg.cond(demixing)
    bad = ~np.isfinite(condition) | (condition > CONDITION_LIMIT)
    if np.any(bad):
        raise SingularMatrixError("demixing matrix is singular", index=(int(np.argmax(bad)),))
    try:
        return np.linalg.inv(conj_transpose(demixing))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"demixing matrix is singular: {exc}") from exc
