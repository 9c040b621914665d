"""
Multichannel NMF with shared bases.

Each time-frequency covariance is modelled as

    Y_ft = sum_n lambda_nft G_nf,   lambda_nft = sum_k z_nk v_kf h_kt

and fitted to the rank-one observations X_ft = x_ft x_ft^H by minimizing the
log-determinant divergence with majorization-minimization. The model (and its
inverse) is recomputed before each factor family is updated, which keeps every
full sweep non-increasing in cost.

Arrays are laid out as V (K, F), H (K, T), Z (N, K), G (N, F, M, M) and the
observations as (F, T, M).
"""

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ..exceptions import InvalidInputError, NumericalFailureError
from .linalg import (
    check_hermitian,
    conj_transpose,
    hermitize,
    inverse_and_logdet,
    riccati_solution,
)
from .parallel import frequency_map
from .stft import spectral_data

logger = logging.getLogger(__name__)

FACTOR_FLOOR = 1e-12
FULL_RANK_RELATIVE = 1e-12
DEFAULT_BASES = 25
DEFAULT_OFFLINE_ITERATIONS = 100
DEFAULT_RHO = 0.9


@dataclass
class MnmfParams:
    basis: np.ndarray        # V (K, F)
    activation: np.ndarray   # H (K, T)
    weights: np.ndarray      # Z (N, K)
    spatial: np.ndarray      # G (N, F, M, M)

    @property
    def n_basis(self):
        return self.basis.shape[0]

    @property
    def n_freq(self):
        return self.basis.shape[1]

    @property
    def n_frames(self):
        return self.activation.shape[1]

    @property
    def n_sources(self):
        return self.weights.shape[0]

    @property
    def n_channels(self):
        return self.spatial.shape[-1]

    def copy(self):
        return MnmfParams(self.basis.copy(), self.activation.copy(),
                          self.weights.copy(), self.spatial.copy())

    def validate(self):
        k, f = self.basis.shape
        if self.activation.shape[0] != k or self.weights.shape[1] != k:
            raise InvalidInputError("basis count differs between V, H and Z")
        if self.spatial.shape[:2] != (self.n_sources, f):
            raise InvalidInputError(
                f"spatial covariances shaped {self.spatial.shape}, expected ({self.n_sources}, {f}, M, M)"
            )
        for name in ('basis', 'activation', 'weights'):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise InvalidInputError(f"{name} must be finite and nonnegative")
        check_hermitian(self.spatial)
        return self

    @classmethod
    def random(cls, n_basis, n_sources, n_freq, n_frames, n_channels, rng=None):
        """Uniform [0.1, 1) factors with random well-conditioned spatial covariances"""
        rng = np.random.default_rng(rng)
        basis = 0.1 + 0.9 * rng.random((n_basis, n_freq))
        activation = 0.1 + 0.9 * rng.random((n_basis, n_frames))
        weights = 0.1 + 0.9 * rng.random((n_sources, n_basis))
        shape = (n_sources, n_freq, n_channels, n_channels)
        a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        spatial = hermitize(a @ conj_transpose(a) / n_channels + 0.1 * np.eye(n_channels))
        return cls(basis, activation, weights, spatial)


class ModelField(NamedTuple):
    """Model covariances Y (F, T, M, M) with the source variances lambda (N, F, T)"""
    covariance: np.ndarray
    variance: np.ndarray


class MnmfFit(NamedTuple):
    params: MnmfParams
    cost_trace: list


class _ModelTerms(NamedTuple):
    variance: np.ndarray    # lambda (N, F, T)
    inverse: np.ndarray     # Y^-1 (F, T, M, M)
    logdet: np.ndarray      # log det Y (F, T)
    whitened: np.ndarray    # b = Y^-1 x (F, T, M)
    numerator: np.ndarray   # b^H G_n b = tr(Y^-1 X Y^-1 G_n), (N, F, T)
    denominator: np.ndarray  # tr(Y^-1 G_n), (N, F, T)


def source_variances(p):
    return np.einsum('nk,kf,kt->nft', p.weights, p.basis, p.activation)


def compute_model(p):
    variance = source_variances(p)
    covariance = np.einsum('nft,nfij->ftij', variance, p.spatial)
    return ModelField(hermitize(covariance), variance)


def observations(x):
    """Observation vectors (F, T, M) from a Spectrogram or array"""
    data = np.asarray(spectral_data(x), dtype=np.complex128)
    if data.ndim == 2:
        data = data[..., None]
    if data.ndim != 3:
        raise InvalidInputError(f"observations must be (F, T, M), got shape {data.shape}")
    return data


def _model_terms(p, obs):
    variance = source_variances(p)
    covariance = hermitize(np.einsum('nft,nfij->ftij', variance, p.spatial))
    inverse, logdet = frequency_map(inverse_and_logdet, covariance)
    whitened = (inverse @ obs[..., None])[..., 0]
    numerator = np.empty_like(variance)
    denominator = np.empty_like(variance)
    for n in range(p.n_sources):
        projected = np.einsum('fij,ftj->fti', p.spatial[n], whitened)
        numerator[n] = np.real(np.sum(np.conj(whitened) * projected, axis=-1))
        denominator[n] = np.real(np.einsum('ftij,fji->ft', inverse, p.spatial[n]))
    return _ModelTerms(variance, inverse, logdet, whitened, numerator, denominator)


def _observation_logdet(obs):
    # log det X for full-rank X; X = x x^H is rank one unless M == 1
    if obs.shape[-1] != 1:
        return np.zeros(obs.shape[:2])
    power = np.abs(obs[..., 0]) ** 2
    return np.where(power > 0, np.log(np.where(power > 0, power, 1.0)), 0.0)


def _fit_cost(obs, terms):
    per_bin = (np.real(np.sum(np.conj(obs) * terms.whitened, axis=-1))
               + terms.logdet - obs.shape[-1] - _observation_logdet(obs))
    _check_cost(per_bin)
    return float(np.sum(per_bin))


def _check_cost(per_bin):
    bad = ~np.isfinite(per_bin)
    if np.any(bad):
        raise NumericalFailureError("cost is not finite", index=tuple(np.argwhere(bad)[0]))


def cost_logdet(x_field, y_field):
    """
    Log-determinant divergence summed over bins.

    Per bin: tr(X Y^-1) + log det Y - M - c(X) with c(X) = log det X when X is
    full rank and 0 otherwise, so rank-one observations contribute only the
    terms that depend on Y.
    """
    x_field = np.asarray(x_field)
    y_field = np.asarray(getattr(y_field, 'covariance', y_field))
    if x_field.shape != y_field.shape:
        raise InvalidInputError(f"shape mismatch: X {x_field.shape} vs Y {y_field.shape}")
    m = x_field.shape[-1]
    y_inverse, y_logdet = inverse_and_logdet(y_field)
    trace = np.real(np.einsum('...ij,...ji->...', x_field, y_inverse))

    x_values = np.linalg.eigvalsh(hermitize(x_field))
    top = x_values[..., -1]
    full_rank = (top > 0) & (x_values[..., 0] > FULL_RANK_RELATIVE * top)
    safe = np.where(full_rank[..., None], x_values, 1.0)
    x_logdet = np.where(full_rank, np.sum(np.log(safe), axis=-1), 0.0)

    per_bin = trace + y_logdet - m - x_logdet
    _check_cost(np.atleast_1d(per_bin))
    return float(np.sum(per_bin))


def fit_cost(p, x):
    """Cost of params ``p`` against the observations in ``x``"""
    obs = observations(x)
    return _fit_cost(obs, _model_terms(p, obs))


def _multiplicative(factor, numerator, denominator):
    valid = denominator > 0
    ratio = np.where(valid, numerator / np.where(valid, denominator, 1.0), 1.0)
    updated = factor * np.sqrt(np.maximum(ratio, 0.0))
    if not np.all(np.isfinite(updated)):
        raise NumericalFailureError("multiplicative update produced non-finite values")
    return np.maximum(updated, FACTOR_FLOOR)


def _basis_statistics(p, terms):
    # numerator and denominator sums for v_kf
    return (np.einsum('nk,kt,nft->kf', p.weights, p.activation, terms.numerator),
            np.einsum('nk,kt,nft->kf', p.weights, p.activation, terms.denominator))


def _activation_statistics(p, terms):
    return (np.einsum('nk,kf,nft->kt', p.weights, p.basis, terms.numerator),
            np.einsum('nk,kf,nft->kt', p.weights, p.basis, terms.denominator))


def _weight_statistics(p, terms):
    return (np.einsum('kf,kt,nft->nk', p.basis, p.activation, terms.numerator),
            np.einsum('kf,kt,nft->nk', p.basis, p.activation, terms.denominator))


def _spatial_statistics(p, terms):
    n_sources, n_freq, m, _ = p.spatial.shape
    phi = np.empty(p.spatial.shape, dtype=np.complex128)
    psi = np.empty(p.spatial.shape, dtype=np.complex128)
    for n in range(n_sources):
        weighted = terms.whitened * terms.variance[n][..., None]
        phi[n] = np.swapaxes(weighted, 1, 2) @ np.conj(terms.whitened)
        psi[n] = np.einsum('ft,ftij->fij', terms.variance[n], terms.inverse)
    return hermitize(phi), hermitize(psi)


def spatial_statistics(p, x):
    """Phi_nf = sum_t lambda Y^-1 X Y^-1 and Psi_nf = sum_t lambda Y^-1"""
    obs = observations(x)
    return _spatial_statistics(p, _model_terms(p, obs))


def _solve_spatial(target, psi):
    n_sources, n_freq, m, _ = target.shape
    flat = frequency_map(riccati_solution, target.reshape(-1, m, m), psi.reshape(-1, m, m))
    spatial = flat.reshape(target.shape)
    if not np.all(np.isfinite(spatial)):
        bad = ~np.all(np.isfinite(spatial), axis=(-1, -2))
        raise NumericalFailureError("spatial covariance update is not finite",
                                    index=tuple(np.argwhere(bad)[0]))
    return spatial


def update_basis(p, x):
    obs = observations(x)
    num, den = _basis_statistics(p, _model_terms(p, obs))
    return replace(p, basis=_multiplicative(p.basis, num, den))


def update_activation(p, x):
    obs = observations(x)
    num, den = _activation_statistics(p, _model_terms(p, obs))
    return replace(p, activation=_multiplicative(p.activation, num, den))


def update_weights(p, x):
    obs = observations(x)
    num, den = _weight_statistics(p, _model_terms(p, obs))
    return replace(p, weights=_multiplicative(p.weights, num, den))


def update_nmf_factors(p, x):
    """V, then H, then Z, each against a freshly recomputed model"""
    p = update_basis(p, x)
    p = update_activation(p, x)
    return update_weights(p, x)


def update_spatial(p, x):
    """G_nf <- Psi^-1 # (G Phi G), the solution of G Psi G = G_old Phi G_old"""
    phi, psi = spatial_statistics(p, x)
    target = hermitize(p.spatial @ phi @ p.spatial)
    return replace(p, spatial=_solve_spatial(target, psi))


def _sweep(p, obs, terms=None):
    """V, H, Z then G, each against a fresh model; returns the params and the terms at them"""
    if terms is None:
        terms = _model_terms(p, obs)
    num, den = _basis_statistics(p, terms)
    p = replace(p, basis=_multiplicative(p.basis, num, den))
    num, den = _activation_statistics(p, _model_terms(p, obs))
    p = replace(p, activation=_multiplicative(p.activation, num, den))
    num, den = _weight_statistics(p, _model_terms(p, obs))
    p = replace(p, weights=_multiplicative(p.weights, num, den))
    phi, psi = _spatial_statistics(p, _model_terms(p, obs))
    p = replace(p, spatial=_solve_spatial(hermitize(p.spatial @ phi @ p.spatial), psi))
    return p, _model_terms(p, obs)


def update_sweep(p, x):
    return _sweep(p, observations(x))[0]


def offline_fit(x, config, params=None):
    """
    Batch MNMF fit.

    ``params`` defaults to the ILRMA-informed initialization. The cost trace
    holds the initial cost followed by the cost after every sweep.
    """
    obs = observations(x)
    if obs.shape[1] == 0:
        raise InvalidInputError("cannot fit MNMF to an empty spectrogram")
    if params is None:
        from .spatial import initialize_params
        params = initialize_params(x, config)

    iterations = config.offline_iterations
    terms = _model_terms(params, obs)
    trace = [_fit_cost(obs, terms)]
    for iteration in range(iterations):
        params, terms = _sweep(params, obs, terms)
        trace.append(_fit_cost(obs, terms))
        logger.debug(f"MNMF iteration {iteration + 1}/{iterations}: cost {trace[-1]:.6e}")
        if (iteration + 1) % 10 == 0:
            logger.info(f"MNMF iteration {iteration + 1}/{iterations}: cost {trace[-1]:.6e}")
    return MnmfFit(params, trace)


@dataclass
class BatchStatistics:
    """Sufficient statistics of one mini-batch at fixed parameters"""
    alpha: np.ndarray   # (K, F)
    beta: np.ndarray    # (K, F)
    gamma: np.ndarray   # (N, K)
    delta: np.ndarray   # (N, K)
    phi: np.ndarray     # (N, F, M, M)
    psi: np.ndarray     # (N, F, M, M)


def batch_statistics(p, x_batch):
    obs = observations(x_batch)
    return _batch_statistics(p, _model_terms(p, obs))


def _batch_statistics(p, terms):
    alpha, beta = _basis_statistics(p, terms)
    gamma, delta = _weight_statistics(p, terms)
    phi, psi = _spatial_statistics(p, terms)
    return BatchStatistics(alpha, beta, gamma, delta, phi, psi)


@dataclass
class OnlineStats:
    """
    Forgetting-weighted accumulators carried between mini-batches.

    ``weighted_alpha``, ``weighted_gamma`` and ``weighted_phi`` hold the
    parameter-weighted products v^2 alpha, z^2 gamma and G Phi G taken at
    fold time; the remaining fields accumulate the raw statistics.
    """
    rho: float = DEFAULT_RHO
    accumulation: str = 'recursive'
    alpha: np.ndarray = None
    beta: np.ndarray = None
    gamma: np.ndarray = None
    delta: np.ndarray = None
    phi: np.ndarray = None
    psi: np.ndarray = None
    weighted_alpha: np.ndarray = None
    weighted_gamma: np.ndarray = None
    weighted_phi: np.ndarray = None
    batches: int = 0

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise InvalidInputError(f"forgetting weight must lie in [0, 1], got {self.rho}")
        if self.accumulation not in ('recursive', 'previous'):
            raise InvalidInputError(f"unknown accumulation mode '{self.accumulation}'")

    @classmethod
    def zeros(cls, p, rho=DEFAULT_RHO, accumulation='recursive'):
        k, f = p.basis.shape
        n = p.n_sources
        spatial = np.zeros(p.spatial.shape, dtype=np.complex128)
        return cls(
            rho=rho, accumulation=accumulation,
            alpha=np.zeros((k, f)), beta=np.zeros((k, f)),
            gamma=np.zeros((n, k)), delta=np.zeros((n, k)),
            phi=spatial.copy(), psi=spatial.copy(),
            weighted_alpha=np.zeros((k, f)), weighted_gamma=np.zeros((n, k)),
            weighted_phi=spatial.copy(),
        )

    def prior(self, name):
        """rho-weighted accumulator entering the current batch's update"""
        return self.rho * getattr(self, name)

    def folded(self, p, current):
        """Accumulators after absorbing ``current`` evaluated at the final ``p``"""
        weighted = {
            'alpha': current.alpha, 'beta': current.beta,
            'gamma': current.gamma, 'delta': current.delta,
            'phi': current.phi, 'psi': current.psi,
            'weighted_alpha': p.basis ** 2 * current.alpha,
            'weighted_gamma': p.weights ** 2 * current.gamma,
            'weighted_phi': hermitize(p.spatial @ current.phi @ p.spatial),
        }
        if self.accumulation == 'recursive':
            weighted = {name: value + self.prior(name) for name, value in weighted.items()}
        folded = replace(self, batches=self.batches + 1, **weighted)
        for name, value in weighted.items():
            if not np.all(np.isfinite(value)):
                raise NumericalFailureError(f"online accumulator {name} is not finite")
        return folded


def online_update(stats, p, x_batch, iterations):
    """
    One mini-batch of online MNMF.

    ``p.activation`` covers only the batch frames. Each inner iteration updates
    V, H, Z and G in turn, combining current-batch statistics with the
    rho-weighted accumulators; the accumulators are folded once, after the
    final inner iteration.
    """
    obs = observations(x_batch)
    if obs.shape[1] == 0:
        raise InvalidInputError("online update needs a non-empty mini-batch")
    if p.n_frames != obs.shape[1]:
        raise InvalidInputError(
            f"activations cover {p.n_frames} frames but the batch has {obs.shape[1]}"
        )
    if stats.alpha is None:
        stats = OnlineStats.zeros(p, stats.rho, stats.accumulation)

    terms = _model_terms(p, obs)
    for _ in range(iterations):
        # v <- sqrt((v^2 alpha + rho S) / (beta + rho S))
        num, den = _basis_statistics(p, terms)
        num = num + stats.prior('weighted_alpha') / p.basis ** 2
        p = replace(p, basis=_multiplicative(p.basis, num, den + stats.prior('beta')))

        num, den = _activation_statistics(p, _model_terms(p, obs))
        p = replace(p, activation=_multiplicative(p.activation, num, den))

        num, den = _weight_statistics(p, _model_terms(p, obs))
        num = num + stats.prior('weighted_gamma') / p.weights ** 2
        p = replace(p, weights=_multiplicative(p.weights, num, den + stats.prior('delta')))

        phi, psi = _spatial_statistics(p, _model_terms(p, obs))
        target = hermitize(p.spatial @ phi @ p.spatial) + stats.prior('weighted_phi')
        p = replace(p, spatial=_solve_spatial(target, psi + stats.prior('psi')))
        terms = _model_terms(p, obs)

    stats = stats.folded(p, _batch_statistics(p, terms))
    logger.debug(f"Folded mini-batch {stats.batches} ({obs.shape[1]} frames) into online statistics")
    return stats, p
