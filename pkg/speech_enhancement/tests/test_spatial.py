import numpy as np
from numpy.testing import assert_allclose
from django.test import SimpleTestCase

from speech_enhancement.config import EnhanceConfig
from speech_enhancement.dsp.harness import SceneSpec, synth_scene
from speech_enhancement.dsp.linalg import principal_eigenvector
from speech_enhancement.dsp.mnmf import MnmfParams, compute_model, source_variances
from speech_enhancement.dsp.spatial import (
    EpsilonPolicy,
    SpatialEstimates,
    extract_scms,
    extract_steering,
    init_spatial,
    initialize,
    steering_cosine,
    steering_outer,
)
from speech_enhancement.dsp.stft import stft_forward
from speech_enhancement.exceptions import ConfigurationError, DegenerateMatrixError, InvalidInputError

F, T = 9, 40


def complex_noise(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def identity_demixing(m, n_freq=F):
    return np.tile(np.eye(m, dtype=complex), (n_freq, 1, 1))


def demixing_for(mixing):
    """Demixing W_f whose implied mixing matrices W_f^-H are ``mixing``"""
    return np.conj(np.swapaxes(np.linalg.inv(mixing), -1, -2))


class EpsilonPolicyTests(SimpleTestCase):
    def test_absolute_loading_trace(self):
        rng = np.random.default_rng(0)
        x = complex_noise(rng, (F, T, 3))
        g = init_spatial(x, identity_demixing(3), EpsilonPolicy(0.01, relative=False))
        traces = np.real(np.trace(g, axis1=-2, axis2=-1))
        assert_allclose(traces, 1 + 0.01 * 3, rtol=1e-12)

    def test_relative_loading_scales_with_norm(self):
        g = np.array([[3.0, 4.0]])
        assert_allclose(EpsilonPolicy(0.01).epsilon(g), [0.01 * 25 / 2])
        assert_allclose(EpsilonPolicy(0.01, relative=False).epsilon(g), [0.01])


class InitSpatialTests(SimpleTestCase):
    def test_single_channel(self):
        rng = np.random.default_rng(1)
        x = complex_noise(rng, (F, T, 1))
        g = init_spatial(x, np.full((F, 1, 1), 2.0 + 0j))
        # |g|^2 = 0.25 plus relative loading
        assert_allclose(np.real(g[..., 0, 0]), 0.25 * 1.01, rtol=1e-12)
        self.assertEqual(g.shape, (1, F, 1, 1))

    def test_planted_speech_steering_recovered(self):
        rng = np.random.default_rng(2)
        planted = complex_noise(rng, (F, 3))
        planted /= np.linalg.norm(planted, axis=-1, keepdims=True)
        s = complex_noise(rng, (F, T))
        x = planted[:, None, :] * s[..., None]
        mixing = complex_noise(rng, (F, 3, 3))
        mixing[:, :, 1] = 2.0 * planted
        g = init_spatial(x, demixing_for(mixing))
        recovered = principal_eigenvector(g[0])
        self.assertTrue(np.all(steering_cosine(recovered, planted) >= 0.99))
        # rescaled to the replaced column's norm
        assert_allclose(np.real(np.trace(g[0], axis1=-2, axis2=-1)), 4.0 * 1.01, rtol=1e-10)

    def test_anchor_skips_bins_dominated_by_another_source(self):
        rng = np.random.default_rng(12)
        speech_dir, noise_dir = np.eye(2, dtype=complex)
        gains = np.where(np.arange(F) < 3, 0.1, 10.0)[:, None, None]
        x = (gains * speech_dir * complex_noise(rng, (F, T))[..., None]
             + noise_dir * complex_noise(rng, (F, T))[..., None])
        mixing = np.tile(np.array([[1.0, 0.3], [0.2, 1.0]], dtype=complex), (F, 1, 1))
        g = init_spatial(x, demixing_for(mixing), EpsilonPolicy(0.0))
        steering = principal_eigenvector(g[0])
        # noise-dominated bins keep the ILRMA column of the matched source
        assert_allclose(steering_cosine(steering[:3], mixing[:3, :, 0]), 1.0, rtol=1e-10)
        self.assertTrue(np.all(steering_cosine(steering[3:], speech_dir) > 0.99))

    def test_matched_source_moves_to_front(self):
        rng = np.random.default_rng(3)
        x = complex_noise(rng, (F, T, 3)) * np.array([0.01, 1.0, 0.01])
        g = init_spatial(x, identity_demixing(3), EpsilonPolicy(0.0))
        e = np.eye(3)
        assert_allclose(np.abs(g[1]), np.broadcast_to(np.outer(e[0], e[0]), (F, 3, 3)), atol=1e-12)
        assert_allclose(np.abs(g[2]), np.broadcast_to(np.outer(e[2], e[2]), (F, 3, 3)), atol=1e-12)
        self.assertTrue(np.all(np.abs(principal_eigenvector(g[0])[:, 1]) > 0.99))

    def test_fewer_sources_keeps_speech_first(self):
        rng = np.random.default_rng(4)
        x = complex_noise(rng, (F, T, 3))
        self.assertEqual(init_spatial(x, identity_demixing(3), n_sources=2).shape, (2, F, 3, 3))

    def test_too_many_sources(self):
        x = complex_noise(np.random.default_rng(5), (F, T, 2))
        with self.assertRaises(ConfigurationError):
            init_spatial(x, identity_demixing(2), n_sources=3)


class InitializeTests(SimpleTestCase):
    config = EnhanceConfig(n_basis=3, ilrma_iterations=3, seed=7)

    def test_shapes_power_and_determinism(self):
        x = complex_noise(np.random.default_rng(6), (F, T, 2))
        first = initialize(x, self.config)
        second = initialize(x, self.config)
        p = first.params
        self.assertEqual(p.basis.shape, (3, F))
        self.assertEqual(p.activation.shape, (3, T))
        self.assertEqual(p.weights.shape, (2, 3))
        self.assertEqual(p.spatial.shape, (2, F, 2, 2))
        self.assertEqual(len(first.ilrma_cost_trace), 4)
        self.assertTrue(np.array_equal(p.spatial, second.params.spatial))
        self.assertTrue(np.array_equal(p.activation, second.params.activation))

        trace = np.real(np.trace(p.spatial, axis1=-2, axis2=-1))
        model_power = np.mean(np.einsum('nft,nf->ft', source_variances(p), trace))
        assert_allclose(model_power, np.mean(np.sum(np.abs(x) ** 2, axis=-1)), rtol=1e-10)

    def test_more_sources_than_channels(self):
        x = complex_noise(np.random.default_rng(7), (F, T, 2))
        with self.assertRaises(ConfigurationError):
            initialize(x, EnhanceConfig(n_sources=3, ilrma_iterations=1))

    def test_speech_source_starts_on_the_talker(self):
        truth = synth_scene(SceneSpec(n_mics=2, duration=2.0, seed=4))
        x = stft_forward(truth.mixture)
        p = initialize(x, EnhanceConfig(ilrma_iterations=20)).params
        steering = principal_eigenvector(p.spatial[0], check=False)
        cosine = steering_cosine(steering, truth.steering[0])
        power = np.sum(np.abs(stft_forward(truth.target).data) ** 2, axis=(1, 2))
        self.assertGreaterEqual(np.sum(power * cosine) / np.sum(power), 0.95)


class ExtractScmsTests(SimpleTestCase):
    def test_single_source_has_no_noise(self):
        p = MnmfParams.random(2, 1, F, 5, 2, np.random.default_rng(8))
        est = extract_scms(p)
        self.assertFalse(np.any(est.noise_tv))
        self.assertFalse(np.any(est.noise_ti))

    def test_scalar_arithmetic(self):
        p = MnmfParams(np.array([[2.0]]), np.array([[3.0]]), np.array([[1.0], [0.5]]),
                       np.array([[[[1.0]]], [[[4.0]]]], dtype=complex))
        est = extract_scms(p)
        assert_allclose(est.speech_tv[0, 0], [[6.0]])
        assert_allclose(est.noise_tv[0, 0], [[12.0]])

    def test_decomposition_and_time_average(self):
        p = MnmfParams.random(4, 3, F, 6, 3, np.random.default_rng(9))
        est = extract_scms(p)
        y = compute_model(p).covariance
        total = est.speech_tv + est.noise_tv
        rel = np.linalg.norm(total - y, axis=(-1, -2)) / np.linalg.norm(y, axis=(-1, -2))
        self.assertLess(rel.max(), 1e-10)
        assert_allclose(est.speech_ti, np.mean(est.speech_tv, axis=1))
        assert_allclose(est.noise_ti, np.mean(est.noise_tv, axis=1))

    def test_speech_source_out_of_range(self):
        with self.assertRaises(InvalidInputError):
            extract_scms(MnmfParams.random(1, 2, F, 2, 2), speech_source=2)


class ExtractSteeringTests(SimpleTestCase):
    def test_rank_one_power_is_eigenvalue(self):
        p = np.array([1.0, 1j, -1.0]) / np.sqrt(3)
        speech = 4 * steering_outer(p)[None]
        result = extract_steering(SpatialEstimates(speech, np.zeros_like(speech)))
        assert_allclose(result.steering[0], p, atol=1e-12)
        assert_allclose(result.power, [4.0], rtol=1e-9)

    def test_diagonal(self):
        speech = np.diag([2.0, 1.0]).astype(complex)[None]
        result = extract_steering(SpatialEstimates(speech, np.zeros_like(speech)))
        assert_allclose(np.abs(result.steering[0]), [1.0, 0.0], atol=1e-12)
        assert_allclose(result.power, [np.sqrt(5)])

    def test_zero_speech_is_degenerate(self):
        speech = np.zeros((1, 2, 2), dtype=complex)
        with self.assertRaises(DegenerateMatrixError):
            extract_steering(SpatialEstimates(speech, speech))

    def test_time_variant_requires_frames(self):
        speech = np.eye(2, dtype=complex)[None]
        with self.assertRaises(InvalidInputError):
            extract_steering(SpatialEstimates(speech, speech), mode='time-variant')

    def test_time_variant_shapes(self):
        est = extract_scms(MnmfParams.random(2, 2, F, 4, 2, np.random.default_rng(10)))
        result = extract_steering(est, mode='time-variant')
        self.assertEqual(result.steering.shape, (F, 4, 2))
        self.assertEqual(result.power.shape, (F, 4))
