import numpy as np
import pytest
from numpy.testing import assert_allclose
from django.test import SimpleTestCase

from speech_enhancement.choices import BeamformerFamily
from speech_enhancement.config import EnhanceConfig
from speech_enhancement.dsp.harness import SI_SDR_CAP, SceneSpec, si_sdr, synth_scene
from speech_enhancement.dsp.mnmf import MnmfParams, offline_fit
from speech_enhancement.dsp.spatial import extract_scms, extract_steering, steering_cosine
from speech_enhancement.dsp.stft import WaveformBlock, covered_samples, frame_count, stft_forward
from speech_enhancement.exceptions import InvalidInputError
from speech_enhancement.pipeline import (
    CumulativeScms,
    OnlineEnhancer,
    enhance_offline,
    enhance_online,
    iter_blocks,
    plan_minibatches,
    score_output,
)

# 2 s scenes framed at window 256 / hop 64 give 497 frames
SMALL = dict(
    window_len=256, hop=64, n_basis=4, offline_iterations=5,
    first_inner_iterations=5, inner_iterations=2, ilrma_iterations=5,
    first_batch_seconds=0.5, batch_seconds=0.2,
)
SPEECH_ONLY_CLAMP_DB = 20.0


def small_config(**overrides):
    return EnhanceConfig(**{**SMALL, **overrides}).validate()


def small_scene(seed=0, n_mics=3):
    return synth_scene(SceneSpec(n_mics=n_mics, duration=2.0, seed=seed))


def speech_weighted_cosine(truth, steering):
    """Steering agreement with the planted speech direction, averaged over bins by speech power"""
    power = np.sum(np.abs(stft_forward(truth.target).data) ** 2, axis=(1, 2))
    return float(np.sum(power * steering_cosine(steering, truth.steering[0])) / np.sum(power))


class PlanMinibatchTests(SimpleTestCase):
    def test_default_thirty_seconds(self):
        cfg = EnhanceConfig()
        self.assertEqual((cfg.first_batch_frames, cfg.batch_frames), (1000, 50))
        n_frames = frame_count(30 * 16000)
        self.assertEqual(n_frames, 2994)
        plan = plan_minibatches(n_frames, 1000, 50)
        self.assertEqual(plan.n_batches, 41)
        self.assertEqual(plan.ranges[0], (0, 1000))
        self.assertEqual(plan.ranges[-1], (2950, 2994))
        self.assertEqual(plan.n_frames, 2994)

    def test_ranges_are_contiguous(self):
        plan = plan_minibatches(1337, 400, 60)
        for (_, stop), (start, _) in zip(plan.ranges, plan.ranges[1:]):
            self.assertEqual(stop, start)

    def test_tail_rule(self):
        self.assertEqual(plan_minibatches(1030, 1000, 50).ranges, [(0, 1000), (1000, 1030)])
        self.assertEqual(plan_minibatches(1020, 1000, 50).ranges, [(0, 1020)])
        self.assertEqual(plan_minibatches(1120, 1000, 50).ranges, [(0, 1000), (1000, 1050), (1050, 1120)])

    def test_short_streams(self):
        self.assertEqual(plan_minibatches(800, 1000, 50).ranges, [(0, 800)])
        self.assertEqual(plan_minibatches(1000, 1000, 50).ranges, [(0, 1000)])

    def test_invalid(self):
        with self.assertRaises(InvalidInputError):
            plan_minibatches(0, 1000, 50)
        with self.assertRaises(InvalidInputError):
            plan_minibatches(100, 0, 50)


class CumulativeScmsTests(SimpleTestCase):
    def test_single_batch_is_frame_mean(self):
        est = extract_scms(MnmfParams.random(2, 2, 5, 6, 2, np.random.default_rng(0)))
        merged = CumulativeScms(0.9).update(est)
        assert_allclose(merged.speech_ti, est.speech_ti, rtol=1e-12)
        assert_allclose(merged.noise_ti, est.noise_ti, rtol=1e-12)

    def test_forgetting_weighted_sums(self):
        rng = np.random.default_rng(1)
        first = extract_scms(MnmfParams.random(2, 2, 5, 6, 2, rng))
        second = extract_scms(MnmfParams.random(2, 2, 5, 3, 2, rng))
        scms = CumulativeScms(0.5)
        scms.update(first)
        merged = scms.update(second)
        expected = (np.sum(second.speech_tv, axis=1) + 0.5 * np.sum(first.speech_tv, axis=1)) / (3 + 0.5 * 6)
        assert_allclose(merged.speech_ti, expected, rtol=1e-12)
        self.assertIs(merged.speech_tv, second.speech_tv)


class OfflineTests(SimpleTestCase):
    def test_mono_input_rejected_at_validation(self):
        with self.assertRaises(InvalidInputError) as ctx:
            enhance_offline(WaveformBlock(np.zeros(16000)), small_config())
        self.assertEqual(ctx.exception.stage, 'validate')
        self.assertIn('1 channel', str(ctx.exception))

    def test_configuration_mismatches_rejected(self):
        x = WaveformBlock(np.zeros((16000, 2)))
        for cfg in (small_config(n_sources=3), small_config(reference=2), small_config(anchor_channel=5)):
            with self.assertRaises(InvalidInputError):
                enhance_offline(x, cfg)
        with self.assertRaises(InvalidInputError):
            enhance_offline(WaveformBlock(np.zeros((16000, 2)), 8000), small_config())

    def test_output_and_report(self):
        truth = small_scene()
        result = enhance_offline(truth.mixture, small_config())
        report = result.report
        self.assertEqual(result.waveform.n_channels, 1)
        self.assertEqual(result.waveform.n_samples, covered_samples(497, 256, 64))
        self.assertEqual(report.n_frames, 497)
        self.assertEqual(len(report.cost_trace), 6)
        self.assertEqual(report.ilrma_iterations, 6)
        self.assertIn(report.reference, range(3))
        for name in ('validate', 'stft', 'init', 'mnmf', 'spatial', 'beamform', 'istft'):
            self.assertIn(name, report.timings)
        self.assertTrue(np.isfinite(score_output(truth.target, result.waveform, report.reference)))

    def test_seeded_runs_are_identical(self):
        mixture = small_scene(seed=1).mixture
        cfg = small_config(beamformer=BeamformerFamily.FULL_RANK_WF)
        first = enhance_offline(mixture, cfg).waveform.samples
        second = enhance_offline(mixture, cfg).waveform.samples
        self.assertTrue(np.array_equal(first, second))

    def test_explicit_reference_is_kept(self):
        result = enhance_offline(small_scene(seed=2).mixture, small_config(reference=2))
        self.assertEqual(result.report.reference, 2)

    def test_speech_only_input_is_not_degraded(self):
        truth = synth_scene(SceneSpec(n_mics=3, duration=2.0, snr_db=np.inf, seed=8))
        # a sensor floor 80 dB down keeps the channel covariances full rank
        rng = np.random.default_rng(8)
        samples = truth.mixture.samples
        floor = 1e-4 * np.sqrt(np.mean(samples ** 2)) * rng.standard_normal(samples.shape)
        mixture = WaveformBlock(samples + floor, truth.mixture.sample_rate)
        result = enhance_offline(mixture, small_config(n_sources=2))
        reference = result.report.reference
        n = result.waveform.n_samples
        baseline = si_sdr(truth.target.samples[:n, reference], mixture.samples[:n, reference])
        # the reference channel scores near the cap, so the comparison is clamped
        self.assertGreaterEqual(baseline, SI_SDR_CAP - 10.0)
        score = score_output(truth.target, result.waveform, reference)
        self.assertGreaterEqual(score, min(baseline, SPEECH_ONLY_CLAMP_DB) - 3.0)


class OnlineTests(SimpleTestCase):
    def test_single_batch_matches_offline(self):
        mixture = small_scene(seed=3).mixture
        cfg = small_config(first_batch_seconds=3.0)
        offline = enhance_offline(mixture, cfg).waveform.samples
        online = enhance_online(mixture, cfg)
        self.assertEqual(len(online.segments), 1)
        self.assertEqual(online.waveform.samples.shape, offline.shape)
        rms = np.sqrt(np.mean((online.waveform.samples - offline) ** 2))
        self.assertLessEqual(rms, 1e-6)

    def test_known_length_follows_the_plan(self):
        mixture = small_scene(seed=4).mixture
        cfg = small_config()
        seen = []
        result = enhance_online(mixture, cfg, on_segment=seen.append)
        plan = plan_minibatches(497, 125, 50)
        self.assertEqual(plan.n_batches, 8)
        self.assertEqual([s.frames for s in result.segments], plan.ranges)
        self.assertEqual(len(seen), 8)
        self.assertEqual(result.waveform.n_samples, covered_samples(497, 256, 64))
        self.assertEqual(len(result.report.batches), 8)
        self.assertEqual(len(result.report.cost_trace), 8)
        self.assertEqual(result.report.output_samples, result.waveform.n_samples)

    def test_unknown_length_closes_with_short_batch(self):
        mixture = small_scene(seed=4).mixture
        result = enhance_online(iter_blocks(mixture, 1000), small_config())
        frames = [s.frames for s in result.segments]
        self.assertEqual(frames[0], (0, 125))
        self.assertEqual(frames[-1], (475, 497))
        self.assertEqual(len(frames), 9)
        self.assertEqual(result.waveform.n_samples, covered_samples(497, 256, 64))

    def test_prefix_output_is_unchanged_by_later_audio(self):
        mixture = small_scene(seed=9).mixture
        cfg = small_config()
        full = enhance_online(iter_blocks(mixture, 1000), cfg).segments

        prefix = WaveformBlock(mixture.samples[:19200], mixture.sample_rate)
        enhancer = OnlineEnhancer(cfg)
        early = []
        for block in iter_blocks(prefix, 1000):
            early.extend(enhancer.feed(block))
        self.assertEqual([s.frames for s in early], [(0, 125), (125, 175), (175, 225), (225, 275)])
        for segment, reference in zip(early, full):
            self.assertEqual(segment.frames, reference.frames)
            self.assertTrue(np.array_equal(segment.waveform.samples, reference.waveform.samples))
        self.assertEqual(enhancer.reference, enhancer.report.reference)

    def test_reference_fixed_after_first_batch(self):
        mixture = small_scene(seed=5).mixture
        result = enhance_online(mixture, small_config())
        self.assertIn(result.report.reference, range(3))

    def test_stream_errors(self):
        cfg = small_config()
        with self.assertRaises(InvalidInputError):
            OnlineEnhancer(cfg).close()

        enhancer = OnlineEnhancer(cfg, total_samples=1000)
        with self.assertRaises(InvalidInputError):
            enhancer.feed(WaveformBlock(np.zeros((2000, 2))))

        enhancer = OnlineEnhancer(cfg)
        enhancer.feed(WaveformBlock(np.zeros((500, 2))))
        with self.assertRaises(InvalidInputError):
            enhancer.feed(WaveformBlock(np.zeros((500, 3))))

    def test_feed_after_close(self):
        enhancer = OnlineEnhancer(small_config())
        enhancer.feed(small_scene(seed=6).mixture)
        enhancer.close()
        self.assertFalse(enhancer.waiting)
        with self.assertRaises(InvalidInputError):
            enhancer.feed(WaveformBlock(np.zeros((100, 3))))


class ScoreOutputTests(SimpleTestCase):
    def test_truth_is_cut_to_output(self):
        rng = np.random.default_rng(7)
        truth = WaveformBlock(rng.standard_normal((20000, 2)))
        output = WaveformBlock(truth.samples[:17000, 1])
        self.assertEqual(score_output(truth, output, channel=1), 80.0)

    def test_short_truth_rejected(self):
        with self.assertRaises(InvalidInputError):
            score_output(WaveformBlock(np.ones(100)), WaveformBlock(np.ones(200)))


class DeskScaleSeparationTests(SimpleTestCase):
    @pytest.mark.slow
    def test_offline_fit_recovers_planted_speech_steering(self):
        truth = synth_scene(SceneSpec(n_mics=2, n_sources=2, duration=4.0, seed=0))
        x = stft_forward(truth.mixture)
        cfg = EnhanceConfig(n_basis=10, offline_iterations=30, ilrma_iterations=30)
        fit = offline_fit(x, cfg)
        steering = extract_steering(extract_scms(fit.params)).steering
        self.assertGreaterEqual(speech_weighted_cosine(truth, steering), 0.95)

    @pytest.mark.slow
    def test_offline_beamformers_improve_si_sdr(self):
        gains = {BeamformerFamily.MVDR: [], BeamformerFamily.FULL_RANK_WF: []}
        scores = {family: [] for family in gains}
        for seed in range(10):
            truth = synth_scene(SceneSpec(n_mics=4, n_sources=2, snr_db=0.0, duration=8.0, seed=seed))
            for family in gains:
                result = enhance_offline(truth.mixture, EnhanceConfig(beamformer=family, seed=seed))
                reference = result.report.reference
                score = score_output(truth.target, result.waveform, reference)
                n = result.waveform.n_samples
                baseline = si_sdr(truth.target.samples[:n, reference], truth.mixture.samples[:n, reference])
                scores[family].append(score)
                gains[family].append(score - baseline)
        for family in gains:
            self.assertGreaterEqual(np.median(gains[family]), 10.0, family)
        self.assertGreaterEqual(np.median(scores[BeamformerFamily.FULL_RANK_WF]),
                                np.median(scores[BeamformerFamily.MVDR]) - 0.5)
