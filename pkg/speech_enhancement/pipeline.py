"""
Offline and online MNMF-informed beamforming.

Offline: STFT, ILRMA-informed initialization, batch MNMF fit, speech/noise
covariance extraction, filter construction and reference selection, filtering,
inverse STFT.

Online: frames are grouped into a long first mini-batch followed by short
batches. The first batch is initialized with ILRMA; every batch then runs the
online MNMF update against forgetting-weighted statistics and is filtered and
resynthesized before the next one starts.
"""

import contextlib
import logging
import time
from typing import NamedTuple

import numpy as np

from .choices import ProcessingMode
from .dsp.beamform import apply_filter, beamform, build_filter, candidate_filters, select_reference
from .dsp.harness import si_sdr
from .dsp.mnmf import OnlineStats, fit_cost, offline_fit, online_update
from .dsp.parallel import worker_threads
from .dsp.spatial import SpatialEstimates, extract_scms, initialize
from .dsp.stft import (
    StreamingSynthesizer,
    WaveformBlock,
    frame_count,
    stft_forward,
    stft_inverse,
)
from .exceptions import EnhancementError, InvalidInputError
from .reports import RunReport

logger = logging.getLogger(__name__)

SPEECH_SOURCE = 0


@contextlib.contextmanager
def stage(report, name):
    """Time a pipeline stage and stamp its name on escaping errors"""
    started = time.perf_counter()
    try:
        yield
    except EnhancementError as exc:
        if exc.stage is None:
            exc.stage = name
        logger.error(f"Stage {name} failed: {exc}")
        raise
    finally:
        report.add_timing(name, time.perf_counter() - started)


class MiniBatchPlan(NamedTuple):
    ranges: list   # [(start, stop), ...] frame ranges
    first_frames: int
    batch_frames: int

    @property
    def n_batches(self):
        return len(self.ranges)

    @property
    def n_frames(self):
        return self.ranges[-1][1] if self.ranges else 0


def plan_minibatches(n_frames, first_frames, batch_frames):
    """
    Split ``n_frames`` into a first batch and subsequent batches.

    A trailing remainder shorter than half a batch is merged into the last
    batch; a longer one forms its own final batch.
    """
    if first_frames < 1 or batch_frames < 1:
        raise InvalidInputError("mini-batch lengths must be at least one frame")
    if n_frames < 1:
        raise InvalidInputError("nothing to process: no complete STFT frame")
    if n_frames <= first_frames:
        return MiniBatchPlan([(0, n_frames)], first_frames, batch_frames)

    ranges = [(0, first_frames)]
    start = first_frames
    while n_frames - start >= batch_frames:
        ranges.append((start, start + batch_frames))
        start += batch_frames
    remainder = n_frames - start
    if remainder:
        if 2 * remainder < batch_frames:
            ranges[-1] = (ranges[-1][0], n_frames)
        else:
            ranges.append((start, n_frames))
    return MiniBatchPlan(ranges, first_frames, batch_frames)


class EnhancementResult(NamedTuple):
    waveform: WaveformBlock
    report: RunReport


def _check_input(x, cfg):
    if x.n_channels < 2:
        raise InvalidInputError(
            f"input has {x.n_channels} channel; at least 2 microphones are required"
        )
    if x.sample_rate != cfg.sample_rate:
        raise InvalidInputError(
            f"input sample rate {x.sample_rate} Hz does not match the configured {cfg.sample_rate} Hz"
        )
    if cfg.n_sources is not None and cfg.n_sources > x.n_channels:
        raise InvalidInputError(
            f"{cfg.n_sources} sources requested for {x.n_channels} channels"
        )
    if cfg.reference is not None and cfg.reference >= x.n_channels:
        raise InvalidInputError(
            f"reference channel {cfg.reference} out of range for {x.n_channels} channels"
        )
    if cfg.anchor_channel >= x.n_channels:
        raise InvalidInputError(
            f"anchor channel {cfg.anchor_channel} out of range for {x.n_channels} channels"
        )


def enhance_offline(x, cfg):
    """Enhance one utterance with the batch fit; returns waveform and report"""
    cfg.validate()
    report = RunReport(mode=ProcessingMode.OFFLINE.value, config=cfg.as_dict())
    spec = cfg.beamformer_spec
    with worker_threads(cfg.threads):
        with stage(report, 'validate'):
            _check_input(x, cfg)
        with stage(report, 'stft'):
            spectrogram = stft_forward(x, cfg.window_len, cfg.hop)
        with stage(report, 'init'):
            init = initialize(spectrogram, cfg)
        with stage(report, 'mnmf'):
            fit = offline_fit(spectrogram, cfg, init.params)
        with stage(report, 'spatial'):
            est = extract_scms(fit.params, SPEECH_SOURCE, cfg.anchor_channel)
        with stage(report, 'beamform'):
            result = beamform(spec, est, spectrogram)
        with stage(report, 'istft'):
            output = stft_inverse(result.output)

    report.cost_trace = list(fit.cost_trace)
    report.ilrma_iterations = len(init.ilrma_cost_trace)
    report.reference = result.filters.reference
    report.n_frames = spectrogram.n_frames
    report.output_samples = output.n_samples
    logger.info(
        f"Offline {spec.label}: {spectrogram.n_frames} frames, reference {report.reference}, "
        f"final cost {report.cost_trace[-1]:.6e}, {report.total_seconds:.2f}s"
    )
    return EnhancementResult(output, report)


class CumulativeScms:
    """
    Forgetting-weighted frame sums of P_ft and Q_ft.

    After each batch S <- sum_t X_ft + rho S and the weighted frame count
    c <- T_b + rho c; the time-invariant estimate is S / c.
    """

    def __init__(self, rho):
        self.rho = rho
        self.speech = None
        self.noise = None
        self.count = 0.0

    def update(self, est):
        speech = np.sum(est.speech_tv, axis=1)
        noise = np.sum(est.noise_tv, axis=1)
        if self.speech is None:
            self.speech, self.noise = speech, noise
        else:
            self.speech = speech + self.rho * self.speech
            self.noise = noise + self.rho * self.noise
        self.count = est.speech_tv.shape[1] + self.rho * self.count
        return SpatialEstimates(
            speech_ti=self.speech / self.count,
            noise_ti=self.noise / self.count,
            speech_tv=est.speech_tv,
            noise_tv=est.noise_tv,
            anchor=est.anchor,
        )


class OutputSegment(NamedTuple):
    index: int
    frames: tuple
    waveform: WaveformBlock


class OnlineEnhancer:
    """
    Mini-batch enhancement of a sample stream.

    ``feed`` accepts blocks of any length and returns the segments completed by
    them (possibly none, which only means more audio is needed). ``close``
    processes what is left. When ``total_samples`` is given the batches follow
    ``plan_minibatches``; otherwise a batch is processed once audio beyond it
    has arrived, and the remainder at close forms a final short batch.
    Each batch yields exactly one segment; the last one carries the synthesis
    tail.
    """

    def __init__(self, cfg, total_samples=None):
        self.cfg = cfg.validate()
        self.spec = cfg.beamformer_spec
        self.report = RunReport(mode=ProcessingMode.ONLINE.value, config=cfg.as_dict())
        self.total_samples = total_samples
        self.plan = None
        if total_samples is not None:
            n_frames = frame_count(total_samples, cfg.window_len, cfg.hop)
            self.plan = plan_minibatches(n_frames, cfg.first_batch_frames, cfg.batch_frames)
            logger.info(f"Online plan: {n_frames} frames in {self.plan.n_batches} mini-batches")
        self.buffer = None
        self.buffer_offset = 0   # absolute sample index of buffer[0]
        self.frames_done = 0
        self.batch_index = 0
        self.params = None
        self.stats = None
        self.scms = CumulativeScms(cfg.rho)
        self.reference = cfg.reference
        self.synthesizer = StreamingSynthesizer(cfg.window_len, cfg.hop, cfg.sample_rate)
        self.closed = False

    @property
    def frames_available(self):
        if self.buffer is None:
            return self.frames_done
        return frame_count(self.buffer_offset + len(self.buffer), self.cfg.window_len, self.cfg.hop)

    @property
    def waiting(self):
        """True while the next batch still lacks audio"""
        if self.closed or (self.plan is not None and self.batch_index >= self.plan.n_batches):
            return False
        return self._next_range(final=False) is None

    def feed(self, block):
        if self.closed:
            raise InvalidInputError("stream already closed")
        if not isinstance(block, WaveformBlock):
            block = WaveformBlock(block, self.cfg.sample_rate)
        if self.buffer is None:
            with stage(self.report, 'validate'):
                _check_input(block, self.cfg)
            self.buffer = block.samples.copy()
        else:
            if block.n_channels != self.buffer.shape[1]:
                raise InvalidInputError(
                    f"block has {block.n_channels} channels, stream has {self.buffer.shape[1]}"
                )
            self.buffer = np.vstack([self.buffer, block.samples])
        if self.total_samples is not None and self.buffer_offset + len(self.buffer) > self.total_samples:
            raise InvalidInputError(f"stream delivered more than the announced {self.total_samples} samples")

        segments = []
        while (batch := self._next_range(final=False)) is not None:
            segments.append(self._process(*batch))
        return segments

    def close(self):
        if self.closed:
            return []
        segments = []
        while (batch := self._next_range(final=True)) is not None:
            segments.append(self._process(*batch))
        self.closed = True
        if self.batch_index == 0:
            raise InvalidInputError("stream ended before one complete STFT frame arrived")
        logger.info(
            f"Online run finished: {self.batch_index} mini-batches, {self.frames_done} frames, "
            f"{self.report.output_samples} output samples"
        )
        return segments

    def _next_range(self, final):
        """(start, stop, is_last) of the next batch that can run now, else None"""
        available = self.frames_available
        start = self.frames_done
        if self.plan is not None:
            if self.batch_index < self.plan.n_batches:
                lo, hi = self.plan.ranges[self.batch_index]
                if hi <= available:
                    return lo, hi, self.batch_index == self.plan.n_batches - 1
            if final and available > start:
                # the stream delivered less than announced
                return start, available, True
            return None

        size = self.cfg.first_batch_frames if self.batch_index == 0 else self.cfg.batch_frames
        if available > start + size:
            return start, start + size, False
        if final and available > start:
            return start, available, True
        return None

    def _batch_spectrogram(self, start, stop):
        hop, window_len = self.cfg.hop, self.cfg.window_len
        lo = start * hop - self.buffer_offset
        hi = (stop - 1) * hop + window_len - self.buffer_offset
        segment = WaveformBlock(self.buffer[lo:hi], self.cfg.sample_rate)
        return stft_forward(segment, window_len, hop)

    def _release(self, stop):
        drop = stop * self.cfg.hop - self.buffer_offset
        self.buffer = self.buffer[drop:]
        self.buffer_offset += drop

    def _process(self, start, stop, is_last):
        cfg = self.cfg
        index = self.batch_index
        started = time.perf_counter()
        with worker_threads(cfg.threads):
            with stage(self.report, 'stft'):
                batch = self._batch_spectrogram(start, stop)
            if index == 0:
                with stage(self.report, 'init'):
                    init = initialize(batch, cfg)
                self.params = init.params
                self.report.ilrma_iterations = len(init.ilrma_cost_trace)
                self.stats = OnlineStats(rho=cfg.rho, accumulation=cfg.online_accumulation)
                iterations = cfg.first_inner_iterations
            else:
                # new frames start from the previous batch's mean activation
                mean = np.mean(self.params.activation, axis=1, keepdims=True)
                self.params = self.params.copy()
                self.params.activation = np.repeat(mean, batch.n_frames, axis=1)
                iterations = cfg.inner_iterations
            with stage(self.report, 'mnmf'):
                self.stats, self.params = online_update(self.stats, self.params, batch, iterations)
                cost = fit_cost(self.params, batch)
            with stage(self.report, 'spatial'):
                est = self.scms.update(extract_scms(self.params, SPEECH_SOURCE, cfg.anchor_channel))
            with stage(self.report, 'beamform'):
                if self.reference is None:
                    self.reference = select_reference(candidate_filters(self.spec, est), est)
                    logger.info(f"Online reference channel fixed to {self.reference}")
                filters = build_filter(self.spec, est, self.reference)
                enhanced = apply_filter(filters, batch)
            with stage(self.report, 'istft'):
                samples = self.synthesizer.push(enhanced).samples
                if is_last:
                    samples = np.vstack([samples, self.synthesizer.flush().samples])

        seconds = time.perf_counter() - started
        waveform = WaveformBlock(samples, cfg.sample_rate)
        self._release(stop)
        self.frames_done = stop
        self.batch_index += 1
        self.report.cost_trace.append(cost)
        self.report.reference = self.reference
        self.report.n_frames = stop
        self.report.output_samples += waveform.n_samples
        self.report.batches.append({
            'index': index, 'start': start, 'stop': stop, 'frames': stop - start,
            'seconds': seconds, 'cost': cost,
        })
        logger.info(f"Mini-batch {index}: frames [{start}, {stop}) in {seconds:.2f}s, cost {cost:.6e}")
        return OutputSegment(index, (start, stop), waveform)


def iter_blocks(x, block_samples):
    """Split a waveform into consecutive blocks, as a stream source would deliver them"""
    for lo in range(0, x.n_samples, block_samples):
        yield WaveformBlock(x.samples[lo:lo + block_samples], x.sample_rate)


class OnlineResult(NamedTuple):
    segments: list
    waveform: WaveformBlock
    report: RunReport


def enhance_online(blocks, cfg, total_samples=None, on_segment=None):
    """
    Run the online path over an iterable of WaveformBlocks.

    ``on_segment`` is called with each segment as soon as it is produced.
    """
    if isinstance(blocks, WaveformBlock):
        total_samples = blocks.n_samples if total_samples is None else total_samples
        blocks = iter_blocks(blocks, cfg.hop * cfg.batch_frames)
    enhancer = OnlineEnhancer(cfg, total_samples)
    segments = []

    def collect(produced):
        for segment in produced:
            segments.append(segment)
            if on_segment is not None:
                on_segment(segment)

    for block in blocks:
        collect(enhancer.feed(block))
    collect(enhancer.close())

    waveform = WaveformBlock(
        np.vstack([s.waveform.samples for s in segments]), cfg.sample_rate
    )
    return OnlineResult(segments, waveform, enhancer.report)


def score_output(truth, output, channel=0):
    """
    SI-SDR of ``output`` against the clean image in ``truth``.

    A multichannel truth is read at ``channel`` (the reference channel); the
    truth is cut to the reconstructed length of the output.
    """
    samples = truth.samples
    column = samples[:, channel if samples.shape[1] > 1 else 0]
    if len(column) < output.n_samples:
        raise InvalidInputError(
            f"truth has {len(column)} samples but the output has {output.n_samples}"
        )
    return si_sdr(column[:output.n_samples], output.samples[:, 0])
