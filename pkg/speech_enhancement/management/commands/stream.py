import logging

from django.core.management.base import BaseCommand

from speech_enhancement.exceptions import EnhancementError
from speech_enhancement.pipeline import enhance_online, score_output
from speech_enhancement.wavio import StreamingWavWriter, iter_wav_blocks, read_wav, wav_info

from ._options import add_run_arguments, command_error, load_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Enhance a multichannel recording online, mini-batch by mini-batch, appending to the output WAV.'

    def add_arguments(self, parser):
        add_run_arguments(parser, online=True)

    def handle(self, *args, **options):
        try:
            cfg = load_config(options)
            info = wav_info(options['input'])
            blocks = iter_wav_blocks(options['input'], cfg.batch_frames * cfg.hop)
            with StreamingWavWriter(options['output'], cfg.sample_rate, fmt=options['format']) as writer:
                result = enhance_online(
                    blocks, cfg, total_samples=info.frames,
                    on_segment=lambda segment: writer.write(segment.waveform),
                )
            report = result.report
            if options.get('truth'):
                report.si_sdr = score_output(read_wav(options['truth']), result.waveform, report.reference)
            if options.get('report'):
                report.write(options['report'])
        except EnhancementError as exc:
            raise command_error(exc) from exc

        first = report.batches[0]['frames']
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['output']} ({result.waveform.n_samples} samples) from "
            f"{len(report.batches)} mini-batches (first {first} frames), "
            f"reference channel {report.reference}"
        ))
        if report.si_sdr is not None:
            self.stdout.write(self.style.NOTICE(f"SI-SDR: {report.si_sdr:.2f} dB"))
