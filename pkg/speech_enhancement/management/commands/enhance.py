import logging

from django.core.management.base import BaseCommand

from speech_enhancement.exceptions import EnhancementError
from speech_enhancement.pipeline import enhance_offline, score_output
from speech_enhancement.wavio import read_wav, write_wav

from ._options import add_run_arguments, command_error, load_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Enhance a multichannel recording offline with MNMF-informed beamforming.'

    def add_arguments(self, parser):
        add_run_arguments(parser)

    def handle(self, *args, **options):
        try:
            cfg = load_config(options)
            mixture = read_wav(options['input'])
            result = enhance_offline(mixture, cfg)
            write_wav(options['output'], result.waveform, options['format'])
            report = result.report
            if options.get('truth'):
                report.si_sdr = score_output(read_wav(options['truth']), result.waveform, report.reference)
            if options.get('report'):
                report.write(options['report'])
        except EnhancementError as exc:
            raise command_error(exc) from exc

        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['output']} ({result.waveform.n_samples} samples, "
            f"{cfg.beamformer_spec.label}, reference channel {report.reference})"
        ))
        if report.si_sdr is not None:
            self.stdout.write(self.style.NOTICE(f"SI-SDR: {report.si_sdr:.2f} dB"))
