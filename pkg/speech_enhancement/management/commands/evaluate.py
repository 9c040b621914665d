from django.core.management.base import BaseCommand

from speech_enhancement.dsp.harness import si_sdr
from speech_enhancement.exceptions import EnhancementError, InvalidInputError
from speech_enhancement.wavio import read_wav

from ._options import command_error


class Command(BaseCommand):
    help = 'Print the SI-SDR (dB) of an estimate against a reference WAV.'

    def add_arguments(self, parser):
        parser.add_argument('--reference', required=True, help='Clean reference WAV')
        parser.add_argument('--estimate', required=True, help='Estimated single-channel WAV')
        parser.add_argument('--channel', type=int, default=0, help='Channel of a multichannel reference to score against')

    def handle(self, *args, **options):
        try:
            reference = read_wav(options['reference'])
            estimate = read_wav(options['estimate'])
            channel = options['channel'] if reference.n_channels > 1 else 0
            if not 0 <= channel < reference.n_channels:
                raise InvalidInputError(f"reference has no channel {channel}")
            score = si_sdr(reference.channel(channel), estimate.samples, reference.sample_rate)
        except EnhancementError as exc:
            raise command_error(exc) from exc
        self.stdout.write(f"{score:.2f}")
