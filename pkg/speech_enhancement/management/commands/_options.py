"""
Flags and error handling shared by the enhancement commands.

Every flag defaults to None so that only flags given on the command line
override the settings defaults and the optional config file.
"""

from django.core.management.base import CommandError

from speech_enhancement.choices import BeamformerFamily, TimeMode
from speech_enhancement.config import load_enhance_config
from speech_enhancement.exceptions import (
    AudioIOError,
    ConfigurationError,
    InvalidInputError,
    NumericalFailureError,
)

EXIT_INVALID = 2
EXIT_AUDIO_IO = 3
EXIT_NUMERICAL = 4

# option dest -> EnhanceConfig field
RUN_FLAGS = {
    'seed': 'seed',
    'threads': 'threads',
    'beamformer': 'beamformer',
    'time_mode': 'time_mode',
    'reference_channel': 'reference',
    'bases': 'n_basis',
    'sources': 'n_sources',
    'iterations': 'offline_iterations',
    'first_batch_sec': 'first_batch_seconds',
    'batch_sec': 'batch_seconds',
    'rho': 'rho',
    'first_iterations': 'first_inner_iterations',
    'batch_iterations': 'inner_iterations',
    'accumulation': 'online_accumulation',
}


def add_run_arguments(parser, online=False):
    parser.add_argument('--input', required=True, help='Multichannel 16 kHz WAV file')
    parser.add_argument('--output', required=True, help='Single-channel output WAV file')
    parser.add_argument('--config', help='Flat KEY=VALUE file with enhancement settings')
    parser.add_argument('--report', help='Write the line-delimited JSON run report here')
    parser.add_argument('--truth', help='Clean speech image WAV; adds the output SI-SDR to the report')
    parser.add_argument('--format', choices=['pcm16', 'float'], default='pcm16', help='Output sample format')
    parser.add_argument('--seed', type=int, help='Random seed (default 0)')
    parser.add_argument('--threads', type=int, help='Frequency worker threads; 1 is reproducible')
    parser.add_argument('--beamformer', choices=BeamformerFamily.values,
                        help='wf (full-rank Wiener), wf1 (rank-1 Wiener) or mv (MVDR)')
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument('--time-variant', dest='time_mode', action='store_const', const=TimeMode.TIME_VARIANT.value)
    mode.add_argument('--time-invariant', dest='time_mode', action='store_const', const=TimeMode.TIME_INVARIANT.value)
    parser.add_argument('--reference', dest='reference_channel', type=int,
                        help='Reference microphone (default: chosen automatically)')
    parser.add_argument('--bases', type=int, help='NMF bases K (default 25)')
    parser.add_argument('--sources', type=int, help='MNMF sources N (default: one per microphone)')
    if online:
        parser.add_argument('--first-batch-sec', type=float, help='First mini-batch length in seconds (default 10)')
        parser.add_argument('--batch-sec', type=float, help='Mini-batch length in seconds (default 0.5)')
        parser.add_argument('--rho', type=float, help='Forgetting weight (default 0.9)')
        parser.add_argument('--first-iterations', type=int, help='Inner iterations on the first mini-batch')
        parser.add_argument('--batch-iterations', type=int, help='Inner iterations on later mini-batches')
        parser.add_argument('--accumulation', choices=['recursive', 'previous'],
                            help='How earlier mini-batch statistics are carried forward')
    else:
        parser.add_argument('--iterations', type=int, help='MNMF iterations (default 100)')


def overrides_from(options):
    return {field: options[dest] for dest, field in RUN_FLAGS.items() if options.get(dest) is not None}


def load_config(options):
    return load_enhance_config(options.get('config'), overrides_from(options))


def command_error(exc):
    """CommandError carrying the exit code for an enhancement failure"""
    if isinstance(exc, AudioIOError):
        code = EXIT_AUDIO_IO
    elif isinstance(exc, NumericalFailureError):
        code = EXIT_NUMERICAL
    elif isinstance(exc, (InvalidInputError, ConfigurationError)):
        code = EXIT_INVALID
    else:
        code = EXIT_NUMERICAL
    return CommandError(exc.diagnostic(), returncode=code)
