import json
from pathlib import Path

from django.core.management.base import BaseCommand

from speech_enhancement.dsp.harness import SceneSpec, synth_scene
from speech_enhancement.exceptions import AudioIOError, EnhancementError
from speech_enhancement.wavio import write_wav

from ._options import command_error

TRUTH_FILE = 'truth.jsonl'


def write_truth(path, truth, files):
    """Sidecar with one scene line and one line per source image"""
    lines = [{'kind': 'scene', 'mixture': files['mixture'], **truth.spec.as_dict()}]
    for n, name in enumerate(files['images']):
        lines.append({'kind': 'source', 'index': n, 'source_kind': truth.spec.kinds[n], 'file': name})
    try:
        Path(path).write_text(''.join(json.dumps(line, sort_keys=True) + '\n' for line in lines))
    except OSError as exc:
        raise AudioIOError(f"cannot write {path}: {exc}") from exc


class Command(BaseCommand):
    help = 'Synthesize an anechoic multichannel scene with known source images.'

    def add_arguments(self, parser):
        parser.add_argument('--mics', type=int, default=4, help='Number of microphones')
        parser.add_argument('--sources', type=int, default=2, help='Number of sources; source 0 is the speech stand-in')
        parser.add_argument('--snr', type=float, default=0.0, help="Speech-to-noise ratio in dB ('inf' disables noise)")
        parser.add_argument('--duration', type=float, default=8.0, help='Length in seconds')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--steering', choices=['delays', 'random'], default='delays', help='Steering model')
        parser.add_argument('--format', choices=['pcm16', 'float'], default='float', help='Sample format of the written files')
        parser.add_argument('--output-dir', required=True, help='Directory for mixture, images and truth sidecar')

    def handle(self, *args, **options):
        output_dir = Path(options['output_dir'])
        spec = SceneSpec(
            n_mics=options['mics'],
            n_sources=options['sources'],
            steering_model=options['steering'],
            snr_db=options['snr'],
            duration=options['duration'],
            seed=options['seed'],
        )
        try:
            truth = synth_scene(spec.validate())
            files = {'mixture': 'mixture.wav', 'images': [f"source_{n}.wav" for n in range(spec.n_sources)]}
            write_wav(output_dir / files['mixture'], truth.mixture, options['format'])
            for name, image in zip(files['images'], truth.images):
                write_wav(output_dir / name, image, options['format'])
            write_truth(output_dir / TRUTH_FILE, truth, files)
        except EnhancementError as exc:
            raise command_error(exc) from exc

        self.stdout.write(self.style.SUCCESS(
            f"Wrote {output_dir / files['mixture']} and {spec.n_sources} source images "
            f"({spec.n_mics} mics, {spec.duration:g} s, seed {spec.seed})"
        ))
