"""
Enhancement configuration.

Values are layered: dataclass defaults, then ``settings.SPEECH_ENHANCEMENT``,
then an optional flat ``KEY=VALUE`` file, then explicit overrides (command-line
flags). Environment variables never take part.
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from decouple import RepositoryEnv
from django.conf import settings

from .choices import Accumulation, BeamformerFamily, TimeMode
from .dsp.beamform import BeamformerSpec
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

# flag spellings that differ from the field names
ALIASES = {
    'bases': 'n_basis',
    'k': 'n_basis',
    'sources': 'n_sources',
    'iterations': 'offline_iterations',
    'first_iterations': 'first_inner_iterations',
    'batch_iterations': 'inner_iterations',
    'first_batch_sec': 'first_batch_seconds',
    'batch_sec': 'batch_seconds',
    'window': 'window_len',
    'accumulation': 'online_accumulation',
    'anchor': 'anchor_channel',
}


@dataclass(frozen=True)
class EnhanceConfig:
    n_basis: int = 25
    n_sources: int = None  # None means one source per microphone
    offline_iterations: int = 100
    first_inner_iterations: int = 30
    inner_iterations: int = 5
    rho: float = 0.9
    window_len: int = 1024
    hop: int = 160
    sample_rate: int = 16000
    first_batch_seconds: float = 10.0
    batch_seconds: float = 0.5
    beamformer: str = BeamformerFamily.MVDR
    time_mode: str = TimeMode.TIME_INVARIANT
    reference: int = None  # None selects the channel per utterance
    seed: int = 0
    ilrma_bases: int = 2
    ilrma_iterations: int = 50
    init_loading: float = 0.01
    online_accumulation: str = Accumulation.RECURSIVE
    threads: int = 1
    anchor_channel: int = 0

    def validate(self):
        checks = [
            (self.n_basis >= 1, f"n_basis must be at least 1, got {self.n_basis}"),
            (self.n_sources is None or self.n_sources >= 1,
             f"n_sources must be at least 1, got {self.n_sources}"),
            (self.offline_iterations >= 0, "offline_iterations must be nonnegative"),
            (self.first_inner_iterations >= 0 and self.inner_iterations >= 0,
             "online inner iterations must be nonnegative"),
            (0 < self.rho <= 1, f"rho must lie in (0, 1], got {self.rho}"),
            (self.window_len > 0 and self.window_len % 2 == 0,
             f"window_len must be even and positive, got {self.window_len}"),
            (0 < self.hop <= self.window_len, f"hop must lie in (0, window_len], got {self.hop}"),
            (self.batch_seconds > 0, f"batch_seconds must be positive, got {self.batch_seconds}"),
            (self.first_batch_seconds >= self.batch_seconds,
             "first_batch_seconds must be at least batch_seconds"),
            (self.reference is None or self.reference >= 0, "reference channel must be nonnegative"),
            (self.anchor_channel >= 0, "anchor_channel must be nonnegative"),
            (self.ilrma_bases >= 1 and self.ilrma_iterations >= 0, "invalid ILRMA settings"),
            (self.init_loading >= 0, "init_loading must be nonnegative"),
            (self.threads >= 1, f"threads must be at least 1, got {self.threads}"),
            (self.beamformer in BeamformerFamily.values, f"unknown beamformer '{self.beamformer}'"),
            (self.time_mode in TimeMode.values, f"unknown time mode '{self.time_mode}'"),
            (self.online_accumulation in Accumulation.values,
             f"unknown accumulation '{self.online_accumulation}'"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        return self

    @property
    def beamformer_spec(self):
        return BeamformerSpec(self.beamformer, self.time_mode, self.reference)

    @property
    def first_batch_frames(self):
        return max(1, int(round(self.first_batch_seconds * self.sample_rate / self.hop)))

    @property
    def batch_frames(self):
        return max(1, int(round(self.batch_seconds * self.sample_rate / self.hop)))

    def as_dict(self):
        data = asdict(self)
        data['beamformer'] = str(self.beamformer)
        data['time_mode'] = str(self.time_mode)
        data['online_accumulation'] = str(self.online_accumulation)
        return data


FIELD_TYPES = {f.name: f.type for f in fields(EnhanceConfig)}
OPTIONAL_INTS = ('n_sources', 'reference')


def normalize_key(key):
    key = key.strip().lower().replace('-', '_').lstrip('_')
    return ALIASES.get(key, key)


def _cast(name, value):
    if name not in FIELD_TYPES:
        raise ConfigurationError(f"unknown configuration key '{name}'")
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        if name in OPTIONAL_INTS and value.lower() in ('', 'auto', 'none'):
            return None
    kind = FIELD_TYPES[name]
    try:
        if kind in (int, 'int') or name in OPTIONAL_INTS:
            return int(value)
        if kind in (float, 'float'):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid value {value!r} for '{name}'") from exc


def read_config_file(path):
    """Flat KEY=VALUE file parsed by decouple, keys normalized to field names"""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    repository = RepositoryEnv(str(path))
    return {normalize_key(key): value for key, value in repository.data.items()}


def load_enhance_config(path=None, overrides=None):
    values = {}
    for layer in (getattr(settings, 'SPEECH_ENHANCEMENT', {}),
                  read_config_file(path) if path else {},
                  overrides or {}):
        for key, value in layer.items():
            name = normalize_key(key)
            values[name] = _cast(name, value)
    config = replace(EnhanceConfig(), **values)
    logger.debug(f"Loaded enhancement config: {config.as_dict()}")
    return config.validate()
