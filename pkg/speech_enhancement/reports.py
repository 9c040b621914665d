"""
Run reports serialized as line-delimited JSON.

Every line is one JSON object with a ``kind`` field: ``run`` (mode, config echo
and summary values), ``cost`` (one per fit iteration), ``stage`` (wall time per
pipeline stage), ``batch`` (one per online mini-batch) and ``score``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import AudioIOError, InvalidInputError


@dataclass
class RunReport:
    mode: str = 'offline'
    config: dict = field(default_factory=dict)
    cost_trace: list = field(default_factory=list)
    ilrma_iterations: int = 0
    reference: int = None
    n_frames: int = 0
    output_samples: int = 0
    timings: dict = field(default_factory=dict)
    batches: list = field(default_factory=list)
    si_sdr: float = None

    def add_timing(self, stage, seconds):
        self.timings[stage] = self.timings.get(stage, 0.0) + seconds

    @property
    def total_seconds(self):
        return sum(self.timings.values())

    def to_lines(self):
        lines = [{
            'kind': 'run',
            'mode': self.mode,
            'config': self.config,
            'ilrma_iterations': self.ilrma_iterations,
            'reference': self.reference,
            'n_frames': self.n_frames,
            'output_samples': self.output_samples,
        }]
        lines += [{'kind': 'cost', 'iteration': i, 'value': v} for i, v in enumerate(self.cost_trace)]
        lines += [{'kind': 'stage', 'name': k, 'seconds': v} for k, v in self.timings.items()]
        lines += [{'kind': 'batch', **batch} for batch in self.batches]
        if self.si_sdr is not None:
            lines.append({'kind': 'score', 'si_sdr': self.si_sdr})
        return [json.dumps(line, sort_keys=True) for line in lines]

    def dumps(self):
        return '\n'.join(self.to_lines()) + '\n'

    @classmethod
    def from_lines(cls, lines):
        report = cls()
        for number, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"report line {number} is not valid JSON: {exc}") from exc
            kind = record.pop('kind', None)
            if kind == 'run':
                for key, value in record.items():
                    setattr(report, key, value)
            elif kind == 'cost':
                report.cost_trace.append(record['value'])
            elif kind == 'stage':
                report.timings[record['name']] = record['seconds']
            elif kind == 'batch':
                report.batches.append(record)
            elif kind == 'score':
                report.si_sdr = record['si_sdr']
            else:
                raise InvalidInputError(f"report line {number} has unknown kind {kind!r}")
        return report

    @classmethod
    def loads(cls, text):
        return cls.from_lines(text.splitlines())

    def write(self, path):
        try:
            Path(path).write_text(self.dumps())
        except OSError as exc:
            raise AudioIOError(f"cannot write report {path}: {exc}") from exc

    @classmethod
    def read(cls, path):
        try:
            return cls.loads(Path(path).read_text())
        except OSError as exc:
            raise AudioIOError(f"cannot read report {path}: {exc}") from exc
