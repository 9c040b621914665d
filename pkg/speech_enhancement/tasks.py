"""
Celery tasks for asynchronous enhancement runs.

A run reads its input WAV, executes the offline or online pipeline, writes the
single-channel output and stores the report on the EnhancementRun row. Audio
I/O failures and unexpected errors are retried; invalid input, configuration
and numerical failures are final. A failed attempt always marks the run failed.
"""

from celery import shared_task
import logging

from .choices import ProcessingMode
from .config import load_enhance_config
from .exceptions import AudioIOError, EnhancementError
from .models import EnhancementRun
from .pipeline import enhance_offline, enhance_online, score_output
from .wavio import read_wav, write_wav

logger = logging.getLogger(__name__)


def execute_run(run):
    """Run the pipeline for ``run`` and return (report, reference channel, SI-SDR)"""
    cfg = load_enhance_config(overrides=run.overrides)
    mixture = read_wav(run.input_path)
    if run.mode == ProcessingMode.ONLINE:
        result = enhance_online(mixture, cfg)
    else:
        result = enhance_offline(mixture, cfg)
    write_wav(run.output_path, result.waveform)

    report = result.report
    if run.truth_path:
        report.si_sdr = score_output(read_wav(run.truth_path), result.waveform, report.reference)
    return report, report.reference, report.si_sdr


@shared_task(bind=True, max_retries=3, default_retry_delay=60)
def run_enhancement(self, run_id):
    """
    Process one EnhancementRun

    Args:
        run_id: UUID of the EnhancementRun instance

    Returns:
        dict: run status, reference channel and score
    """
    try:
        run = EnhancementRun.objects.get(id=run_id)
    except EnhancementRun.DoesNotExist:
        logger.error(f"Enhancement run {run_id} not found")
        return {'status': 'error', 'message': 'Run not found'}

    run.start_processing()
    logger.info(f"Starting {run.mode} enhancement for run {run_id} - {run.input_path}")

    try:
        report, reference, score = execute_run(run)
    except AudioIOError as exc:
        logger.error(f"Audio I/O error in run {run_id}: {exc}")
        run.fail(str(exc), exc.stage)
        if self.request.retries < self.max_retries:
            logger.info(f"Retrying run {run_id} - Attempt {self.request.retries + 1}/{self.max_retries}")
            raise self.retry(exc=exc)
        return {'status': 'error', 'message': str(exc)}
    except EnhancementError as exc:
        logger.error(f"Enhancement run {run_id} failed: {exc}")
        run.fail(str(exc), exc.stage)
        return {'status': 'error', 'message': str(exc)}
    except Exception as exc:
        logger.exception(f"Unexpected error in run {run_id}: {exc}")
        run.fail(f"{type(exc).__name__}: {exc}")
        if self.request.retries < self.max_retries:
            logger.info(f"Retrying run {run_id} - Attempt {self.request.retries + 1}/{self.max_retries}")
            raise self.retry(exc=exc)
        return {'status': 'error', 'message': str(exc)}

    run.complete(report.dumps(), reference, score)
    logger.info(f"Completed run {run_id}: reference channel {reference}, SI-SDR {score}")
    return {
        'status': 'success',
        'run_id': str(run.id),
        'reference_channel': reference,
        'si_sdr': score,
    }
