from django.db import models
from django.utils import timezone
import uuid

from .choices import BeamformerFamily, ProcessingMode, RunStatus, TimeMode


class EnhancementRun(models.Model):
    """
    One enhancement job: a multichannel input WAV processed offline or online
    into a single-channel output WAV, with its run report.
    """
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)

    mode = models.CharField(
        max_length=20,
        choices=ProcessingMode.choices,
        default=ProcessingMode.OFFLINE
    )
    status = models.CharField(
        max_length=20,
        choices=RunStatus.choices,
        default=RunStatus.QUEUED
    )
    beamformer = models.CharField(
        max_length=10,
        choices=BeamformerFamily.choices,
        default=BeamformerFamily.MVDR
    )
    time_mode = models.CharField(
        max_length=20,
        choices=TimeMode.choices,
        default=TimeMode.TIME_INVARIANT
    )

    # Files
    input_path = models.CharField(max_length=500, help_text="Multichannel 16 kHz WAV")
    output_path = models.CharField(max_length=500)
    truth_path = models.CharField(max_length=500, blank=True, help_text="Clean reference WAV for scoring")

    # Configuration overrides (keys as accepted by load_enhance_config)
    config = models.JSONField(default=dict, blank=True)

    # Results
    reference_channel = models.PositiveSmallIntegerField(null=True, blank=True)
    report = models.TextField(blank=True, help_text="Line-delimited JSON run report")
    si_sdr = models.FloatField(null=True, blank=True, help_text="Output SI-SDR in dB when truth is given")

    # Processing metadata
    started_at = models.DateTimeField(null=True, blank=True)
    completed_at = models.DateTimeField(null=True, blank=True)
    celery_task_id = models.CharField(max_length=255, blank=True)
    error_stage = models.CharField(max_length=50, blank=True)
    error_message = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['-created_at'], name='enh_run_created_idx'),
            models.Index(fields=['status'], name='enh_run_status_idx'),
        ]

    def __str__(self):
        return f"{self.mode} run {self.id} ({self.status})"

    def start_processing(self):
        """Mark run as processing"""
        self.status = RunStatus.PROCESSING
        self.started_at = timezone.now()
        self.error_stage = ''
        self.error_message = ''
        self.save(update_fields=['status', 'started_at', 'error_stage', 'error_message'])

    def complete(self, report, reference_channel=None, si_sdr=None):
        """Mark run as completed and store its report"""
        self.status = RunStatus.COMPLETED
        self.report = report
        self.reference_channel = reference_channel
        self.si_sdr = si_sdr
        self.completed_at = timezone.now()
        self.save(update_fields=['status', 'report', 'reference_channel', 'si_sdr', 'completed_at'])

    def fail(self, error_message, stage=''):
        """Mark run as failed"""
        self.status = RunStatus.FAILED
        self.error_message = error_message[:2000]
        self.error_stage = stage or ''
        self.completed_at = timezone.now()
        self.save(update_fields=['status', 'error_message', 'error_stage', 'completed_at'])

    @property
    def processing_duration(self):
        """Processing duration in seconds"""
        if self.started_at and self.completed_at:
            return (self.completed_at - self.started_at).total_seconds()
        return None

    @property
    def overrides(self):
        """Config overrides including the beamformer columns"""
        values = dict(self.config or {})
        values.setdefault('beamformer', self.beamformer)
        values.setdefault('time_mode', self.time_mode)
        return values
