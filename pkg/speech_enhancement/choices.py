from django.db import models


class BeamformerFamily(models.TextChoices):
    """Beamformer families built from MNMF spatial estimates"""
    FULL_RANK_WF = 'wf', 'Full-rank multichannel Wiener filter'
    RANK1_WF = 'wf1', 'Rank-1 multichannel Wiener filter'
    MVDR = 'mv', 'Minimum variance distortionless response'


class TimeMode(models.TextChoices):
    """Whether filters change frame by frame or stay fixed per frequency"""
    TIME_VARIANT = 'time-variant', 'Time-variant (TV)'
    TIME_INVARIANT = 'time-invariant', 'Time-invariant (TI)'


class ProcessingMode(models.TextChoices):
    """Offline (whole recording) or online (mini-batch stream) processing"""
    OFFLINE = 'offline', 'Offline'
    ONLINE = 'online', 'Online'


class RunStatus(models.TextChoices):
    """Status of an enhancement run"""
    QUEUED = 'queued', 'Queued'
    PROCESSING = 'processing', 'Processing'
    COMPLETED = 'completed', 'Completed'
    FAILED = 'failed', 'Failed'


class Accumulation(models.TextChoices):
    """How online statistics from earlier mini-batches are carried forward"""
    RECURSIVE = 'recursive', 'Recursive exponential accumulation'
    PREVIOUS = 'previous', 'Previous mini-batch only'
