# Generated by Django 5.2.6 on 2026-10-18 10:12

import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EnhancementRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('mode', models.CharField(choices=[('offline', 'Offline'), ('online', 'Online')], default='offline', max_length=20)),
                ('status', models.CharField(choices=[('queued', 'Queued'), ('processing', 'Processing'), ('completed', 'Completed'), ('failed', 'Failed')], default='queued', max_length=20)),
                ('beamformer', models.CharField(choices=[('wf', 'Full-rank multichannel Wiener filter'), ('wf1', 'Rank-1 multichannel Wiener filter'), ('mv', 'Minimum variance distortionless response')], default='mv', max_length=10)),
                ('time_mode', models.CharField(choices=[('time-variant', 'Time-variant (TV)'), ('time-invariant', 'Time-invariant (TI)')], default='time-invariant', max_length=20)),
                ('input_path', models.CharField(help_text='Multichannel 16 kHz WAV', max_length=500)),
                ('output_path', models.CharField(max_length=500)),
                ('truth_path', models.CharField(blank=True, help_text='Clean reference WAV for scoring', max_length=500)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('reference_channel', models.PositiveSmallIntegerField(blank=True, null=True)),
                ('report', models.TextField(blank=True, help_text='Line-delimited JSON run report')),
                ('si_sdr', models.FloatField(blank=True, help_text='Output SI-SDR in dB when truth is given', null=True)),
                ('started_at', models.DateTimeField(blank=True, null=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
                ('celery_task_id', models.CharField(blank=True, max_length=255)),
                ('error_stage', models.CharField(blank=True, max_length=50)),
                ('error_message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['-created_at'], name='enh_run_created_idx'), models.Index(fields=['status'], name='enh_run_status_idx')],
            },
        ),
    ]
