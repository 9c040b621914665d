from pathlib import Path

from rest_framework import serializers

from .config import load_enhance_config
from .exceptions import ConfigurationError
from .models import EnhancementRun


class EnhancementRunSerializer(serializers.ModelSerializer):
    """Serializer for EnhancementRun model"""
    processing_duration = serializers.ReadOnlyField()

    class Meta:
        model = EnhancementRun
        fields = [
            'id', 'mode', 'status', 'beamformer', 'time_mode',
            'input_path', 'output_path', 'truth_path', 'config',
            'reference_channel', 'si_sdr', 'started_at', 'completed_at',
            'processing_duration', 'celery_task_id', 'error_stage', 'error_message',
            'created_at', 'updated_at',
        ]
        read_only_fields = fields


class EnhancementRunCreateSerializer(serializers.ModelSerializer):
    """Serializer for queueing a new run"""
    class Meta:
        model = EnhancementRun
        fields = [
            'id', 'mode', 'beamformer', 'time_mode',
            'input_path', 'output_path', 'truth_path', 'config', 'status',
        ]
        read_only_fields = ['id', 'status']

    def validate_input_path(self, value):
        if not Path(value).is_file():
            raise serializers.ValidationError(f"Input file not found: {value}")
        return value

    def validate_config(self, value):
        if not isinstance(value, dict):
            raise serializers.ValidationError('Config must be an object of overrides')
        return value

    def validate(self, data):
        """Check that the overrides form a valid enhancement configuration"""
        overrides = dict(data.get('config') or {})
        overrides.setdefault('beamformer', data.get('beamformer', EnhancementRun._meta.get_field('beamformer').default))
        overrides.setdefault('time_mode', data.get('time_mode', EnhancementRun._meta.get_field('time_mode').default))
        try:
            load_enhance_config(overrides=overrides)
        except ConfigurationError as exc:
            raise serializers.ValidationError({'config': str(exc)})
        return data
