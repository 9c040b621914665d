from django.contrib import admin
from .models import EnhancementRun


@admin.register(EnhancementRun)
class EnhancementRunAdmin(admin.ModelAdmin):
    list_display = ['id', 'mode', 'beamformer', 'time_mode', 'status', 'reference_channel', 'si_sdr', 'created_at']
    list_filter = ['status', 'mode', 'beamformer', 'time_mode', 'created_at']
    search_fields = ['input_path', 'output_path', 'error_message']
    readonly_fields = ['id', 'created_at', 'updated_at', 'processing_duration']
    date_hierarchy = 'created_at'

    fieldsets = (
        ('Basic Info', {
            'fields': ('id', 'mode', 'status')
        }),
        ('Beamformer', {
            'fields': ('beamformer', 'time_mode', 'config')
        }),
        ('Files', {
            'fields': ('input_path', 'output_path', 'truth_path')
        }),
        ('Results', {
            'fields': ('reference_channel', 'si_sdr', 'report')
        }),
        ('Processing', {
            'fields': ('celery_task_id', 'started_at', 'completed_at', 'processing_duration', 'error_stage', 'error_message')
        }),
        ('Timestamps', {
            'fields': ('created_at', 'updated_at')
        }),
    )
