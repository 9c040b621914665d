from django.apps import AppConfig


class SpeechEnhancementConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'speech_enhancement'
    verbose_name = 'Speech enhancement'
