"""
ASGI entry point for the enhancement API.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'enhancement_core.settings')

application = get_asgi_application()
