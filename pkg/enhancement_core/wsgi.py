"""
WSGI entry point for the enhancement API (gunicorn in deployment).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'enhancement_core.settings')

application = get_wsgi_application()
