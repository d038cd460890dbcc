"""
WSGI entry point of the laboratory's read-only runs API.

Serves `application`; the numerical work itself runs through `manage.py lab`.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")

application = get_wsgi_application()
