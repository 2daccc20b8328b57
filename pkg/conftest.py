# Configure Django for pytest; the suite is normally run via `python manage.py test qhj_app`.
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'qhj_project.settings')
django.setup()
