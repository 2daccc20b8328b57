# qhj_app/apps.py
from django.apps import AppConfig


class QhjAppConfig(AppConfig):
    name = 'qhj_app'
    verbose_name = 'Quantum Hamilton-Jacobi toolkit'
