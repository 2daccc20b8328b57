# Path: src/qhj_project/settings.py
import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

# Secret key for Django project, read from environment variable or use a fallback
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'qhj-insecure-development-key')
# Debug mode, read from environment variable and convert to boolean
DEBUG = os.getenv('DJANGO_DEBUG', 'False') == 'True'
# No web surface; management commands only
ALLOWED_HOSTS = []
# Enable timezone support
USE_TZ = True

# List of installed Django applications
INSTALLED_APPS = [
    'qhj_app',
]

# No database: every result is written as JSON/CSV artifacts
DATABASES = {}

# Worker threads for slice-parallel residual evaluation and scipy.fft, default all cores
QHJ_THREADS = int(os.getenv('QHJ_THREADS', os.cpu_count() or 1))

# Node mask: points with R <= threshold * max(R) are flagged and excluded from residual norms
QHJ_MASK_THRESHOLD = float(os.getenv('QHJ_MASK_THRESHOLD', '1e-6'))

# Spatial derivative scheme used when a scenario does not name one ('spectral' or 'central-2nd')
QHJ_DERIVATIVE_SCHEME = os.getenv('QHJ_DERIVATIVE_SCHEME', 'spectral')

# Default physical constants (natural units)
QHJ_UNITS = {
    'hbar': 1.0,
    'm': 1.0,
    'm0': 1.0,
    'c_light': 1.0,
}

# Record every n-th solver step when a scenario does not set output_stride
QHJ_OUTPUT_STRIDE = int(os.getenv('QHJ_OUTPUT_STRIDE', '10'))

# Where the commands write their artifacts unless --out is given
QHJ_ARTIFACT_DIR = Path(os.getenv('QHJ_ARTIFACT_DIR', BASE_DIR / 'artifacts'))

# Golden expressions of the derivation pipelines and their sha256 manifest
QHJ_GOLDENS_FILE = BASE_DIR / 'qhj_app' / 'goldens' / 'goldens.json'
QHJ_GOLDENS_MANIFEST = BASE_DIR / 'qhj_app' / 'goldens' / 'goldens.sha256'

# Masked max-norm tolerances per residual equation; scenario 'checks' override them
QHJ_DEFAULT_TOLERANCES = {
    'bohm-hj': 1e-6,
    'general-hj': 1e-6,
    'generalized': 1e-6,
    'continuity': 1e-6,
    'generalized-continuity': 1e-6,
    'kg-real': 1e-6,
    'kg-final': 1e-6,
    'kg-continuity': 1e-6,
}

# Log level of the console handler
QHJ_LOG_LEVEL = os.getenv('QHJ_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'qhj_app': {
            'handlers': ['console'],
            'level': QHJ_LOG_LEVEL,
            'propagate': False,
        },
    },
}
