"""
Django settings for the mpprecond project.

The project is a command-line numerical toolkit: there is no database, no
web stack and no templates. Django provides settings, logging
configuration, management commands, form validation and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
import os
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'mpprecond-local-only')

DEBUG = os.environ.get('DJANGO_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'preconditioners',
]

MIDDLEWARE = []

# No persistence: every result is written to CSV files.
DATABASES = {}


# Solver defaults, overridable through the environment

MPPRECOND = {
    'SEED': int(os.environ.get('MPPRECOND_SEED', '0')),
    'TOL': float(os.environ.get('MPPRECOND_TOL', '1e-12')),
    'MAX_ITER': int(os.environ.get('MPPRECOND_MAX_ITER', '5000')),
    'DENSE_EIG_LIMIT': int(os.environ.get('MPPRECOND_DENSE_EIG_LIMIT', '8000')),
    'DENSE_LU_LIMIT': int(os.environ.get('MPPRECOND_DENSE_LU_LIMIT', '500')),
    'LANCZOS_TOL': float(os.environ.get('MPPRECOND_LANCZOS_TOL', '1e-3')),
    'JOBS': int(os.environ.get('MPPRECOND_JOBS', '1')),
}


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'preconditioners': {
            'handlers': ['console'],
            'level': os.environ.get('MPPRECOND_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
