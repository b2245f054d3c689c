"""
Django settings for filterprune project.

Generated by 'django-admin startproject' using Django 5.2.6.

The project hosts a single app, ``pruning``: the pruning library, its
management commands and the run records they write.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'django-insecure-filterprune-local-development-key')

DEBUG = os.environ.get('DJANGO_DEBUG', '') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'pruning.apps.PruningConfig',
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
# https://docs.djangoproject.com/en/5.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
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
        'pruning': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}


# Pruning library
# Values left out fall back to pruning.conf.DEFAULTS; PRUNING_DATA_ROOT
# overrides DATA_ROOT.

PRUNING = {
    'FLOAT_DTYPE': 'float32',
    'DEFAULT_SEED': 0,
    'DATA_ROOT': BASE_DIR / 'data',
    'RECORD_RUNS': True,
    'VALIDATION_FRACTION': 0.1,
    'SPLIT_SEED': 0,
    'TRAIN': {
        'learning_rate': 0.01,
        'momentum': 0.9,
        'epochs': 5,
        'batch_size': 64,
    },
    'SWEEP': {
        'max_gap': 0.02,
        'max_evals': 32,
        'per_class': 100,
        'drop_tolerance': 0.01,
    },
}
