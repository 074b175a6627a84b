"""
Base Django settings for the surfaces project.
Common settings shared across all environments.
"""

import os
from pathlib import Path
from django.core.exceptions import ImproperlyConfigured
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Load environment variables from .env file (batch runs outside a shell profile)
load_dotenv(BASE_DIR / '.env')


def get_env_variable(var_name, default, cast=str):
    """Get environment variable cast to the type of its default, or raise exception."""
    raw = os.environ.get(var_name)
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ImproperlyConfigured(f"Set the {var_name} environment variable to a valid {cast.__name__}.")


# Unused by the batch commands, but Django expects one.
SECRET_KEY = get_env_variable('DJANGO_SECRET_KEY', 'surfaces-batch-only')

# Application definition
INSTALLED_APPS = [
    'rest_framework',
    'app_surfaces',
]

# No database: every result is written to report files.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# Numerical defaults. Each key may be overridden with SURFACES_<KEY>.
_SURFACES_DEFAULTS = {
    # mesh and spectrum
    'RESOLUTION': 64,
    'EIGS': 200,
    'RING_POINTS': 0,  # 0 means derived from RESOLUTION
    # residual gates
    'TOL_THM_A': 5e-3,
    'TOL_THM_A_SPREAD': 1e-2,
    'TOL_THM_B': 2e-2,
    'TOL_PHI_GENUS_ONE': 5e-3,
    'TOL_ELLIPTIC': 1e-7,
    'TOL_SLOPE': 0.02,
    'TOL_FIT_RESIDUAL': 0.1,
    # quadrature and iteration controls
    'PERIOD_RTOL': 1e-11,
    'PERIOD_MAX_NODES': 256,
    'GREEN_CONSTANT_TOL': 1e-9,
    'NEAR_DEGENERATE': 1e-13,
    'SOLVER_SEED': 20100917,
    # output
    'REPORT_DIR': str(BASE_DIR / 'reports'),
}

SURFACES = {
    key: get_env_variable(f'SURFACES_{key}', default, type(default))
    for key, default in _SURFACES_DEFAULTS.items()
}

# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
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
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'app_surfaces': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
}
