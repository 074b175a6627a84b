"""
Development settings for the surfaces project.
"""

from .base import *

DEBUG = True

# Stage-by-stage pipeline logging while developing
LOGGING['loggers']['app_surfaces']['level'] = 'DEBUG'
