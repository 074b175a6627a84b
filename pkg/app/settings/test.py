"""
Test settings for the surfaces project.

Tests run without any external service: there is no database, reports are
written to temporary directories created by the tests themselves, and the
default mesh resolution is lowered so command tests finish in seconds.
Acceptance-scale runs pass their resolution explicitly.
"""

from .base import *

DEBUG = False

SURFACES = {
    **SURFACES,
    'RESOLUTION': 32,
    'EIGS': 60,
}

# Simplify logging for test environment
LOGGING['root']['level'] = 'ERROR'
LOGGING['loggers']['django']['level'] = 'ERROR'
LOGGING['loggers']['app_surfaces']['level'] = 'ERROR'
