"""Volumetric gaze analysis for CT slice reading sessions."""

__version__ = "0.1.0"

SCHEMA_VERSION = "1"
