"""Measure how image distortions shift demographic bias in face verification."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402
