"""fairlens: fairness evaluation, embedding analytics, anonymization, and an
annotation portal for face detectors."""

from ._kernels import BACKEND_NAME as kernel_backend

__version__ = "0.1.0"

__all__ = ["__version__", "kernel_backend"]
