"""Statistics of one-step gradient descent on high-dimensional Gaussian
random fields: closed forms, spectral simulation, excursion-set topology
and a trainable random-field classifier."""

__version__ = "0.1.0"

from . import classifier, datasets, descent, excursion, fieldsim, theory
from .backend import BACKEND_NAME

__all__ = [
    "theory",
    "fieldsim",
    "descent",
    "excursion",
    "classifier",
    "datasets",
    "BACKEND_NAME",
    "__version__",
]
