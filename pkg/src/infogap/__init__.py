"""Testing-gap bounds for stochastic encoder/decoder classifiers.

Submodules: ``nn`` (dense layers and SGD), ``encoders`` (Gaussian, log-normal
and RBM encoders), ``classifier`` (softmax decoder, losses, gap quantile),
``mi`` (variational MI bound), ``quantizer`` (loss k-means), ``bound``
(concentration terms and assembly), ``data`` (IDX I/O, perturbations),
``harness`` (lambda sweeps and reports) and ``oracle`` (brute-force checks).
"""
from .errors import BudgetError, ConfigurationError, InfogapError, NumericError
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["BudgetError", "ConfigurationError", "InfogapError", "KERNEL_BACKEND", "NumericError", "__version__"]
