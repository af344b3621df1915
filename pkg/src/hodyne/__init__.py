"""hodyne: machine-intelligence-aided homodyne receiver for QPSK signals.

Simulates balanced homodyne detection of weak QPSK coherent states, denoises
the resulting quadrature images with a small convolutional autoencoder,
classifies them with a convolutional network, and benchmarks the composed
symbol-error probability against the analytic homodyne and Helstrom limits.
"""

__version__ = "0.1.0"

from . import experiments, homodyne, limits, nn, receiver

__all__ = ["experiments", "homodyne", "limits", "nn", "receiver", "__version__"]
