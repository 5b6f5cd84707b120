"""Column stripe-noise tooling: simulation, learned removal, evaluation.

Grayscale images are plain 2-D float64 numpy arrays with values in [0, 1],
indexed ``img[row, col]``; column ``c`` is ``img[:, c]``.
"""

__version__ = "0.1.0"
