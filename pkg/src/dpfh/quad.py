"""Gauss-Hermite rules rescaled for expectations under a normal law."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def normal_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights such that ``E[f(Z)] ~ sum(w * f(mu + sigma*t))``
    for ``Z ~ N(mu, sigma^2)``.

    The physicists' Gauss-Hermite rule integrates against ``exp(-x^2)``;
    the change of variables ``z = mu + sqrt(2)*sigma*x`` and division by
    ``sqrt(pi)`` turn it into a normal expectation.
    """
    if n < 1:
        raise ValueError("quadrature order must be positive")
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    t = np.sqrt(2.0) * nodes
    w = weights / np.sqrt(np.pi)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w
