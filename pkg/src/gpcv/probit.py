"""Numerically safe standard-normal helpers used by the probit likelihood.

All routines accept scalars or arrays and are vectorized. ``log_phi`` is
erfc-based (via ``scipy.special.log_ndtr``) and stays accurate far into the
lower tail, where a naive ``log(Phi(z))`` underflows.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr

_LOG_2PI = float(np.log(2.0 * np.pi))


def phi(z):
    """Standard normal CDF."""
    return ndtr(z)


def log_phi(z):
    """log of the standard normal CDF, safe for very negative arguments."""
    return log_ndtr(z)


def npdf(z):
    """Standard normal density."""
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z - 0.5 * _LOG_2PI)


def gauss_over_phi(z):
    """N(z) / Phi(z), computed in log space.

    Behaves like the inverse Mills ratio: ~ -z for z << 0, -> 0 for z >> 0.
    """
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z - 0.5 * _LOG_2PI - log_ndtr(z))


def probit_moments(cavity_mean, cavity_var, y, bias):
    """Zeroth/first/second moments of N(f | cavity) * Phi(y * (f + bias)).

    Returns ``(log_z, mean, var)`` where ``log_z`` is the log normalizer and
    ``mean``/``var`` are the moments of the tilted (normalized) distribution.
    Inputs may be scalars or same-shape arrays; ``cavity_var`` must be > 0.
    """
    cavity_mean = np.asarray(cavity_mean, dtype=float)
    cavity_var = np.asarray(cavity_var, dtype=float)
    y = np.asarray(y, dtype=float)

    denom = np.sqrt(1.0 + cavity_var)
    zhat = y * (cavity_mean + bias) / denom
    log_z = log_ndtr(zhat)
    ratio = gauss_over_phi(zhat)

    mean = cavity_mean + y * cavity_var * ratio / denom
    var = cavity_var - cavity_var**2 * ratio * (zhat + ratio) / (1.0 + cavity_var)
    return log_z, mean, var
