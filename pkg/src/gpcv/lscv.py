"""Probabilistic least-squares LOO baseline.

Treats the +1/-1 labels as regression targets for a ridge-regularized GP.
The LOO moments come out in closed form from a single factorization of
(K + lambda I):

    mu_cav_i  = y_i - alpha_i * var_cav_i
    var_cav_i = 1 / Kbar_ii,   Kbar = (K + lambda I)^{-1},  alpha = Kbar y

and are squashed through the same cavity-predictive probit as the EP path.
Unlike EP there is nothing playing the role of site parameters, so the
derivatives below are exact and the optimization is a single smooth problem.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .ep import Cavity
from .errors import InputError, NumericalError
from .probit import log_phi


@dataclass(eq=False)
class LsLooState:
    alpha: np.ndarray  # (K + lambda I)^{-1} y
    kbar: np.ndarray  # (K + lambda I)^{-1}
    loo_mean: np.ndarray
    loo_var: np.ndarray

    def cavity(self):
        return Cavity(self.loo_mean, self.loo_var)


def ls_loo(K, y, lam):
    """Closed-form LOO moments from one factorization of (K + lambda I)."""
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam <= 0.0:
        raise InputError("ridge must be positive")
    n = K.shape[0]
    if y.shape != (n,):
        raise InputError("label vector length does not match kernel size")
    try:
        factor = cho_factor(K + lam * np.eye(n), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"factorization of (K + lambda I) failed: {exc}") from exc
    kbar = cho_solve(factor, np.eye(n))
    kbar = 0.5 * (kbar + kbar.T)
    alpha = kbar @ y
    loo_var = 1.0 / np.diag(kbar)
    loo_mean = y - alpha * loo_var
    return LsLooState(alpha, kbar, loo_mean, loo_var)


def ls_loo_derivatives(K, dK_list, lam, state, ridge_index=None):
    """Exact derivatives of the LOO moments for each theta_j.

    dKbar_j = -Kbar (dK_j + dlam_j I) Kbar with dlam_j = lam at the log-ridge
    coordinate (chain rule through lambda = exp(log_ridge)) and 0 elsewhere;
    ``None`` entries of ``dK_list`` mean dK_j = 0. Returns (dmu, dvar), each
    n x n_params.
    """
    kbar = state.kbar
    n = kbar.shape[0]
    # loo_mean = y - alpha * loo_var, so the targets are recoverable exactly
    y = state.loo_mean + state.alpha * state.loo_var

    n_params = len(dK_list)
    dmu = np.zeros((n, n_params))
    dvar = np.zeros((n, n_params))
    for j, dK in enumerate(dK_list):
        ridge_term = lam if (ridge_index is not None and j == ridge_index) else 0.0
        if dK is None and ridge_term == 0.0:
            continue
        M = np.zeros_like(kbar) if dK is None else np.asarray(dK, dtype=float).copy()
        if ridge_term != 0.0:
            M = M + ridge_term * np.eye(n)
        dkbar = -kbar @ M @ kbar
        dvar_j = -np.diag(dkbar) / np.diag(kbar) ** 2
        dalpha = dkbar @ y
        dmu_j = -state.loo_var * dalpha - state.alpha * dvar_j
        dvar[:, j] = dvar_j
        dmu[:, j] = dmu_j
    return dmu, dvar


def ls_predict(X_train, y, h, X_test):
    """Test-time prediction mirroring the LOO construction.

    mu* = k*^T (K + lambda I)^{-1} y and s2* = k(x*,x*) + lambda
    - k*^T (K + lambda I)^{-1} k*; the + lambda keeps the test variance on the
    same footing as the LOO variance 1/Kbar_ii, which includes the ridge.
    """
    from .kernel import kernel_matrix

    lam = h.ridge
    if lam is None:
        raise InputError("hyperparameters carry no ridge")
    X_train = np.asarray(X_train, dtype=float)
    y = np.asarray(y, dtype=float)
    K = kernel_matrix(X_train, h)
    Ks = kernel_matrix(X_train, h, X_test)
    try:
        factor = cho_factor(K + lam * np.eye(K.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"factorization of (K + lambda I) failed: {exc}") from exc
    mean = Ks.T @ cho_solve(factor, y)
    var = h.signal_variance + lam - np.sum(Ks * cho_solve(factor, Ks), axis=0)
    var = np.maximum(var, 1e-12 * h.signal_variance)
    prob_pos = np.asarray(
        np.exp(log_phi((mean + h.bias) / np.sqrt(1.0 + var))), dtype=float
    )
    return mean, var, prob_pos
