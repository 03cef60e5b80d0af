"""Expectation propagation for the probit-likelihood GP classifier.

The likelihood of example i is Phi(y_i * (f_i + bias)). Each likelihood term
is approximated by a scaled Gaussian site t(f_i) = Z_i N(f_i | mu_i, s2_i);
sweeps visit the sites in index order and re-match marginal moments against
the exact likelihood until the site parameters stop moving.

Site variances may be +inf, which encodes an uninitialized (flat) site.
Internally sites are handled in natural form (tau = 1/s2, nu = mu/s2) so flat
sites are plain zeros; all public state is expressed in (mean, variance).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EpFitError, InputError, NegativeCavityError, NumericalError, StateError
from .probit import log_phi, probit_moments


@dataclass(eq=False)
class SiteParams:
    """Per-example Gaussian likelihood approximations."""

    site_mean: np.ndarray
    site_variance: np.ndarray  # entries in (0, +inf]; +inf == flat site
    site_lognorm: np.ndarray

    def precisions(self):
        """Natural parameters (tau, nu); flat sites map to zeros."""
        with np.errstate(divide="ignore"):
            tau = np.where(np.isinf(self.site_variance), 0.0, 1.0 / self.site_variance)
        nu = np.where(tau > 0.0, self.site_mean * tau, 0.0)
        return tau, nu


def sites_from_natural(tau, nu, lognorm=None):
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    with np.errstate(divide="ignore"):
        var = np.where(tau > 0.0, 1.0 / np.where(tau > 0.0, tau, 1.0), np.inf)
    mean = np.where(tau > 0.0, nu / np.where(tau > 0.0, tau, 1.0), 0.0)
    if lognorm is None:
        lognorm = np.zeros_like(tau)
    return SiteParams(mean, var, np.asarray(lognorm, dtype=float))


def flat_sites(n):
    return SiteParams(np.zeros(n), np.full(n, np.inf), np.zeros(n))


@dataclass(eq=False)
class Posterior:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(eq=False)
class Cavity:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(eq=False)
class EpState:
    sites: SiteParams
    posterior: Posterior
    cavity: Cavity
    log_ml: float
    sweeps_used: int
    converged: bool


@dataclass
class EpOptions:
    max_sweeps: int = 60
    tol: float = 1e-6  # sup-norm change of natural site parameters per sweep


def _whitened_solve(K, tau):
    """Cholesky pieces of B = I + sqrt(tau) K sqrt(tau).

    Returns (s, L) with s = sqrt(tau) and L the lower Cholesky factor of B,
    from which (K + Sigma)^{-1} = diag(s) B^{-1} diag(s) without ever forming
    Sigma or K^{-1}.
    """
    if np.any(tau < 0.0):
        raise StateError("negative site precision")
    s = np.sqrt(tau)
    B = np.eye(K.shape[0]) + (s[:, None] * K) * s[None, :]
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky of whitened system failed: {exc}") from exc
    return s, L


def posterior_from_sites(K, sites):
    """Posterior moments C = K - K (K+Sigma)^{-1} K and m = C Sigma^{-1} mu.

    Uses the whitened form of (K+Sigma)^{-1}, so flat sites cost nothing and
    K is never inverted.
    """
    K = np.asarray(K, dtype=float)
    tau, nu = sites.precisions()
    if tau.shape[0] != K.shape[0]:
        raise InputError("site count does not match kernel size")
    if np.any(sites.site_variance <= 0.0):
        raise StateError("site variances must be positive")
    s, L = _whitened_solve(K, tau)
    V = solve_triangular(L, s[:, None] * K, lower=True)
    C = K - V.T @ V
    C = 0.5 * (C + C.T)
    m = C @ nu
    return Posterior(m, C)


def cavity_from_posterior(posterior, sites):
    """Cavity moments obtained by removing each site from its own marginal."""
    c_diag = np.diag(posterior.cov)
    if np.any(c_diag <= 0.0):
        raise StateError("posterior marginal variances must be positive")
    tau, nu = sites.precisions()
    inv_var = 1.0 / c_diag - tau
    if np.any(inv_var <= 0.0):
        bad = int(np.argmin(inv_var))
        raise NegativeCavityError(f"non-positive cavity variance at site {bad}")
    var = 1.0 / inv_var
    mean = var * (posterior.mean / c_diag - nu)
    return Cavity(mean, var)


def site_update(cavity_i, y_i, gamma):
    """Moment-match one probit site against its cavity.

    ``cavity_i`` is the (mean, variance) pair with variance > 0. Returns
    (site_mean, site_variance, site_lognorm); a non-viable update (matched
    variance not smaller than the cavity's) is signalled by returning None so
    the caller can leave the site unchanged for this sweep.
    """
    mu_cav, var_cav = float(cavity_i[0]), float(cavity_i[1])
    if var_cav <= 0.0:
        raise StateError("cavity variance must be positive")
    log_z, mean, var = probit_moments(mu_cav, var_cav, y_i, gamma)
    if not (0.0 < var):
        return None
    tau_new = 1.0 / var - 1.0 / var_cav
    if tau_new <= 0.0:
        return None
    site_var = 1.0 / tau_new
    site_mean = site_var * (mean / var - mu_cav / var_cav)
    # lognorm makes int q_cav * t equal the exact zeroth moment
    tot = var_cav + site_var
    site_lognorm = (
        float(log_z)
        + 0.5 * np.log(2.0 * np.pi * tot)
        + 0.5 * (mu_cav - site_mean) ** 2 / tot
    )
    return site_mean, site_var, site_lognorm


def ep_fit(K, y, gamma, opts=None):
    """Run EP to convergence on a (jittered) kernel matrix.

    Sweeps the sites in index order; a sweep's convergence measure is the
    sup-norm change of the natural site parameters. Updates that would make a
    site or cavity variance non-positive are skipped for that sweep.
    """
    opts = opts or EpOptions()
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = K.shape[0]
    if y.shape != (n,):
        raise InputError("label vector length does not match kernel size")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InputError("labels must be +1/-1")

    tau = np.zeros(n)
    nu = np.zeros(n)
    lognorm = np.zeros(n)
    C = K.copy()
    m = np.zeros(n)

    converged = False
    sweeps = 0
    for sweeps in range(1, opts.max_sweeps + 1):
        tau_old = tau.copy()
        nu_old = nu.copy()
        for i in range(n):
            cav_prec = 1.0 / C[i, i] - tau[i]
            if cav_prec <= 0.0:
                continue  # removing this site breaks the marginal; retry next sweep
            var_cav = 1.0 / cav_prec
            mu_cav = var_cav * (m[i] / C[i, i] - nu[i])
            upd = site_update((mu_cav, var_cav), y[i], gamma)
            if upd is None:
                continue
            site_mean, site_var, site_lognorm = upd
            tau_new = 1.0 / site_var
            delta = tau_new - tau[i]
            tau[i] = tau_new
            nu[i] = site_mean * tau_new
            lognorm[i] = site_lognorm
            # rank-1 downdate of the posterior covariance, then refresh the mean
            ci = C[:, i].copy()
            C -= (delta / (1.0 + delta * C[i, i])) * np.outer(ci, ci)
            m = C @ nu
        # full recompute once per sweep keeps the rank-1 arithmetic honest
        sites = sites_from_natural(tau, nu, lognorm)
        post = posterior_from_sites(K, sites)
        C, m = post.cov, post.mean
        change = max(
            float(np.max(np.abs(tau - tau_old))), float(np.max(np.abs(nu - nu_old)))
        )
        if change < opts.tol:
            converged = True
            break

    sites = sites_from_natural(tau, nu, lognorm)
    posterior = posterior_from_sites(K, sites)
    try:
        cavity = cavity_from_posterior(posterior, sites)
    except NegativeCavityError as exc:
        raise EpFitError(
            f"EP ended with a non-positive cavity variance after {sweeps} sweeps: {exc}"
        ) from exc
    log_ml = log_marginal_likelihood(K, sites, cavity, y, gamma)
    return EpState(sites, posterior, cavity, log_ml, sweeps, converged)


def log_marginal_likelihood(K, sites, cavity, y, gamma):
    """EP evidence: -0.5 log|K+Sigma| - 0.5 mu^T (K+Sigma)^{-1} mu + sum log w_i.

    w_i = Phi(z_i) * exp((mu_cav_i - mu_i)^2 / (2 (var_cav_i + s2_i))) *
    sqrt(var_cav_i + s2_i) with z_i = y_i (mu_cav_i + gamma) / sqrt(1 +
    var_cav_i). Evaluated in a rearranged form where the determinant and the
    sqrt terms cancel sitewise, which stays finite for flat sites.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    tau, nu = sites.precisions()
    s, L = _whitened_solve(K, tau)
    post = posterior_from_sites(K, sites)

    var_cav = cavity.variance
    mu_cav = cavity.mean
    if np.any(var_cav <= 0.0):
        raise StateError("cavity variances must be positive")

    z = y * (mu_cav + gamma) / np.sqrt(1.0 + var_cav)
    logdet_terms = -np.sum(np.log(np.diag(L))) + 0.5 * np.sum(np.log1p(tau * var_cav))
    informative = tau > 0.0
    quad_site = np.zeros_like(tau)
    quad_site[informative] = (tau * mu_cav - nu)[informative] ** 2 / (
        2.0 * tau[informative] * (1.0 + tau[informative] * var_cav[informative])
    )
    quad = (
        -0.5 * float(np.sum(nu[informative] ** 2 / tau[informative]))
        + 0.5 * float(nu @ post.mean)
        + float(np.sum(quad_site))
    )
    return float(logdet_terms + quad + np.sum(log_phi(z)))


def predict(X_train, state, h, X_test):
    """Latent mean/variance and positive-class probability at test points.

    mu* = k*^T (K+Sigma)^{-1} mu, s2* = k(x*,x*) - k*^T (K+Sigma)^{-1} k*,
    p(y*=+1) = Phi((mu* + gamma) / sqrt(1 + s2*)).
    """
    from .kernel import add_jitter, kernel_matrix

    X_train = np.asarray(X_train, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim != 2 or X_test.shape[1] != X_train.shape[1]:
        raise InputError("test feature dimension does not match training data")

    K = add_jitter(kernel_matrix(X_train, h))
    Ks = kernel_matrix(X_train, h, X_test)  # n x n_test
    tau, nu = state.sites.precisions()
    s, L = _whitened_solve(K, tau)

    # alpha = (I - (K+Sigma)^{-1} K) nu, so mu* = k*^T alpha
    t = solve_triangular(L, s * (K @ nu), lower=True)
    alpha = nu - s * solve_triangular(L, t, lower=True, trans="T")
    mean = Ks.T @ alpha

    V = solve_triangular(L, s[:, None] * Ks, lower=True)
    b0 = h.signal_variance
    var = b0 - np.sum(V * V, axis=0)
    var = np.clip(var, 1e-12 * b0, b0)

    prob_pos = np.asarray(
        np.exp(log_phi((mean + h.bias) / np.sqrt(1.0 + var))), dtype=float
    )
    return mean, var, prob_pos


def solve_k_plus_sigma(K, sites, rhs):
    """(K + Sigma)^{-1} rhs through the whitened factorization."""
    tau, _ = sites.precisions()
    s, L = _whitened_solve(K, tau)
    t = solve_triangular(L, s[:, None] * rhs if rhs.ndim == 2 else s * rhs, lower=True)
    out = solve_triangular(L, t, lower=True, trans="T")
    return s[:, None] * out if rhs.ndim == 2 else s * out
