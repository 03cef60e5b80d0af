"""Leave-one-out predictive probabilities and the smoothed selection criteria.

The cavity distribution of each site doubles as the LOO predictive latent,
so p(y_i | x_i, S_-i) = Phi(y_i (mu_cav_i + bias) / sqrt(1 + var_cav_i)).
The four criteria (NLP, smoothed F-measure, smoothed WER, smoothed AUC) are
plain functions of these probabilities; their gradients flow through the
fixed-site derivatives of the cavity moments.

Everything here treats the site parameters as constants: this is the M-step
regime, where only the kernel matrix responds to the hyperparameters.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CriterionUndefinedError, InputError
from .probit import npdf, log_phi
from .ep import cavity_from_posterior, solve_k_plus_sigma

#: floor applied inside logarithms purely against underflow; not a clip
PROB_FLOOR = 1e-300


@dataclass(eq=False)
class LooPredictive:
    """LOO predictive probabilities and (optionally) their theta-Jacobians."""

    prob_label: np.ndarray  # p(y_i | x_i, S_-i)
    prob_pos: np.ndarray  # p(y_i = +1 | x_i, S_-i)
    jac_label: np.ndarray | None = None  # n x n_params
    jac_pos: np.ndarray | None = None


@dataclass(eq=False)
class CriterionValue:
    kind: str  # NLP | SmoothedF | SmoothedWER | SmoothedAUC
    value: float
    gradient: np.ndarray | None
    aux: dict = field(default_factory=dict)


def loo_predictive(cavity, y, gamma):
    """Probabilities only; attach Jacobians with ``predictive_jacobian``."""
    y = np.asarray(y, dtype=float)
    var = np.asarray(cavity.variance, dtype=float)
    if np.any(var <= 0.0):
        raise InputError("cavity variances must be positive")
    denom = np.sqrt(1.0 + var)
    z = (np.asarray(cavity.mean, dtype=float) + gamma) / denom
    prob_pos = np.exp(log_phi(z))
    prob_label = np.exp(log_phi(y * z))
    return LooPredictive(prob_label, prob_pos)


def cavity_derivatives(K, dK_list, sites, posterior):
    """Fixed-site derivatives of the cavity moments for each theta_j.

    ``dK_list`` holds one dK/dtheta_j per parameter; ``None`` entries mean the
    kernel does not depend on that parameter (bias, ridge) and yield zero
    columns. Returns (dmu, dvar), each n x n_params.

    The chain runs through R = I - (K+Sigma)^{-1} K:
        dC/dtheta_j   = R^T dK_j R
        dm/dtheta_j   = dC/dtheta_j Sigma^{-1} mu
        dvar_cav      = (var_cav^2 / C_ii^2) dC_ii
        dmu_cav       = (mu_cav/var_cav) dvar_cav
                        + (var_cav / C_ii^2) (C_ii dm_i - m_i dC_ii)
    Each non-zero parameter costs O(n^3) through the dK_j R product.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    C = posterior.cov
    m = posterior.mean
    c_diag = np.diag(C)
    _, nu = sites.precisions()

    R = np.eye(n) - solve_k_plus_sigma(K, sites, K)
    r_nu = R @ nu

    cav = cavity_from_posterior(posterior, sites)
    var_cav, mu_cav = cav.variance, cav.mean

    n_params = len(dK_list)
    dmu = np.zeros((n, n_params))
    dvar = np.zeros((n, n_params))
    active = [j for j, dK in enumerate(dK_list) if dK is not None]
    if not active:
        return dmu, dvar
    for j in active:
        if np.shape(dK_list[j]) != K.shape:
            raise InputError(
                f"dK_list[{j}] has shape {np.shape(dK_list[j])}, expected {K.shape}"
            )
    dKs = np.stack([dK_list[j] for j in active])  # (m, n, n)
    dKR = dKs @ R  # batched, the O(n^3) cost per parameter
    dc_diag = np.sum(R[None, :, :] * dKR, axis=1)  # diag(R^T dK_j R), (m, n)
    dm = (dKs @ r_nu) @ R  # rows are R^T (dK_j r_nu)

    var_ratio = var_cav**2 / c_diag**2
    for pos, j in enumerate(active):
        dvar_j = var_ratio * dc_diag[pos]
        dvar[:, j] = dvar_j
        dmu[:, j] = (mu_cav / var_cav) * dvar_j + (var_cav / c_diag**2) * (
            c_diag * dm[pos] - m * dc_diag[pos]
        )
    return dmu, dvar


def predictive_jacobian(cavity, cavity_derivs, y, gamma, bias_index=None):
    """Complete a LooPredictive with dp/dtheta_j from the cavity derivatives.

    With z_i = (mu_cav_i + gamma)/sqrt(1 + var_cav_i):
        dp_i/dtheta_j = N(z_i) y_i / sqrt(1+var_cav_i)
                        * (dmu_cav_i - 0.5 z_i dvar_cav_i / sqrt(1+var_cav_i))
    and dp_i/dgamma = N(z_i) y_i / sqrt(1+var_cav_i) (the cavity carries no
    bias dependence while the sites are fixed); ``bias_index`` marks gamma's
    column.
    """
    y = np.asarray(y, dtype=float)
    dmu, dvar = cavity_derivs
    var = np.asarray(cavity.variance, dtype=float)
    denom = np.sqrt(1.0 + var)
    z = (np.asarray(cavity.mean, dtype=float) + gamma) / denom
    coeff = npdf(z) / denom  # shared by all columns

    jac_pos = coeff[:, None] * (dmu - 0.5 * (z / denom)[:, None] * dvar)
    if bias_index is not None:
        jac_pos[:, bias_index] += coeff
    jac_label = y[:, None] * jac_pos
    return jac_label, jac_pos


def complete_loo(cavity, cavity_derivs, y, gamma, bias_index=None):
    loo = loo_predictive(cavity, y, gamma)
    loo.jac_label, loo.jac_pos = predictive_jacobian(
        cavity, cavity_derivs, y, gamma, bias_index=bias_index
    )
    return loo


def _counts(loo, y):
    y = np.asarray(y)
    pos = y > 0
    n_pos = int(np.count_nonzero(pos))
    n_neg = y.size - n_pos
    a_smooth = float(np.sum(loo.prob_pos[pos]))
    m_plus = float(np.sum(loo.prob_pos))
    d_a = d_m = None
    if loo.jac_pos is not None:
        d_a = np.sum(loo.jac_pos[pos], axis=0)
        d_m = np.sum(loo.jac_pos, axis=0)
    return pos, n_pos, n_neg, a_smooth, m_plus, d_a, d_m


def nlp(loo):
    """Averaged negative log LOO predictive probability (minimize)."""
    p = np.maximum(loo.prob_label, PROB_FLOOR)
    value = float(-np.mean(np.log(p)))
    gradient = None
    if loo.jac_label is not None:
        gradient = -np.mean(loo.jac_label / p[:, None], axis=0)
    return CriterionValue("NLP", value, gradient)


def smoothed_fmeasure(loo, y, zeta=0.5):
    """Smoothed F-measure A / (zeta n_pos + (1-zeta) m_plus) (maximize)."""
    if not 0.0 <= zeta <= 1.0:
        raise InputError("zeta must lie in [0, 1]")
    _, n_pos, _, a, m_plus, d_a, d_m = _counts(loo, y)
    if n_pos == 0:
        raise CriterionUndefinedError("smoothed F-measure needs at least one positive")
    eta = zeta * n_pos + (1.0 - zeta) * m_plus
    value = a / eta
    gradient = None
    if d_a is not None:
        gradient = (eta * d_a - a * (1.0 - zeta) * d_m) / eta**2
    return CriterionValue(
        "SmoothedF", float(value), gradient, aux={"A": a, "m_plus": m_plus}
    )


def smoothed_wer(loo, y, tau=1.0):
    """Smoothed weighted error rate with cost ratio tau (minimize)."""
    if not 0.0 <= tau <= 1.0:
        raise InputError("tau must lie in [0, 1]")
    _, n_pos, n_neg, a, m_plus, d_a, d_m = _counts(loo, y)
    if n_pos == 0 or n_neg == 0:
        raise CriterionUndefinedError("smoothed WER needs both classes")
    tp = a / n_pos
    fp = (m_plus - a) / n_neg
    denom = n_pos + tau * n_neg
    value = (n_pos * (1.0 - tp) + tau * n_neg * fp) / denom
    gradient = None
    if d_a is not None:
        gradient = (-d_a + tau * (d_m - d_a)) / denom
    return CriterionValue(
        "SmoothedWER",
        float(value),
        gradient,
        aux={"A": a, "m_plus": m_plus, "TP": tp, "FP": fp},
    )


def smoothed_auc(loo, y):
    """Smoothed (1 + TP - FP)/2 trade-off (maximize)."""
    _, n_pos, n_neg, a, m_plus, d_a, d_m = _counts(loo, y)
    if n_pos == 0 or n_neg == 0:
        raise CriterionUndefinedError("smoothed AUC needs both classes")
    tp = a / n_pos
    fp = (m_plus - a) / n_neg
    value = 0.5 * (1.0 + tp - fp)
    gradient = None
    if d_a is not None:
        gradient = 0.5 * (d_a / n_pos - (d_m - d_a) / n_neg)
    return CriterionValue(
        "SmoothedAUC",
        float(value),
        gradient,
        aux={"A": a, "m_plus": m_plus, "TP": tp, "FP": fp},
    )
