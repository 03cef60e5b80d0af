"""Hyperparameter selection drivers.

Four strategies share the machinery here:

* ``ep_cv_optimize`` -- EM-style loop: the E-step refits the EP sites at the
  current hyperparameters, the M-step performs exactly one backtracking line
  search on a LOO criterion with the sites held fixed (the kernel matrix,
  posterior, cavity and criterion are recomputed at every trial point).
* ``ml_optimize``    -- same skeleton, maximizing the EP evidence; the
  fixed-site gradient is taken by central finite differences.
* ``ls_cv_optimize`` -- plain smooth minimization of the NLP of the
  least-squares LOO baseline with fully analytic gradients.
* ``two_step_bias``  -- NLP optimization over all hyperparameters followed by
  smoothed-F ascent restricted to the likelihood bias.

Outer iterations are accepted only if the refreshed (post-E-step) objective
does not move against the optimization direction, which makes the recorded
objective sequence monotone and the drivers deterministic.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .ep import (
    EpOptions,
    cavity_from_posterior,
    ep_fit,
    log_marginal_likelihood,
    posterior_from_sites,
)
from .errors import (
    CriterionUndefinedError,
    EpFitError,
    InputError,
    NegativeCavityError,
    NumericalError,
    StateError,
)
from .kernel import Hyperparams, add_jitter, default_hyperparams, kernel_grad, kernel_matrix
from .loo import (
    cavity_derivatives,
    complete_loo,
    loo_predictive,
    nlp,
    smoothed_auc,
    smoothed_fmeasure,
    smoothed_wer,
)
from .lscv import ls_loo, ls_loo_derivatives
from .metrics import confusion, true_fmeasure

METHODS = (
    "EP_ML",
    "EP_CV_NLP",
    "EP_CV_FM",
    "EP_CV_WER",
    "EP_CV_AUC",
    "LS_CV_NLP",
    "NLP_FM_BIAS",
)

#: +1 maximize, -1 minimize
_DIRECTION = {"nlp": -1, "fm": 1, "wer": -1, "auc": 1, "ml": 1}

_TRIAL_ERRORS = (NumericalError, NegativeCavityError, StateError, EpFitError)


@dataclass
class SelectOptions:
    outer_max: int = 50
    obj_tol: float = 1e-5  # relative objective change between outer iterations
    grad_tol: float = 1e-4
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    init_step: float = 1.0
    min_step: float = 1e-8
    fd_step: float = 1e-4  # evidence gradient step per log-coordinate
    zeta: float = 0.5
    tau: float = 1.0
    ridge_box: float = 0.1  # lambda <= ridge_box * signal variance
    mask: np.ndarray | None = None  # optimize only the marked coordinates
    ep: EpOptions = field(default_factory=EpOptions)


@dataclass(eq=False)
class TraceRecord:
    iteration: int
    theta: np.ndarray
    value: float
    grad_norm: float
    smoothed_metric: float
    true_metric: float | None
    ep_sweeps: int
    step_size: float | None = None
    accepted_value: float | None = None  # frozen-site value at the accepted step


@dataclass(eq=False)
class OptTrace:
    records: list = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def values(self):
        return np.array([r.value for r in self.records])


@dataclass(eq=False)
class SelectionResult:
    method: str
    best_theta: Hyperparams
    final_value: float
    trace: OptTrace
    converged: bool

    @property
    def iterations(self):
        return len(self.trace)


def _criterion_eval(kind, loo, y, opts):
    if kind == "nlp":
        return nlp(loo)
    if kind == "fm":
        return smoothed_fmeasure(loo, y, opts.zeta)
    if kind == "wer":
        return smoothed_wer(loo, y, opts.tau)
    if kind == "auc":
        return smoothed_auc(loo, y)
    raise InputError(f"unknown criterion kind {kind!r}")


def _true_loo_metric(kind, prob_pos, y, opts):
    """Hard-threshold counterpart of the smooth criterion, from LOO probs."""
    cc = confusion(prob_pos, y, 0.5)
    if kind == "fm":
        return true_fmeasure(cc, opts.zeta)
    if kind == "wer":
        if cc.n_pos == 0 or cc.n_neg == 0:
            return None
        tp, fp = cc.a / cc.n_pos, cc.c / cc.n_neg
        return (cc.n_pos * (1.0 - tp) + opts.tau * cc.n_neg * fp) / (
            cc.n_pos + opts.tau * cc.n_neg
        )
    if kind == "auc":
        if cc.n_pos == 0 or cc.n_neg == 0:
            return None
        return 0.5 * (1.0 + cc.a / cc.n_pos - cc.c / cc.n_neg)
    return (cc.b + cc.c) / cc.n  # nlp / ml: LOO misclassification rate


def _resolve_mask(mask, n_params):
    if mask is None:
        return np.ones(n_params, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n_params,):
        raise InputError(f"mask must have shape ({n_params},)")
    if not mask.any():
        raise InputError("mask disables every coordinate")
    return mask


class _EpCvObjective:
    """Frozen-site criterion evaluation for the EM loop."""

    def __init__(self, X, y, kind, opts):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.kind = kind
        self.opts = opts
        self.sign = _DIRECTION[kind]

    def kernel(self, h):
        return add_jitter(kernel_matrix(self.X, h))

    def e_step(self, h):
        return ep_fit(self.kernel(h), self.y, h.bias, self.opts.ep)

    def post_value(self, fit, h):
        loo = loo_predictive(fit.cavity, self.y, h.bias)
        return _criterion_eval(self.kind, loo, self.y, self.opts).value

    def surrogate(self, h, sites):
        K = self.kernel(h)
        cavity = cavity_from_posterior(posterior_from_sites(K, sites), sites)
        loo = loo_predictive(cavity, self.y, h.bias)
        return _criterion_eval(self.kind, loo, self.y, self.opts).value

    def value_grad(self, h, fit, mask):
        K = self.kernel(h)
        dK_list = [
            kernel_grad(self.X, h, j, K=K) if mask[j] else None
            for j in range(h.n_kernel_params)
        ]
        dK_list += [None] * (h.n_params - h.n_kernel_params)
        derivs = cavity_derivatives(K, dK_list, fit.sites, fit.posterior)
        loo = complete_loo(
            fit.cavity, derivs, self.y, h.bias,
            bias_index=h.bias_index if mask[h.bias_index] else None,
        )
        crit = _criterion_eval(self.kind, loo, self.y, self.opts)
        grad = np.where(mask, crit.gradient, 0.0)
        return crit.value, grad, loo.prob_pos


class _EvidenceObjective:
    """Frozen-site EP evidence with a finite-difference gradient."""

    kind = "ml"
    sign = 1

    def __init__(self, X, y, opts):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.opts = opts

    def kernel(self, h):
        return add_jitter(kernel_matrix(self.X, h))

    def e_step(self, h):
        return ep_fit(self.kernel(h), self.y, h.bias, self.opts.ep)

    def post_value(self, fit, h):
        return fit.log_ml

    def surrogate(self, h, sites):
        K = self.kernel(h)
        cavity = cavity_from_posterior(posterior_from_sites(K, sites), sites)
        return log_marginal_likelihood(K, sites, cavity, self.y, h.bias)

    def value_grad(self, h, fit, mask):
        vec = h.to_vector()
        grad = np.zeros_like(vec)
        step = self.opts.fd_step
        for j in np.flatnonzero(mask):
            plus, minus = vec.copy(), vec.copy()
            plus[j] += step
            minus[j] -= step
            grad[j] = (
                self.surrogate(h.with_vector(plus), fit.sites)
                - self.surrogate(h.with_vector(minus), fit.sites)
            ) / (2.0 * step)
        loo = loo_predictive(fit.cavity, self.y, h.bias)
        return fit.log_ml, grad, loo.prob_pos


def _em_loop(objective, init, opts, method):
    """Shared E-step / one-line-search M-step loop."""
    h = init
    mask = _resolve_mask(opts.mask, h.n_params)
    sign = objective.sign
    trace = OptTrace()
    converged = False

    fit = objective.e_step(h)
    k = 0
    while True:
        value, grad, prob_pos = objective.value_grad(h, fit, mask)
        grad_norm = float(np.linalg.norm(grad))
        record = TraceRecord(
            iteration=k,
            theta=h.to_vector(),
            value=value,
            grad_norm=grad_norm,
            smoothed_metric=value,
            true_metric=_true_loo_metric(objective.kind, prob_pos, objective.y, opts),
            ep_sweeps=fit.sweeps_used,
        )
        trace.append(record)
        if grad_norm <= opts.grad_tol:
            converged = True
            break
        if k >= opts.outer_max:
            break

        # one backtracking line search with the sites frozen
        direction = sign * grad / grad_norm
        vec = h.to_vector()
        accepted = None
        t = opts.init_step
        while t >= opts.min_step:
            try:
                h_t = h.with_vector(vec + t * direction)
                value_t = objective.surrogate(h_t, fit.sites)
            except _TRIAL_ERRORS:
                t *= opts.backtrack
                continue
            if sign * (value_t - value) < opts.armijo_c1 * t * grad_norm:
                t *= opts.backtrack
                continue
            try:
                fit_t = objective.e_step(h_t)
            except _TRIAL_ERRORS:
                t *= opts.backtrack
                continue
            value_refit = objective.post_value(fit_t, h_t)
            # refusing steps the refreshed sites disagree with keeps the
            # outer objective monotone in its optimization direction
            if sign * (value_refit - value) < -1e-12 * max(1.0, abs(value)):
                t *= opts.backtrack
                continue
            accepted = (h_t, fit_t, value_t, value_refit, t)
            break

        if accepted is None:
            converged = True  # no admissible step: numerically stationary
            break

        h, fit, value_t, value_refit, t = accepted
        record.step_size = t
        record.accepted_value = value_t
        k += 1
        if abs(value_refit - value) <= opts.obj_tol * max(1.0, abs(value)):
            value_f, grad_f, prob_f = objective.value_grad(h, fit, mask)
            trace.append(
                TraceRecord(
                    iteration=k,
                    theta=h.to_vector(),
                    value=value_f,
                    grad_norm=float(np.linalg.norm(grad_f)),
                    smoothed_metric=value_f,
                    true_metric=_true_loo_metric(objective.kind, prob_f, objective.y, opts),
                    ep_sweeps=fit.sweeps_used,
                )
            )
            converged = True
            break

    return SelectionResult(method, h, trace.records[-1].value, trace, converged)


def ep_cv_optimize(X, y, criterion_kind, init=None, opts=None):
    """EP-CV selection on one of the smooth LOO criteria.

    ``criterion_kind`` is one of ``nlp``, ``fm``, ``wer``, ``auc``.
    """
    opts = opts or SelectOptions()
    kind = criterion_kind.lower()
    if kind not in ("nlp", "fm", "wer", "auc"):
        raise InputError(f"unknown criterion {criterion_kind!r}")
    y = np.asarray(y, dtype=float)
    if kind in ("fm", "wer", "auc") and (np.all(y > 0) or np.all(y < 0)):
        raise CriterionUndefinedError(f"criterion {kind} needs both classes present")
    if init is None:
        init = default_hyperparams(np.asarray(X).shape[1])
    method = {"nlp": "EP_CV_NLP", "fm": "EP_CV_FM", "wer": "EP_CV_WER", "auc": "EP_CV_AUC"}[kind]
    return _em_loop(_EpCvObjective(X, y, kind, opts), init, opts, method)


def ml_optimize(X, y, init=None, opts=None):
    """EP evidence maximization within the same EM skeleton."""
    opts = opts or SelectOptions()
    if init is None:
        init = default_hyperparams(np.asarray(X).shape[1])
    return _em_loop(_EvidenceObjective(X, y, opts), init, opts, "EP_ML")


def two_step_bias(X, y, init=None, opts=None):
    """NLP over all hyperparameters, then smoothed-F over the bias only."""
    opts = opts or SelectOptions()
    step1 = ep_cv_optimize(X, y, "nlp", init=init, opts=opts)
    h1 = step1.best_theta
    mask = np.zeros(h1.n_params, dtype=bool)
    mask[h1.bias_index] = True
    step2 = ep_cv_optimize(X, y, "fm", init=h1, opts=replace(opts, mask=mask))

    trace = OptTrace(list(step1.trace.records))
    offset = len(step1.trace)
    for rec in step2.trace.records:
        trace.append(replace(rec, iteration=rec.iteration + offset))
    return SelectionResult(
        "NLP_FM_BIAS",
        step2.best_theta,
        step2.final_value,
        trace,
        step1.converged and step2.converged,
    )


def _clamp_ridge(h, box):
    cap = np.log(box) + h.log_signal_variance
    if h.log_ridge is None or h.log_ridge <= cap:
        return h
    return replace(h, log_ridge=float(cap))


def ls_cv_optimize(X, y, init=None, opts=None):
    """Minimize LOO NLP of the least-squares baseline with analytic gradients.

    The ridge stays inside its box (lambda <= ridge_box * signal variance) by
    projection after every step.
    """
    opts = opts or SelectOptions()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if init is None:
        init = default_hyperparams(X.shape[1], with_ridge=True)
    if init.log_ridge is None:
        raise InputError("LS-CV needs hyperparameters with a ridge")
    h = _clamp_ridge(init, opts.ridge_box)
    mask = _resolve_mask(opts.mask, h.n_params)

    def evaluate(h, with_grad):
        K = kernel_matrix(X, h)
        state = ls_loo(K, y, h.ridge)
        cavity = state.cavity()
        if not with_grad:
            loo = loo_predictive(cavity, y, h.bias)
            return nlp(loo).value, None, loo.prob_pos
        dK_list = [
            kernel_grad(X, h, j, K=K) if mask[j] else None
            for j in range(h.n_kernel_params)
        ]
        dK_list += [None, None]  # bias and ridge carry no direct kernel term
        derivs = ls_loo_derivatives(
            K, dK_list, h.ridge, state,
            ridge_index=h.ridge_index if mask[h.ridge_index] else None,
        )
        loo = complete_loo(
            cavity, derivs, y, h.bias,
            bias_index=h.bias_index if mask[h.bias_index] else None,
        )
        crit = nlp(loo)
        return crit.value, np.where(mask, crit.gradient, 0.0), loo.prob_pos

    trace = OptTrace()
    converged = False
    k = 0
    while True:
        value, grad, prob_pos = evaluate(h, True)
        grad_norm = float(np.linalg.norm(grad))
        record = TraceRecord(
            iteration=k,
            theta=h.to_vector(),
            value=value,
            grad_norm=grad_norm,
            smoothed_metric=value,
            true_metric=_true_loo_metric("nlp", prob_pos, y, opts),
            ep_sweeps=0,
        )
        trace.append(record)
        if grad_norm <= opts.grad_tol:
            converged = True
            break
        if k >= opts.outer_max:
            break

        vec = h.to_vector()
        direction = -grad / grad_norm
        accepted = None
        t = opts.init_step
        while t >= opts.min_step:
            h_t = _clamp_ridge(h.with_vector(vec + t * direction), opts.ridge_box)
            slope = float(grad @ (h_t.to_vector() - vec))
            if slope >= 0.0:
                t *= opts.backtrack
                continue
            try:
                value_t = evaluate(h_t, False)[0]
            except _TRIAL_ERRORS:
                t *= opts.backtrack
                continue
            if value_t > value + opts.armijo_c1 * slope:
                t *= opts.backtrack
                continue
            accepted = (h_t, value_t, t)
            break
        if accepted is None:
            break  # stationary for the line search; convergence judged by the gradient
        h, value_t, t = accepted
        record.step_size = t
        record.accepted_value = value_t
        k += 1
        if abs(value_t - value) <= opts.obj_tol * max(1.0, abs(value)):
            value_f, grad_f, prob_f = evaluate(h, True)
            converged = float(np.linalg.norm(grad_f)) <= opts.grad_tol
            trace.append(
                TraceRecord(
                    iteration=k,
                    theta=h.to_vector(),
                    value=value_f,
                    grad_norm=float(np.linalg.norm(grad_f)),
                    smoothed_metric=value_f,
                    true_metric=_true_loo_metric("nlp", prob_f, y, opts),
                    ep_sweeps=0,
                )
            )
            break

    return SelectionResult("LS_CV_NLP", h, trace.records[-1].value, trace, converged)
