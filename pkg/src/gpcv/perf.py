"""Wall-clock scaling of the fixed-site criterion gradient.

One M-step gradient costs O(n^3) per kernel hyperparameter through the
dK @ R products in the cavity derivatives. ``fitted_exponent`` times that
path over a range of problem sizes and fits a power law; run as

    python -m gpcv.perf

(ideally with BLAS pinned to one thread) to print the JSON measurement.
"""

import json
import time

import numpy as np

from .ep import ep_fit
from .kernel import add_jitter, default_hyperparams, kernel_grad, kernel_matrix
from .loo import cavity_derivatives, complete_loo, smoothed_fmeasure


def mstep_gradient_seconds(n, repeats=7, seed=0, dim=3):
    """Median wall time of one criterion gradient at problem size n."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dim))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=n) > 0, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    h = default_hyperparams(dim)
    K = add_jitter(kernel_matrix(X, h))
    fit = ep_fit(K, y, h.bias)

    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        dK_list = [kernel_grad(X, h, j, K=K) for j in range(h.n_kernel_params)] + [None]
        derivs = cavity_derivatives(K, dK_list, fit.sites, fit.posterior)
        loo = complete_loo(fit.cavity, derivs, y, h.bias, bias_index=h.bias_index)
        smoothed_fmeasure(loo, y, 0.5)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def fitted_exponent(sizes=(100, 200, 400), repeats=7, seed=0):
    """Least-squares slope of log(time) against log(n)."""
    seconds = [mstep_gradient_seconds(n, repeats=repeats, seed=seed) for n in sizes]
    slope = np.polyfit(np.log(np.asarray(sizes, float)), np.log(seconds), 1)[0]
    return float(slope), dict(zip((str(s) for s in sizes), seconds))


if __name__ == "__main__":
    exponent, seconds = fitted_exponent()
    print(json.dumps({"exponent": exponent, "seconds": seconds}))
