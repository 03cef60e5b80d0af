"""ARD squared-exponential covariance and its log-parameter derivatives.

All positive hyperparameters live in log space so the optimizer works on an
unconstrained vector. The parameter vector layout is

    [log_signal_variance, log_lengthscales..., bias(, log_ridge)]

where ``log_lengthscales`` has length D (ARD) or 1 (single shared scale) and
``log_ridge`` is present only for the least-squares baseline.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError

#: relative diagonal jitter applied before any factorization of a kernel matrix
JITTER = 1e-10


@dataclass(eq=False)
class Hyperparams:
    """Working hyperparameter set: kernel amplitudes/widths, likelihood bias,
    and an optional ridge (least-squares baseline only)."""

    log_signal_variance: float
    log_lengthscales: np.ndarray  # shape (D,) for ARD or (1,) for shared scale
    bias: float
    log_ridge: float | None = None

    def __post_init__(self):
        self.log_lengthscales = np.atleast_1d(
            np.asarray(self.log_lengthscales, dtype=float)
        )

    @property
    def signal_variance(self):
        return float(np.exp(self.log_signal_variance))

    @property
    def lengthscales(self):
        return np.exp(self.log_lengthscales)

    @property
    def ridge(self):
        return None if self.log_ridge is None else float(np.exp(self.log_ridge))

    @property
    def n_kernel_params(self):
        return 1 + self.log_lengthscales.size

    @property
    def bias_index(self):
        return self.n_kernel_params

    @property
    def ridge_index(self):
        return None if self.log_ridge is None else self.n_kernel_params + 1

    @property
    def n_params(self):
        return self.n_kernel_params + 1 + (self.log_ridge is not None)

    def to_vector(self):
        vec = [self.log_signal_variance, *self.log_lengthscales, self.bias]
        if self.log_ridge is not None:
            vec.append(self.log_ridge)
        return np.asarray(vec, dtype=float)

    def with_vector(self, vec):
        """Rebuild from an optimizer vector with this instance's layout."""
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise InputError(f"expected {self.n_params} parameters, got {vec.size}")
        m = self.log_lengthscales.size
        return replace(
            self,
            log_signal_variance=float(vec[0]),
            log_lengthscales=vec[1 : 1 + m].copy(),
            bias=float(vec[1 + m]),
            log_ridge=float(vec[2 + m]) if self.log_ridge is not None else None,
        )

    def param_names(self):
        m = self.log_lengthscales.size
        names = ["log_signal_variance"]
        if m == 1:
            names.append("log_lengthscale")
        else:
            names.extend(f"log_lengthscale_{k}" for k in range(m))
        names.append("bias")
        if self.log_ridge is not None:
            names.append("log_ridge")
        return names


def default_hyperparams(n_dims, shared_scale=True, with_ridge=False):
    """Neutral starting point: unit signal variance, widths of D, zero bias.

    With unit-scaled features the expected squared distance between two
    points is about 2D, so widths near D put the exponent around -1.
    """
    m = 1 if shared_scale else n_dims
    return Hyperparams(
        log_signal_variance=0.0,
        log_lengthscales=np.full(m, np.log(float(n_dims))),
        bias=0.0,
        log_ridge=np.log(0.01) if with_ridge else None,
    )


def _check_features(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InputError(f"feature matrix must be 2-D and non-empty, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("feature matrix contains non-finite values")
    return X


def _widths(h, n_dims):
    w = h.lengthscales
    if w.size == 1:
        return np.full(n_dims, w[0])
    if w.size != n_dims:
        raise InputError(f"{w.size} lengthscales for {n_dims} feature dimensions")
    return w


def kernel_matrix(X, h, X2=None):
    """Squared-exponential covariance K_ij = b0 * exp(-0.5 * sum_k d_k^2 / b_k).

    With ``X2`` omitted returns the symmetric train kernel (diagonal exactly
    b0); otherwise the cross kernel between rows of ``X`` and ``X2``.
    """
    X = _check_features(X)
    b0 = h.signal_variance
    w = _widths(h, X.shape[1])
    Xs = X / np.sqrt(w)
    if X2 is None:
        sq = np.sum(Xs * Xs, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Xs @ Xs.T)
        np.maximum(d2, 0.0, out=d2)
        K = b0 * np.exp(-0.5 * d2)
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, b0)
        return K
    X2 = _check_features(X2)
    if X2.shape[1] != X.shape[1]:
        raise InputError("feature dimension mismatch between X and X2")
    X2s = X2 / np.sqrt(w)
    d2 = (
        np.sum(Xs * Xs, axis=1)[:, None]
        + np.sum(X2s * X2s, axis=1)[None, :]
        - 2.0 * (Xs @ X2s.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return b0 * np.exp(-0.5 * d2)


def kernel_grad(X, h, j, K=None):
    """dK/dtheta_j for a kernel parameter index j (log b0 or a log width).

    Derivatives are w.r.t. the log parameters: dK/dlog b0 = K and
    dK_ij/dlog b_k = K_ij * 0.5 * (x_ik - x_jk)^2 / b_k. Pass a precomputed
    ``K`` to avoid re-evaluating the kernel.
    """
    X = _check_features(X)
    if not 0 <= j < h.n_kernel_params:
        raise InputError(f"kernel parameter index {j} out of range")
    if K is None:
        K = kernel_matrix(X, h)
    if j == 0:
        return K.copy()
    w = h.lengthscales
    if w.size == 1:
        # shared width: 0.5 * sum_k d_k^2 / b
        Xs = X / np.sqrt(w[0])
        sq = np.sum(Xs * Xs, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Xs @ Xs.T)
    else:
        col = X[:, j - 1]
        d2 = (col[:, None] - col[None, :]) ** 2 / w[j - 1]
    np.maximum(d2, 0.0, out=d2)
    G = K * (0.5 * d2)
    G = 0.5 * (G + G.T)
    return G


def kernel_grads(X, h, K=None):
    """All dK/dtheta_j over the kernel parameter indices, in one pass.

    Returns a list of n x n arrays (views into one stacked block), cheaper
    than repeated ``kernel_grad`` calls when every coordinate is needed.
    """
    X = _check_features(X)
    if K is None:
        K = kernel_matrix(X, h)
    n = X.shape[0]
    m = h.n_kernel_params
    w = h.lengthscales
    grads = np.empty((m, n, n))
    np.copyto(grads[0], K)
    if w.size == 1:
        Xs = X / np.sqrt(w[0])
        sq = np.sum(Xs * Xs, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Xs @ Xs.T)
        np.maximum(d2, 0.0, out=d2)
        d2 *= 0.5
        d2 *= K
        np.copyto(grads[1], d2)
        grads[1] += grads[1].T.copy()
        grads[1] *= 0.5
    else:
        for k in range(w.size):
            col = X[:, k]
            d2 = (col[:, None] - col[None, :]) ** 2
            d2 *= 0.5 / w[k]
            d2 *= K
            np.copyto(grads[1 + k], d2)
            grads[1 + k] += grads[1 + k].T.copy()
            grads[1 + k] *= 0.5
    return [grads[j] for j in range(m)]


def add_jitter(K):
    """Return K plus a small diagonal jitter scaled to the mean diagonal."""
    K = np.asarray(K, dtype=float)
    return K + (JITTER * float(np.mean(np.diag(K)))) * np.eye(K.shape[0])
