"""Small numeric helpers shared across the package."""

import numpy as np


def soft_threshold(u, t):
    """Entrywise shrinkage max(|u| - t, 0) * sign(u). Ties go to 0."""
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def power_iteration_sym(matvec, dim, tol=1e-10, max_iter=10000):
    """Largest eigenvalue of a symmetric PSD operator given by ``matvec``.

    Deterministic start vector (normalized ones plus a small ramp so the
    iteration cannot start orthogonal to the leading eigenvector for
    sign-symmetric operators). Stops when the Rayleigh quotient is stable
    to ``tol`` relative, or after ``max_iter`` iterations.
    """
    if dim == 0:
        return 0.0
    v = np.ones(dim) + 1e-3 * np.arange(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ matvec(v))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1.0):
            return lam_new
        lam = lam_new
    return lam


def spectral_norm_sq(A, tol=1e-10, max_iter=10000):
    """Squared spectral norm of a dense or scipy.sparse matrix.

    Column vectors (a single column) short-circuit to the squared
    Euclidean norm; otherwise power iteration on A^T A.
    """
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    m, n = A.shape
    if n == 0 or m == 0:
        return 0.0
    if n == 1:
        col = np.asarray(A.todense()).ravel() if hasattr(A, "todense") else np.asarray(A).ravel()
        return float(col @ col)
    AT = A.T

    def matvec(v):
        return AT @ (A @ v)

    return power_iteration_sym(matvec, n, tol=tol, max_iter=max_iter)


def as_weights(values, n, name="weights", allow_zero=False):
    """Validate and return a 1-D float64 weight array of length ``n``.

    Scalars broadcast. Entries must be finite and positive
    (nonnegative when ``allow_zero``).
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name}: expected {n} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    if allow_zero:
        if np.any(arr < 0):
            raise ValueError(f"{name}: entries must be >= 0")
    elif np.any(arr <= 0):
        raise ValueError(f"{name}: entries must be > 0")
    return arr
