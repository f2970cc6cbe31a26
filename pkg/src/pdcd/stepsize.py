"""Coordinate-wise primal and dual step sizes.

The randomized coordinate solvers admit per-block primal steps tau_i and
per-row dual steps sigma_j subject to

    tau_i * (beta_i + rho_i) < 1,
    rho_i = lambda_max( sum over j in J(i) of m_j sigma_j M_{j,i}^T M_{j,i} ),

where beta_i is the coordinate-wise Lipschitz constant of the smooth
gradient and m_j the row multiplicity. ``make_stepsizes`` applies a
strict safety factor (default 0.95) to the bound; running exactly at the
bound is not covered by the convergence guarantee and is only reachable
through an explicit experimental flag.
"""

from dataclasses import dataclass

import numpy as np

from .utils import as_weights, power_iteration_sym

__all__ = [
    "StepSizes",
    "coordinate_spectral_term",
    "max_tau",
    "default_sigma",
    "make_stepsizes",
    "default_steps",
    "duplicated_sigma",
]

_SIGMA_EPS = 1e-12
_VALIDATE_TOL = 1e-12
_TAU_CAP_FACTOR = 1e6


def _coupling_matrix(M, sigma, m, i):
    d = M.primal_dims[i]
    C = np.zeros((d, d))
    for j, mat in M.col_entries[i]:
        C += (m[j] * sigma[j]) * (mat.T @ mat)
    return C


def coordinate_spectral_term(M, sigma, m, i):
    """rho_i: largest eigenvalue of the weighted coupling sum for block i.

    Exact (LAPACK) eigen-solve for block dimension <= 3, power iteration
    with tolerance 1e-10 otherwise. Blocks with no coupling return 0.
    """
    sigma = as_weights(sigma, M.p, "sigma", allow_zero=True)
    m = np.asarray(m, dtype=float)
    if m.shape != (M.p,):
        raise ValueError(f"expected {M.p} multiplicities, got shape {m.shape}")
    if not M.col_entries[i]:
        return 0.0
    C = _coupling_matrix(M, sigma, m, i)
    d = C.shape[0]
    if d <= 3:
        return float(np.linalg.eigvalsh(C)[-1])
    return power_iteration_sym(lambda v: C @ v, d, tol=1e-10)


def max_tau(M, sigma, beta):
    """Strict per-block upper bounds 1 / (beta_i + rho_i).

    Entries where both the curvature and the coupling vanish are
    unbounded and returned as +inf; callers must pick a finite step for
    those blocks.
    """
    sigma = as_weights(sigma, M.p, "sigma")
    beta = as_weights(beta, M.n, "beta", allow_zero=True)
    m = M.multiplicities
    out = np.empty(M.n)
    for i in range(M.n):
        denom = beta[i] + coordinate_spectral_term(M, sigma, m, i)
        out[i] = np.inf if denom == 0.0 else 1.0 / denom
    return out


def default_sigma(M, beta, m=None):
    """Heuristic dual steps balancing the coupling term against beta.

    sigma_j = mean over i in I(j) of (beta_i + eps), divided by
    m_j * sum over i in I(j) of ||M_{j,i}||^2 (squared spectral norms),
    so that rho_i lands at the same order of magnitude as beta_i. The
    eps = 1e-12 floor keeps sigma positive when all touched beta vanish.
    """
    beta = as_weights(beta, M.n, "beta", allow_zero=True)
    m = M.multiplicities if m is None else np.asarray(m)
    out = np.empty(M.p)
    for j in range(M.p):
        sup = M.row_support[j]
        num = float(np.mean([beta[i] + _SIGMA_EPS for i in sup]))
        den = float(m[j]) * sum(
            float(np.linalg.norm(M.blocks[(j, i)], 2) ** 2) for i in sup
        )
        out[j] = num / den
    return out


@dataclass
class StepSizes:
    """Validated per-block primal steps tau and per-row dual steps sigma."""

    tau: np.ndarray
    sigma: np.ndarray
    safety: float = 0.95

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)

    def margins(self, M, beta):
        """tau_i * (beta_i + rho_i) for every primal block."""
        beta = as_weights(beta, M.n, "beta", allow_zero=True)
        m = M.multiplicities
        rho = np.array([coordinate_spectral_term(M, self.sigma, m, i) for i in range(M.n)])
        return self.tau * (beta + rho)

    def validate(self, M, beta, tol=_VALIDATE_TOL):
        """Check the strict step bound; raises on violation."""
        tau = as_weights(self.tau, M.n, "tau")
        as_weights(self.sigma, M.p, "sigma")
        margins = self.margins(M, beta)
        bad = np.flatnonzero(margins > self.safety + tol)
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"tau[{i}] = {tau[i]:.6g} violates the step bound: "
                f"tau * (beta + rho) = {margins[i]:.12g} > safety {self.safety}"
            )
        return margins


def make_stepsizes(
    M,
    beta,
    sigma=None,
    safety=0.95,
    *,
    sigma_uniform_groups=None,
    experimental_full_step=False,
):
    """Build validated step sizes tau_i = safety / (beta_i + rho_i).

    Parameters
    ----------
    M : BlockLinearOperator
        Coupling operator (may have zero rows, i.e. p = 0).
    beta : array_like
        Coordinate-wise curvature bounds, one per primal block (>= 0).
    sigma : array_like, optional
        Dual steps; defaults to :func:`default_sigma`.
    safety : float
        Strict factor in (0, 1). safety = 1.0 sits exactly on the
        boundary of the admissible region and is only accepted together
        with ``experimental_full_step=True``.
    sigma_uniform_groups : sequence of sequences, optional
        Groups of dual block indices forced to share one sigma (the group
        minimum). Prox formulas that treat a group as a single vector
        need a uniform weight inside it; lowering sigma never invalidates
        the tau bound computed afterwards.

    Unbounded entries of the tau bound (no curvature, no coupling) are
    capped at 1e6 times the median finite bound (1e6 when none).
    """
    if not np.isfinite(safety) or safety <= 0:
        raise ValueError("safety must be a positive real")
    if safety > 1.0 or (safety == 1.0 and not experimental_full_step):
        raise ValueError(
            "safety must be < 1; running exactly at the bound requires "
            "experimental_full_step=True"
        )
    beta = as_weights(beta, M.n, "beta", allow_zero=True)
    if sigma is None:
        sigma = default_sigma(M, beta) if M.p else np.zeros(0)
    sigma = as_weights(sigma, M.p, "sigma")
    if sigma_uniform_groups is not None:
        sigma = sigma.copy()
        for grp in sigma_uniform_groups:
            grp = list(grp)
            if len(grp) > 1:
                sigma[grp] = sigma[grp].min()
    bound = max_tau(M, sigma, beta)
    finite = bound[np.isfinite(bound)]
    cap = _TAU_CAP_FACTOR * (float(np.median(finite)) if finite.size else 1.0)
    tau = safety * np.minimum(bound, cap)
    steps = StepSizes(tau=tau, sigma=sigma, safety=float(safety))
    steps.validate(M, beta)
    return steps


def default_steps(problem, safety=0.95, sigma=None):
    """Step sizes for a problem, respecting the penalty's group structure.

    When h couples several dual blocks in one prox group, sigma is made
    uniform inside each group (group minimum) so the closed-form group
    prox applies.
    """
    M, h = problem.M, problem.h
    groups = h.prox_groups(M.p) if M.p else []
    uniform = [g for g in groups if len(g) > 1]
    return make_stepsizes(
        M,
        problem.f.beta,
        sigma=sigma,
        safety=safety,
        sigma_uniform_groups=uniform or None,
    )


def duplicated_sigma(M, sigma):
    """Per-copy dual steps m_j sigma_j in the operator's copy order."""
    sigma = as_weights(sigma, M.p, "sigma")
    return np.array([M.multiplicities[j] * sigma[j] for (j, i) in M.copy_order])
