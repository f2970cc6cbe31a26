"""Lyapunov quantities, optimality residuals and run traces.

The convergence analysis of the randomized solvers rests on the
quadratic

    V(d) = (1/2) ||dx||^2_{1/tau} + <dy, M dx> + (1/2) ||dy||^2_{1/sigma}

evaluated at differences d = z - zref of primal-dual pairs, its
curvature-corrected variant V~ (with 1/tau - beta in the primal block),
and the smooth Bregman gap S. ``enumerate_conditional_expectation``
computes exact conditional expectations over the coordinate draw by
running one candidate update per block, which is what the identity and
contraction checks in the test suite use.

The saddle residual used for stopping is step-independent: it is the
fixed-point residual of the unit-step forward-backward maps,

    ||x - prox_g(x - grad f(x) - M* y)|| + ||y - prox_{h*}(y + M x)||,

zero exactly on the saddle set, and comparable across step choices.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .blocks import BlockVector, block_dot, weighted_norm_sq
from .functions import conjugate_prox, conjugate_prox_flat
from .utils import as_weights

__all__ = [
    "Checkpoint",
    "Trace",
    "objective_value",
    "lagrangian",
    "V_lyapunov",
    "V_tilde",
    "S_bregman",
    "saddle_residual",
    "svm_duality_gap",
    "enumerate_conditional_expectation",
]


@dataclass
class Checkpoint:
    iteration: int
    epoch: int
    wall_time: float
    objective: float
    saddle_residual: float
    duality_gap: float = None
    distance_to_reference: float = None
    lyapunov_V: float = None
    bregman_S: float = None


# Stable column order of serialized traces. Wall time is appended last and
# only on request: trace files of two same-seed runs are byte-identical,
# which a wall-clock column would break.
_COLUMNS = (
    "iteration",
    "epoch",
    "objective",
    "saddle_residual",
    "duality_gap",
    "distance_to_reference",
    "lyapunov_V",
    "bregman_S",
)


class Trace:
    """Checkpoint sequence of one run; iterations strictly increase."""

    def __init__(self):
        self.checkpoints = []
        self.converged = False
        self.total_iterations = 0

    def append(self, cp):
        if self.checkpoints and cp.iteration <= self.checkpoints[-1].iteration:
            raise ValueError(
                f"checkpoint iterations must strictly increase; "
                f"{cp.iteration} after {self.checkpoints[-1].iteration}"
            )
        self.checkpoints.append(cp)

    def __len__(self):
        return len(self.checkpoints)

    def __iter__(self):
        return iter(self.checkpoints)

    def __getitem__(self, k):
        return self.checkpoints[k]

    @property
    def final(self):
        return self.checkpoints[-1]

    def _rows(self, include_walltime):
        cols = _COLUMNS + (("wall_time",) if include_walltime else ())
        for cp in self.checkpoints:
            yield {c: getattr(cp, c) for c in cols}

    def to_csv(self, path_or_file, include_walltime=False):
        """Write one row per checkpoint; header always present."""
        cols = _COLUMNS + (("wall_time",) if include_walltime else ())

        def _write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for row in self._rows(include_walltime):
                writer.writerow(
                    ["" if row[c] is None else repr(float(row[c])) if isinstance(row[c], float) else row[c] for c in cols]
                )

        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            with open(path_or_file, "w", newline="") as fh:
                _write(fh)
        else:
            _write(path_or_file)

    def to_json(self, path_or_file, include_walltime=False):
        payload = {
            "schema": "pdcd-trace-v1",
            "converged": bool(self.converged),
            "total_iterations": int(self.total_iterations),
            "columns": list(_COLUMNS + (("wall_time",) if include_walltime else ())),
            "checkpoints": list(self._rows(include_walltime)),
        }
        text = json.dumps(payload, indent=2)
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            with open(path_or_file, "w") as fh:
                fh.write(text + "\n")
        elif isinstance(path_or_file, io.TextIOBase) or hasattr(path_or_file, "write"):
            path_or_file.write(text + "\n")
        return text


def objective_value(problem, x):
    """f(x) + g(x) + h(Mx); +inf when an indicator is violated."""
    fx = problem.f.value(x.blocks)
    gx = problem.g.value(x.blocks)
    hx = problem.h.value(problem.M.apply(x).blocks) if problem.M.p else 0.0
    return fx + gx + hx


def lagrangian(problem, x, y):
    """L(x, y) = f(x) + g(x) + <y, Mx> - h*(y).

    Convention for infinities: a primal indicator violation dominates
    (+inf), otherwise a dual one gives -inf. Raises
    :class:`~pdcd.functions.ConjugateUnavailable` when h has no
    closed-form conjugate value.
    """
    gx = problem.g.value(x.blocks)
    if gx == np.inf:
        return np.inf
    hstar = problem.h.conjugate_value(y.blocks) if problem.M.p else 0.0
    if hstar == np.inf:
        return -np.inf
    coupling = block_dot(y, problem.M.apply(x)) if problem.M.p else 0.0
    return problem.f.value(x.blocks) + gx + coupling - hstar


def V_lyapunov(z, zref, tau, sigma, M):
    """The Lyapunov quadratic at the difference z - zref."""
    (x, y), (xr, yr) = z, zref
    dx = x - xr
    dy = y - yr
    tau = as_weights(tau, M.n, "tau")
    sigma = as_weights(sigma, M.p, "sigma")
    val = 0.5 * weighted_norm_sq(dx, 1.0 / tau)
    if M.p:
        val += block_dot(dy, M.apply(dx)) + 0.5 * weighted_norm_sq(dy, 1.0 / sigma)
    return val


def V_tilde(z, zref, tau, sigma, beta, M):
    """V with the primal weight 1/tau replaced by 1/tau - beta.

    Requires 1/tau_i > beta_i for every block (the step bound implies
    it); its square root is a norm exactly when the steps satisfy the
    strict coordinate-wise bound.
    """
    (x, y), (xr, yr) = z, zref
    tau = as_weights(tau, M.n, "tau")
    beta = as_weights(beta, M.n, "beta", allow_zero=True)
    wgt = 1.0 / tau - beta
    if np.any(wgt <= 0):
        raise ValueError("V~ requires 1/tau > beta on every block")
    dx = x - xr
    dy = y - yr
    sigma = as_weights(sigma, M.p, "sigma")
    val = 0.5 * weighted_norm_sq(dx, wgt)
    if M.p:
        val += block_dot(dy, M.apply(dx)) + 0.5 * weighted_norm_sq(dy, 1.0 / sigma)
    return val


def S_bregman(f, x, xref):
    """Bregman gap of the smooth term: f(x) - f(xref) - <grad f(xref), x - xref>."""
    gref = f.gradient(xref)
    lin = sum(
        float(g @ (a - b))
        for g, a, b in zip(gref, x.blocks, xref.blocks, strict=True)
    )
    return f.value(x.blocks) - f.value(xref.blocks) - lin


def saddle_residual(problem, x, y, tau=None, sigma=None):
    """Step-independent fixed-point residual; zero exactly on the saddle set.

    Unit prox steps by default; both parts use unweighted Euclidean
    norms so runs with different step choices are comparable.
    """
    M, f, g, h = problem.M, problem.f, problem.g, problem.h
    tau = np.ones(M.n) if tau is None else as_weights(tau, M.n, "tau")
    if M.p:
        sigma = np.ones(M.p) if sigma is None else as_weights(sigma, M.p, "sigma")

    gradient_flat = getattr(f, "gradient_flat", None)
    if gradient_flat is not None:
        xf = x.to_flat()
        adj_f = M.adjoint_apply_flat(y.to_flat()) if M.p else np.zeros(xf.size)
        arg_f = xf - np.repeat(tau, M.primal_dims) * (gradient_flat(xf) + adj_f)
        px_f = g.prox_flat(tau, M.primal_dims, arg_f)
        if px_f is not None:
            py_f = np.zeros(0)
            if M.p:
                u_f = y.to_flat() + np.repeat(sigma, M.dual_dims) * M.apply_flat(xf)
                py_f = conjugate_prox_flat(h, sigma, M.dual_dims, u_f)
            if py_f is not None:
                primal = float(np.linalg.norm(xf - px_f))
                dual = float(np.linalg.norm(y.to_flat() - py_f)) if M.p else 0.0
                return primal + dual

    grad = f.gradient(x)
    adj = M.adjoint_apply(y) if M.p else BlockVector.zeros(M.primal_dims)
    arg = [
        x.blocks[i] - tau[i] * (grad[i] + adj.blocks[i]) for i in range(M.n)
    ]
    px = g.prox(tau, arg)
    primal = np.sqrt(
        sum(float((x.blocks[i] - px[i]) @ (x.blocks[i] - px[i])) for i in range(M.n))
    )
    dual = 0.0
    if M.p:
        mx = M.apply(x)
        u = [y.blocks[j] + sigma[j] * mx.blocks[j] for j in range(M.p)]
        py = conjugate_prox(h, sigma, u)
        dual = np.sqrt(
            sum(float((y.blocks[j] - py[j]) @ (y.blocks[j] - py[j])) for j in range(M.p))
        )
    return float(primal + dual)


def _exact_intercept(t, b, C):
    """Minimize sum_i C_i max(0, 1 - b_i (t_i + w0)) over the intercept w0.

    The objective is piecewise linear and convex in w0, so a minimum is
    attained at a breakpoint w0 = b_i - t_i; evaluating all of them is
    exact (the weighted-median solution) and vectorizes.
    """
    cand = b - t
    margins = 1.0 - b[None, :] * (t[None, :] + cand[:, None])
    vals = np.maximum(margins, 0.0) @ C
    return float(cand[int(np.argmin(vals))])


def svm_duality_gap(problem, x):
    """Primal-dual gap of the SVM pair at a dual iterate.

    Recovers the primal w = (1/lam) A D(b) x from the raw iterate and
    the intercept by exact minimization of the primal objective; the
    dual objective is evaluated after projecting the iterate onto the
    feasible set (box first, then the label hyperplane). Nonnegative up
    to roundoff by weak duality.
    """
    if getattr(problem, "kind", "") != "svm_dual":
        raise ValueError("the duality gap is defined for dual SVM problems only")
    meta = problem.meta
    A, b, C, lam = meta["A"], meta["b"], meta["C"], meta["lam"]
    xf = x.to_flat() if hasattr(x, "to_flat") else np.asarray(x, dtype=float).reshape(-1)
    wvec = np.asarray(A @ (b * xf)).ravel() / lam
    t = np.asarray(A.T @ wvec).ravel()
    w0 = _exact_intercept(t, b, C)
    hinge = np.maximum(1.0 - b * (t + w0), 0.0)
    primal = float(C @ hinge) + 0.5 * lam * float(wvec @ wvec)
    xp = np.clip(xf, 0.0, C)
    xp = xp - b * (float(b @ xp) / float(b @ b))
    v = np.asarray(A @ (b * xp)).ravel()
    dual = float(np.sum(xp)) - 0.5 / lam * float(v @ v)
    return primal - dual


def enumerate_conditional_expectation(
    problem, state, steps, quantity, variant="cd_primal_dual", max_n=64
):
    """Exact E_k[quantity(next state)] over the uniform coordinate draw.

    Runs one forced-index candidate update per block from a copy of
    ``state`` and averages ``quantity`` (a float or a flat array) over
    the n candidates. Guarded to small block counts: enumeration is
    n full candidate evaluations.
    """
    from . import solver as _solver

    n = problem.M.n
    if n > max_n:
        raise ValueError(f"enumeration over {n} blocks exceeds the guard ({max_n})")
    fn = _solver.VARIANTS[variant]
    acc = None
    for i in range(n):
        cand = state.copy(problem)
        fn(cand, problem, steps, index=i)
        q = np.asarray(quantity(cand), dtype=float)
        acc = q.copy() if acc is None else acc + q
    acc /= n
    return float(acc) if acc.ndim == 0 else acc
