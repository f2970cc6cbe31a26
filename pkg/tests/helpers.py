"""Shared builders and independent oracles for the test suite.

Oracles here are written against plain numpy (dense matrices, explicit
formulas) so they cannot inherit a bug from the package code they check.
Builders may use package types to assemble problems, but every expected
value is computed without going through the code path under test.
"""

import numpy as np

from pdcd.blocks import BlockLinearOperator, BlockVector
from pdcd.functions import (
    GroupL21,
    QuadraticSmooth,
    ScaledL1,
    ZeroFunction,
    least_squares_f,
)
from pdcd.problems import ProblemSpec


# ---------------------------------------------------------------- operators


def example1_operator():
    """The running 3-column example: rows read {0,1}, {1}, {0,1,2}.

    All entries 1, all blocks scalar. Row multiplicities (2, 1, 3);
    column 0 is read by rows 0 and 2.
    """
    one = [[1.0]]
    blocks = {
        (0, 0): one, (0, 1): one,
        (1, 1): one,
        (2, 0): one, (2, 1): one, (2, 2): one,
    }
    return BlockLinearOperator((1, 1, 1), (1, 1, 1), blocks)


def random_operator(rng, primal_dims, dual_dims, density=0.6):
    """Random block pattern with every row support nonempty."""
    n, p = len(primal_dims), len(dual_dims)
    blocks = {}
    for j in range(p):
        sup = [i for i in range(n) if rng.random() < density]
        if not sup:
            sup = [int(rng.integers(0, n))]
        for i in sup:
            blocks[(j, i)] = rng.standard_normal((dual_dims[j], primal_dims[i]))
    return BlockLinearOperator(tuple(primal_dims), tuple(dual_dims), blocks)


def mixed_multiplicity_operator(rng):
    """5 primal x 4 dual blocks with row multiplicities (1, 2, 3, 2)."""
    primal = (2, 1, 3, 1, 2)
    dual = (2, 1, 2, 1)
    support = {0: [1], 1: [0, 3], 2: [1, 2, 4], 3: [0, 2]}
    blocks = {}
    for j, sup in support.items():
        for i in sup:
            blocks[(j, i)] = rng.standard_normal((dual[j], primal[i]))
    return BlockLinearOperator(primal, dual, blocks)


def dense_oracle(op):
    """Assemble the dense matrix of a block operator by direct placement."""
    rows = sum(op.dual_dims)
    cols = sum(op.primal_dims)
    roff = [0]
    for d in op.dual_dims:
        roff.append(roff[-1] + d)
    coff = [0]
    for d in op.primal_dims:
        coff.append(coff[-1] + d)
    dense = np.zeros((rows, cols))
    for (j, i), mat in op.blocks.items():
        dense[roff[j]:roff[j + 1], coff[i]:coff[i + 1]] = np.asarray(mat)
    return dense


def random_blockvector(rng, dims):
    return BlockVector([rng.standard_normal(d) for d in dims])


# ----------------------------------------------------------------- problems


def random_problem(rng, primal_dims, dual_dims, *, alpha_g=0.1, alpha_h=0.1,
                   density=0.6, group_rows=None):
    """Random least-squares + l1 + group-norm composite problem.

    ``group_rows`` partitions the dual blocks into consecutive prox
    groups of h (block counts); default is singleton groups via a group
    count equal to p.
    """
    m = sum(primal_dims) + 3
    A = rng.standard_normal((m, sum(primal_dims))) / np.sqrt(m)
    bb = rng.standard_normal(m)
    f = QuadraticSmooth(A, bb, block_dims=primal_dims)
    g = ScaledL1(alpha_g)
    M = random_operator(rng, primal_dims, dual_dims, density=density)
    if group_rows is None:
        group_rows = (1,) * len(dual_dims)
    h = GroupL21(alpha_h, group_rows)
    return ProblemSpec(f, g, h, M)


def random_problem_mj1(rng, n_blocks=3, *, alpha_g=0.05, alpha_h=0.08):
    """All row multiplicities 1: row j reads exactly block j.

    The first block always has dimension 2 so the variants under
    comparison all take the generic block path.
    """
    primal = (2,) + tuple(int(rng.integers(1, 3)) for _ in range(n_blocks - 1))
    dual = primal
    blocks = {
        (j, j): rng.standard_normal((dual[j], primal[j])) for j in range(n_blocks)
    }
    M = BlockLinearOperator(primal, dual, blocks)
    m = sum(primal) + 2
    A = rng.standard_normal((m, sum(primal))) / np.sqrt(m)
    f = QuadraticSmooth(A, rng.standard_normal(m), block_dims=primal)
    return ProblemSpec(f, ScaledL1(alpha_g), GroupL21(alpha_h, (1,) * n_blocks), M)


def saddle_reference(problem, tol=1e-12, max_iters=200000):
    """Near-exact saddle point via the deterministic full update.

    The Lyapunov statements quantify distances to the saddle set, so the
    tests need a member of it to high accuracy.
    """
    from pdcd import solver
    from pdcd.stepsize import make_stepsizes

    M, f, h = problem.M, problem.f, problem.h
    groups = h.prox_groups(M.p) if M.p else []
    uniform = [grp for grp in groups if len(grp) > 1]
    steps = make_stepsizes(
        M,
        np.full(M.n, f.lipschitz),
        sigma_uniform_groups=uniform or None,
    )
    cfg = solver.SolverConfig(
        steps,
        max_iterations=max_iters,
        variant="full_vu_condat",
        checkpoint_every=50,
        stop_tolerance=tol,
    )
    res = solver.run(problem, cfg)
    assert res.trace.converged, "reference solve did not reach the target residual"
    return res.solution, res.dual


# ------------------------------------------------------------ lasso oracle


def ista_lasso(A, b, alpha, iters=20000):
    """Independent proximal-gradient lasso reference, fixed step 1/||A||^2."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    L = np.linalg.norm(A, 2) ** 2
    step = 1.0 / L
    x = np.zeros(A.shape[1])
    for _ in range(iters):
        grad = A.T @ (A @ x - b)
        v = x - step * grad
        x = np.sign(v) * np.maximum(np.abs(v) - step * alpha, 0.0)
    return x


def lasso_objective(A, b, alpha, x):
    r = A @ x - b
    return 0.5 * float(r @ r) + alpha * float(np.sum(np.abs(x)))


# ------------------------------------------------- conjugate-prox oracles


def conj_prox_l1_oracle(u, alpha):
    """prox of (alpha ||.||_1)* = projection onto the l-inf ball."""
    return np.clip(np.asarray(u, dtype=float), -alpha, alpha)


def conj_prox_group_ball_oracle(u, alpha):
    """prox of (alpha ||.||_2)* for one group = projection onto the ball."""
    u = np.asarray(u, dtype=float)
    nrm = float(np.linalg.norm(u))
    if nrm <= alpha:
        return u.copy()
    return u * (alpha / nrm)


def conj_prox_box_oracle(u, sigma, lo, hi):
    """Moreau by hand: u - sigma * clip(u / sigma, lo, hi)."""
    u = np.asarray(u, dtype=float)
    return u - sigma * np.clip(u / sigma, lo, hi)


def conj_prox_hyperplane_oracle(u, sigma, b):
    """Weighted projection onto span(b), the conjugate of the hyperplane.

    minimizes sum_i (v_i - u_i)^2 / sigma_i over v = t b, so
    t* = <b, u/sigma> / <b, b/sigma>.
    """
    u = np.asarray(u, dtype=float)
    b = np.asarray(b, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    t = float(b @ (u / sigma)) / float(b @ (b / sigma))
    return t * b


# -------------------------------------------------------------- svm oracle


def two_point_svm():
    """Analytic 2-sample SVM in one feature dimension.

    Samples a_1 = +1, a_2 = -1 with labels +1, -1, C = 1, lam = 0.5.
    The dual forces x_1 = x_2 = t in [0, 1] and maximizes
    2t - 2t^2/lam, so t* = lam/2 = 0.25, w* = (x_1 + x_2)/lam = 1,
    w0* = 0, and both optimal values equal 0.25.
    """
    A = np.array([[1.0, -1.0]])
    b = np.array([1.0, -1.0])
    x_star = np.array([0.25, 0.25])
    return A, b, 1.0, 0.5, x_star, 0.25


# ------------------------------------------------------------------- files


def write_libsvm(path, X, y):
    """Plain-text libsvm writer (1-based indices, zeros skipped)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    with open(path, "w") as fh:
        for row, label in zip(X, y):
            parts = [f"{label:+g}" if float(label) in (-1.0, 1.0) else f"{label:g}"]
            for idx, val in enumerate(row):
                if val != 0.0:
                    parts.append(f"{idx + 1}:{float(val)!r}")
            fh.write(" ".join(parts) + "\n")


def lasso_problem_from(A, b, alpha):
    M = BlockLinearOperator((1,) * A.shape[1], (), {})
    return ProblemSpec(least_squares_f(A, b), ScaledL1(alpha), ZeroFunction(), M)
