"""Problem builders, synthetic data, and dataset ingestion.

Everything here assembles :class:`ProblemSpec` instances out of the
pieces in :mod:`pdcd.functions` and :mod:`pdcd.blocks`: total-variation
plus l1 regression on a 3-D volume, the dual of the hinge-loss SVM,
plain Lasso, and a 3-variable toy whose one-step expectation is
computable by hand. Builders are pure; the resulting objects are safe to
share across threads.
"""

import numpy as np
import scipy.sparse as sp

from .blocks import BlockLinearOperator, build_duplication
from .functions import (
    BoxIndicator,
    GroupL21,
    HyperplaneIndicator,
    ScaledL1,
    ZeroFunction,
    least_squares_f,
    svm_dual_f,
)

__all__ = [
    "ProblemSpec",
    "gradient_operator_3d",
    "build_tv_l1",
    "build_svm_dual",
    "build_lasso",
    "build_toy_counterexample",
    "read_libsvm",
    "synth_regression",
    "synth_classification",
    "svm_class_weights",
]


class ProblemSpec:
    """A problem min_x f(x) + g(x) + h(Mx) with solver-facing caches.

    Besides the four terms the object carries the prox-group partition of
    h over the dual rows (``dual_groups``), the groups each primal block
    touches (``groups_for_primal``), and the duplication factorization
    M = D(m) S K (``duplication``), all computed lazily and cached.

    ``kind`` is a short tag ("tv_l1", "svm_dual", "lasso",
    "toy_counterexample", or "" for ad-hoc problems); ``meta`` holds
    builder-specific data such as the SVM design matrix for duality-gap
    evaluation.
    """

    def __init__(self, f, g, h, M, kind="", meta=None, description=""):
        self.f = f
        self.g = g
        self.h = h
        self.M = M
        self.kind = str(kind)
        self.meta = {} if meta is None else dict(meta)
        self.description = str(description)
        if tuple(f.block_dims) != tuple(M.primal_dims):
            raise ValueError(
                f"f is defined on blocks {tuple(f.block_dims)} but the "
                f"operator's primal blocks are {tuple(M.primal_dims)}"
            )
        _check_partition(g.prox_groups(M.n), M.n, "g")
        _check_partition(h.prox_groups(M.p), M.p, "h")
        self._dual_groups = None
        self._groups_for_primal = None
        self._duplication = None

    @property
    def n(self):
        return self.M.n

    @property
    def p(self):
        return self.M.p

    @property
    def dual_groups(self):
        """Prox-group partition of h over dual rows, as index tuples."""
        if self._dual_groups is None:
            self._dual_groups = tuple(
                tuple(int(j) for j in grp) for grp in self.h.prox_groups(self.M.p)
            )
        return self._dual_groups

    @property
    def groups_for_primal(self):
        """For each primal block i, the dual prox groups meeting J(i)."""
        if self._groups_for_primal is None:
            owner = {}
            for t, grp in enumerate(self.dual_groups):
                for j in grp:
                    owner[j] = t
            self._groups_for_primal = tuple(
                tuple(sorted({owner[j] for j in self.M.col_support[i]}))
                for i in range(self.M.n)
            )
        return self._groups_for_primal

    @property
    def rows_for_primal(self):
        """J(i) for each primal block i."""
        return self.M.col_support

    @property
    def duplication(self):
        """(K, S, m) with M = D(m) S K."""
        if self._duplication is None:
            self._duplication = build_duplication(self.M)
        return self._duplication

    def __repr__(self):
        tag = self.kind or "custom"
        return f"ProblemSpec({tag}: n={self.M.n}, p={self.M.p})"


def _check_partition(groups, count, name):
    flat = [int(j) for grp in groups for j in grp]
    if sorted(flat) != list(range(count)):
        raise ValueError(
            f"prox groups of {name} do not partition its {count} blocks"
        )


def gradient_operator_3d(shape):
    """Forward-difference gradient of a 3-D volume, one scalar block per voxel.

    Voxels are enumerated in C order. Each voxel contributes one row per
    in-range forward difference along the three axes (so 0 to 3 rows; the
    trailing corner voxel contributes none), rows of the same voxel are
    consecutive, and out-of-range differences are simply omitted, which
    is the Neumann boundary convention. Every row has exactly the two
    entries -1 (base voxel) and +1 (neighbor), hence couples exactly two
    primal blocks.

    Returns ``(M, group_dims)`` where ``group_dims`` lists the number of
    rows of each voxel that has at least one, in voxel order; it is the
    group layout for the isotropic-TV penalty on the rows.
    """
    dims = tuple(int(s) for s in shape)
    if len(dims) != 3 or any(s < 1 for s in dims):
        raise ValueError(f"shape must be three positive extents, got {shape!r}")
    dx, dy, dz = dims
    nvox = dx * dy * dz

    def vid(a, b, c):
        return (a * dy + b) * dz + c

    pairs = []
    group_dims = []
    for a in range(dx):
        for b in range(dy):
            for c in range(dz):
                base = vid(a, b, c)
                before = len(pairs)
                if a + 1 < dx:
                    pairs.append((base, vid(a + 1, b, c)))
                if b + 1 < dy:
                    pairs.append((base, vid(a, b + 1, c)))
                if c + 1 < dz:
                    pairs.append((base, vid(a, b, c + 1)))
                if len(pairs) > before:
                    group_dims.append(len(pairs) - before)

    minus = np.array([[-1.0]])
    plus = np.array([[1.0]])
    blocks = {}
    for j, (base, nb) in enumerate(pairs):
        blocks[(j, base)] = minus
        blocks[(j, nb)] = plus
    M = BlockLinearOperator((1,) * nvox, (1,) * len(pairs), blocks)
    return M, tuple(group_dims)


def build_tv_l1(A, b, alpha, r, volume_dims):
    """Least squares plus alpha(r l1 + (1-r) isotropic TV) on a volume.

    ``A`` maps the flattened volume (C order, one scalar unknown per
    voxel) to the observations ``b``. The TV term is a group l2,1 norm
    over each voxel's forward-difference rows, so all gradient rows have
    multiplicity 2. ``r = 1`` turns the TV weight off and the problem is
    a Lasso in disguise; the smooth-only solver path applies.
    """
    A = np.asarray(A, dtype=float) if not sp.issparse(A) else A
    b = np.asarray(b, dtype=float).reshape(-1)
    alpha = float(alpha)
    r = float(r)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    dims = tuple(int(s) for s in volume_dims)
    nvox = int(np.prod(dims))
    if A.shape[1] != nvox:
        raise ValueError(
            f"A has {A.shape[1]} columns but the volume {dims} has {nvox} voxels"
        )
    M, group_dims = gradient_operator_3d(dims)
    f = least_squares_f(A, b)
    g = ScaledL1(alpha * r)
    h = GroupL21(alpha * (1.0 - r), group_dims)
    return ProblemSpec(
        f,
        g,
        h,
        M,
        kind="tv_l1",
        meta={"alpha": alpha, "r": r, "volume_dims": dims},
        description=(
            f"TV+l1 regression on a {dims[0]}x{dims[1]}x{dims[2]} volume, "
            f"alpha={alpha:g}, r={r:g}"
        ),
    )


def build_svm_dual(A, b, C, lam):
    """Dual of the hinge-loss SVM with per-sample weights C_i.

    ``A`` holds one column per sample (features by samples); ``b`` are
    the +-1 labels. The problem is

        min (1/(2 lam)) ||A D(b) x||^2 - sum_i x_i
            + box[0, C](x) + indicator{<b, x> = 0},

    the sign-flipped form of the textbook concave dual. The
    coupling operator is the identity with all row multiplicities 1, so
    the single-copy solver path is eligible. meta carries (A, b, C, lam)
    for duality-gap evaluation.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    n = b.size
    if A.shape[1] != n:
        raise ValueError(f"A has {A.shape[1]} sample columns but b has {n} labels")
    C = np.broadcast_to(np.asarray(C, dtype=float), (n,)).copy()
    if np.any(C <= 0) or not np.all(np.isfinite(C)):
        raise ValueError("per-sample weights C must be positive and finite")
    lam = float(lam)

    f = svm_dual_f(A, b, lam)
    g = BoxIndicator(np.zeros(n), C)
    h = HyperplaneIndicator(b)
    eye = np.array([[1.0]])
    M = BlockLinearOperator(
        (1,) * n, (1,) * n, {(i, i): eye for i in range(n)}
    )
    return ProblemSpec(
        f,
        g,
        h,
        M,
        kind="svm_dual",
        meta={"A": A, "b": b, "C": C, "lam": lam},
        description=f"dual SVM, {n} samples, lam={lam:g}",
    )


def build_lasso(A, b, alpha):
    """(1/2)||Ax - b||^2 + alpha ||x||_1 with no coupling term."""
    A = np.asarray(A, dtype=float) if not sp.issparse(A) else A
    b = np.asarray(b, dtype=float).reshape(-1)
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    f = least_squares_f(A, b)
    M = BlockLinearOperator((1,) * A.shape[1], (), {})
    return ProblemSpec(
        f,
        ScaledL1(alpha),
        ZeroFunction(),
        M,
        kind="lasso",
        meta={"alpha": alpha},
        description=f"lasso, {A.shape[0]}x{A.shape[1]}, alpha={alpha:g}",
    )


def build_toy_counterexample():
    """min (1/2)(x1 + x2 + x3 - 1)^2 over three scalar blocks.

    The minimizer set is the plane x1+x2+x3 = 1; the symmetric point
    (1/3, 1/3, 1/3) is stored in meta["x_star"]. Every coordinate has
    curvature 1 while the global Lipschitz constant is 3, which is what
    makes the one-step expectation expand for tau > 2/3 even though the
    coordinate-wise bound admits tau up to 1.
    """
    A = np.ones((1, 3))
    f = least_squares_f(A, np.array([1.0]))
    M = BlockLinearOperator((1, 1, 1), (), {})
    return ProblemSpec(
        f,
        ZeroFunction(),
        ZeroFunction(),
        M,
        kind="toy_counterexample",
        meta={"x_star": np.full(3, 1.0 / 3.0)},
        description="3-variable expansion toy",
    )


def read_libsvm(path, n_features=None):
    """Read a sparse dataset in the common "label idx:val" text format.

    Feature indices are 1-based in the file and mapped to 0-based
    columns. Repeated features on a line, non-finite values, malformed
    tokens and empty files are rejected with the offending line number.
    Labels must be in {-1, +1} or {0, 1}; in the latter case 0 maps to
    -1 and 1 to +1. Returns ``(A, b)`` with A a samples-by-features CSR
    matrix.
    """
    rows, cols, vals, labels = [], [], [], []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            try:
                lab = float(parts[0])
            except ValueError:
                raise ValueError(f"{path}: line {ln}: bad label {parts[0]!r}") from None
            labels.append(lab)
            row = len(labels) - 1
            seen = set()
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ValueError(
                        f"{path}: line {ln}: expected index:value, got {tok!r}"
                    )
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError:
                    raise ValueError(
                        f"{path}: line {ln}: expected index:value, got {tok!r}"
                    ) from None
                if j < 1:
                    raise ValueError(
                        f"{path}: line {ln}: feature indices are 1-based, got {j}"
                    )
                if not np.isfinite(v):
                    raise ValueError(f"{path}: line {ln}: non-finite value {val!r}")
                if j in seen:
                    raise ValueError(f"{path}: line {ln}: repeated feature {j}")
                seen.add(j)
                rows.append(row)
                cols.append(j - 1)
                vals.append(v)
    if not labels:
        raise ValueError(f"{path}: no samples")

    found = set(labels)
    if found <= {-1.0, 1.0}:
        b = np.array(labels)
    elif found <= {0.0, 1.0}:
        # {0,1} data: 0 maps to -1 (stated to avoid silent mislabeling)
        b = np.array([1.0 if v == 1.0 else -1.0 for v in labels])
    else:
        raise ValueError(
            f"{path}: labels must be within {{-1,+1}} or {{0,1}}, got {sorted(found)}"
        )

    width = (max(cols) + 1) if cols else 0
    if n_features is not None:
        if width > int(n_features):
            raise ValueError(
                f"{path}: feature index {width} exceeds n_features={n_features}"
            )
        width = int(n_features)
    A = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(labels), width), dtype=float
    )
    return A, b


def synth_regression(seed, m, n, sparsity=0.1, noise=0.0):
    """Gaussian design with a sparse planted signal.

    Returns ``(A, b, x_true)`` with A of shape (m, n) scaled by 1/sqrt(m),
    x_true supported on ceil(sparsity * n) coordinates, and
    b = A x_true + noise * standard normal. Deterministic per seed.
    """
    m, n = int(m), int(n)
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    k = min(n, max(1, int(np.ceil(sparsity * n))))
    support = rng.choice(n, size=k, replace=False)
    x_true = np.zeros(n)
    x_true[support] = rng.standard_normal(k)
    b = A @ x_true
    if noise:
        b = b + noise * rng.standard_normal(m)
    return A, b, x_true


def synth_classification(seed, n_samples, n_features, separation=2.0):
    """Two Gaussian clouds with +-1 labels, one sample per column.

    Returns ``(A, b)`` shaped for :func:`build_svm_dual`: A is
    (n_features, n_samples), labels are balanced up to one sample.
    """
    n_samples, n_features = int(n_samples), int(n_features)
    if n_samples < 2 or n_features < 1:
        raise ValueError("need at least 2 samples and 1 feature")
    rng = np.random.default_rng(seed)
    b = np.ones(n_samples)
    b[n_samples // 2 :] = -1.0
    rng.shuffle(b)
    mu = rng.standard_normal(n_features)
    mu *= separation / (2.0 * np.linalg.norm(mu))
    A = rng.standard_normal((n_features, n_samples)) + np.outer(mu, b)
    return A, b


def svm_class_weights(b, c_max=1.0):
    """Per-sample box bounds C_i = c_max * (minority count / own-class count).

    The minority class gets c_max, the majority class proportionally
    less, so both classes carry the same total weight.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    n_pos = int(np.sum(b > 0))
    n_neg = b.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("class weighting needs both labels present")
    n_min = min(n_pos, n_neg)
    counts = np.where(b > 0, n_pos, n_neg).astype(float)
    return float(c_max) * n_min / counts
