"""Smooth objectives and proximable penalties on block product spaces.

Smooth functions expose values, gradients, per-block partial gradients
and coordinate-wise curvature bounds beta_i satisfying the block descent
inequality

    f(x + U_i u) <= f(x) + <grad f(x), U_i u> + (beta_i / 2) ||u||^2,

where U_i embeds a block into the product space. Proximable functions
expose weighted prox steps

    prox_{gamma,F}(u) = argmin_v F(v) + (1/2) sum_i ||v_i - u_i||^2 / gamma_i

with one positive weight per block. The prox of a conjugate F* is always
derived from the prox of F through the Moreau identity

    prox_{sigma,F*}(u) = u - D(sigma) prox_{1/sigma,F}(D(1/sigma) u),

so there is a single prox code path to test per function.

Functions at this layer operate on plain lists of 1-D float64 arrays
(the ``blocks`` attribute of a BlockVector); they carry no block-space
object of their own and can be reused on any conforming space.
"""

import numpy as np

from .utils import soft_threshold, spectral_norm_sq

__all__ = [
    "ConjugateUnavailable",
    "SmoothFunction",
    "ProxFunction",
    "ConjugateProx",
    "least_squares_f",
    "svm_dual_f",
    "l1_norm",
    "group_l21_norm",
    "box_indicator",
    "hyperplane_indicator",
    "zero_function",
    "conjugate_prox",
    "conjugate_prox_flat",
    "conjugate_prox_group",
]

INF = float("inf")

# Feasibility slack used when evaluating indicator-type values at points
# produced by floating-point arithmetic.
_FEAS_TOL = 1e-9


class ConjugateUnavailable(ValueError):
    """No closed form for the requested conjugate value."""


def _blocks(x):
    """Accept a BlockVector or a plain list of arrays."""
    return x.blocks if hasattr(x, "blocks") else x


def _col_to_dense(col):
    if hasattr(col, "toarray"):
        return np.asarray(col.toarray(), dtype=float)
    return np.asarray(col, dtype=float)


class SmoothFunction:
    """Differentiable convex term with coordinate-wise curvature bounds.

    Attributes
    ----------
    block_dims : tuple of int
        Primal block dimensions the function is defined on.
    beta : ndarray
        Coordinate-wise Lipschitz constants of the gradient, one per block.
    lipschitz : float
        A global Lipschitz constant of the gradient.
    """

    block_dims = ()
    beta = None
    lipschitz = None

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def partial_gradient(self, x, i):
        """Block i of the gradient, computed statelessly."""
        return self.gradient(x)[i]

    def residual_tracker(self, x_blocks):
        """Mutable helper giving cheap partial gradients along a trajectory.

        The default recomputes from scratch; quadratic subclasses cache
        the residual and update it per coordinate change.
        """
        return _NaiveTracker(self, x_blocks)


class _NaiveTracker:
    def __init__(self, fn, x_blocks):
        self.fn = fn
        self.x = x_blocks

    def partial(self, i):
        return self.fn.partial_gradient(self.x, i)

    def full(self):
        return self.fn.gradient(self.x)

    def update(self, i, delta):
        pass  # reads self.x live

    def refresh(self, x_blocks):
        self.x = x_blocks


class QuadraticSmooth(SmoothFunction):
    """f(x) = (scale/2) ||P x - c||^2 + <lin, x> with block columns of P.

    ``P`` may be dense or scipy.sparse; column blocks are cached densely
    at construction, which is the intended desk-scale regime. beta_i is
    the exact squared spectral norm of the i-th column block times
    ``scale`` (squared Euclidean norm for scalar blocks); the global
    constant is scale * ||P||^2 via power iteration (tol 1e-10, capped at
    10000 iterations).
    """

    def __init__(self, P, c, block_dims=None, scale=1.0, lin=None):
        m, total = P.shape
        if block_dims is None:
            block_dims = (1,) * total
        self.block_dims = tuple(int(d) for d in block_dims)
        if sum(self.block_dims) != total:
            raise ValueError(
                f"block dims sum to {sum(self.block_dims)} but P has {total} columns"
            )
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.P = P
        self.c = np.zeros(m) if c is None else np.asarray(c, dtype=float).reshape(-1)
        if self.c.size != m:
            raise ValueError(f"c must have {m} entries")
        self.scale = float(scale)
        offs = np.concatenate(([0], np.cumsum(self.block_dims))).astype(int)
        self._offsets = offs
        # COO and friends cannot be column-sliced
        cols_src = P.tocsc() if hasattr(P, "tocsc") else P
        self.col_blocks = [
            np.ascontiguousarray(_col_to_dense(cols_src[:, offs[i]:offs[i + 1]]))
            for i in range(len(self.block_dims))
        ]
        if lin is None:
            self.lin_blocks = None
            self._lin_flat = None
        else:
            lin = np.asarray(lin, dtype=float)
            if lin.ndim == 0:
                lin = np.full(total, float(lin))
            if lin.size != total:
                raise ValueError(f"lin must have {total} entries")
            self.lin_blocks = [lin[offs[i]:offs[i + 1]].copy() for i in range(len(self.block_dims))]
            self._lin_flat = lin.reshape(-1).copy()
        self._PT = P.T
        self.beta = np.array(
            [self.scale * spectral_norm_sq(cb) for cb in self.col_blocks]
        )
        self.lipschitz = self.scale * spectral_norm_sq(P)

    def _flat(self, x):
        xb = _blocks(x)
        if len(xb) != len(self.block_dims):
            raise ValueError(f"expected {len(self.block_dims)} blocks, got {len(xb)}")
        return np.concatenate([np.asarray(b, dtype=float).reshape(-1) for b in xb])

    def residual(self, x):
        return self.P @ self._flat(x) - self.c

    def value(self, x):
        xb = _blocks(x)
        r = self.residual(x)
        val = 0.5 * self.scale * float(r @ r)
        if self.lin_blocks is not None:
            val += float(sum(l @ np.asarray(b).reshape(-1) for l, b in zip(self.lin_blocks, xb)))
        return val

    def gradient_flat(self, x_flat):
        r = self.P @ np.asarray(x_flat, dtype=float) - self.c
        out = self.scale * (self._PT @ r)
        if self._lin_flat is not None:
            out = out + self._lin_flat
        return out

    def gradient(self, x):
        flat = self.gradient_flat(self._flat(x))
        offs = self._offsets
        return [flat[offs[i]:offs[i + 1]] for i in range(len(self.block_dims))]

    def partial_gradient(self, x, i):
        r = self.residual(x)
        g = self.scale * (self.col_blocks[i].T @ r)
        if self.lin_blocks is not None:
            g = g + self.lin_blocks[i]
        return g

    def residual_tracker(self, x_blocks):
        return _ResidualTracker(self, x_blocks)


class _ResidualTracker:
    """Caches r = P x - c so partial gradients cost one column product."""

    def __init__(self, fn, x_blocks):
        self.fn = fn
        self.r = fn.residual(x_blocks)

    def partial(self, i):
        fn = self.fn
        g = fn.scale * (fn.col_blocks[i].T @ self.r)
        if fn.lin_blocks is not None:
            g = g + fn.lin_blocks[i]
        return g

    def full_flat(self):
        fn = self.fn
        out = fn.scale * (fn._PT @ self.r)
        if fn._lin_flat is not None:
            out = out + fn._lin_flat
        return out

    def full(self):
        fn = self.fn
        flat = self.full_flat()
        offs = fn._offsets
        return [flat[offs[i]:offs[i + 1]] for i in range(len(fn.block_dims))]

    def update(self, i, delta):
        self.r += self.fn.col_blocks[i] @ delta

    def refresh(self, x_blocks):
        self.r = self.fn.residual(x_blocks)


def least_squares_f(A, b, block_dims=None):
    """f(x) = (1/2) ||A x - b||^2 with columns of A split into blocks."""
    return QuadraticSmooth(A, b, block_dims=block_dims)


def svm_dual_f(A, b, lam):
    """Smooth part of the dual SVM: (1/(2 lam)) ||A D(b) x||^2 - sum_i x_i.

    ``A`` is the feature-by-sample data matrix, ``b`` the +-1 labels.
    beta_i = ||a_i||^2 / lam for the i-th sample column a_i.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape[1] != b.size:
        raise ValueError(f"A has {A.shape[1]} columns but b has {b.size} labels")
    if not np.all(np.abs(b) == 1.0):
        raise ValueError("labels must be +-1")
    if lam <= 0:
        raise ValueError("lam must be positive")
    P = A.multiply(b) if hasattr(A, "multiply") else np.asarray(A, dtype=float) * b
    return QuadraticSmooth(P, None, scale=1.0 / float(lam), lin=-1.0)


class ProxFunction:
    """Convex proximable term, possibly +inf (indicators).

    ``prox_groups(p)`` partitions the p blocks into groups on which the
    prox factorizes; a separable function has singleton groups, a fully
    coupled one a single group. ``prox_group`` evaluates one group so the
    solvers can skip untouched groups.
    """

    separable = False
    is_zero = False

    def value(self, u):
        raise NotImplementedError

    def prox_groups(self, n_blocks):
        if self.separable:
            return [[i] for i in range(n_blocks)]
        return [list(range(n_blocks))]

    def prox_group(self, idx, gamma, blocks):
        """Prox restricted to the group with block indices ``idx``.

        ``gamma`` and ``blocks`` are the weights and inputs for exactly
        those blocks, in order. Returns new arrays (inputs untouched).
        """
        raise NotImplementedError

    def prox_flat(self, gamma, dims, v):
        """Whole-space prox on the concatenated vector, or None.

        ``gamma`` holds one weight per block, ``dims`` the block sizes and
        ``v`` the flat input. Subclasses with a vectorized evaluation
        override this; returning None means "no flat path", and callers
        fall back to the group loop. The base class has none.
        """
        return None

    def prox(self, gamma, u):
        ub = _blocks(u)
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (len(ub),):
            raise ValueError(f"expected {len(ub)} prox weights, got shape {gamma.shape}")
        if np.any(gamma <= 0) or not np.all(np.isfinite(gamma)):
            raise ValueError("prox weights must be positive and finite")
        if ub:
            dims = tuple(np.asarray(b).size for b in ub)
            flat = self.prox_flat(
                gamma, dims, np.concatenate([np.asarray(b, dtype=float).reshape(-1) for b in ub])
            )
            if flat is not None:
                out, off = [], 0
                for d in dims:
                    out.append(flat[off:off + d])
                    off += d
                return out
        out = [None] * len(ub)
        for idx in self.prox_groups(len(ub)):
            res = self.prox_group(idx, [gamma[i] for i in idx], [ub[i] for i in idx])
            for t, i in enumerate(idx):
                out[i] = res[t]
        return out

    def conjugate_value(self, y):
        raise ConjugateUnavailable(
            f"{type(self).__name__} has no closed-form conjugate value"
        )


class ZeroFunction(ProxFunction):
    """The zero function; prox is the identity."""

    separable = True
    is_zero = True

    def value(self, u):
        _blocks(u)
        return 0.0

    def prox_group(self, idx, gamma, blocks):
        return [np.asarray(b, dtype=float).copy() for b in blocks]

    def prox_flat(self, gamma, dims, v):
        return v.copy()

    def conjugate_value(self, y):
        yb = _blocks(y)
        sq = sum(float(np.asarray(b) @ np.asarray(b)) for b in yb)
        return 0.0 if sq <= _FEAS_TOL ** 2 else INF


def zero_function():
    return ZeroFunction()


class ScaledL1(ProxFunction):
    """alpha * ||u||_1 over all scalar entries of all blocks."""

    separable = True

    def __init__(self, alpha):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.alpha = float(alpha)
        self.is_zero = self.alpha == 0.0

    def value(self, u):
        return self.alpha * float(sum(np.sum(np.abs(b)) for b in _blocks(u)))

    def prox_group(self, idx, gamma, blocks):
        # per-scalar shrinkage; the block weight applies to every scalar in it
        return [soft_threshold(np.asarray(b, dtype=float), g * self.alpha) for g, b in zip(gamma, blocks)]

    def prox_flat(self, gamma, dims, v):
        return soft_threshold(v, np.repeat(np.asarray(gamma, dtype=float) * self.alpha, dims))

    def conjugate_value(self, y):
        # indicator of the l-infinity ball of radius alpha
        top = max((float(np.max(np.abs(b))) if np.asarray(b).size else 0.0) for b in _blocks(y))
        return 0.0 if top <= self.alpha + _FEAS_TOL * (1.0 + self.alpha) else INF


def l1_norm(alpha):
    return ScaledL1(alpha)


class GroupL21(ProxFunction):
    """alpha * sum_g ||u_g||_2 over consecutive groups of blocks.

    ``group_dims`` counts blocks per group (a partition, in order). The
    prox on a group is block soft-thresholding of the concatenated group
    vector, and requires a uniform prox weight inside each group; ties at
    the threshold map to 0.
    """

    def __init__(self, alpha, group_dims):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.alpha = float(alpha)
        self.group_dims = tuple(int(g) for g in group_dims)
        if any(g < 1 for g in self.group_dims):
            raise ValueError("group sizes must be >= 1")
        self.is_zero = self.alpha == 0.0
        self._groups = []
        off = 0
        for g in self.group_dims:
            self._groups.append(list(range(off, off + g)))
            off += g
        self._n_blocks = off
        self._flat_layout = None

    def prox_groups(self, n_blocks):
        if n_blocks != self._n_blocks:
            raise ValueError(
                f"group sizes cover {self._n_blocks} blocks but the space has {n_blocks}"
            )
        return [list(g) for g in self._groups]

    def value(self, u):
        ub = _blocks(u)
        self.prox_groups(len(ub))
        total = 0.0
        for g in self._groups:
            v = np.concatenate([np.asarray(ub[i], dtype=float).reshape(-1) for i in g])
            total += float(np.linalg.norm(v))
        return self.alpha * total

    def prox_flat(self, gamma, dims, v):
        dims = tuple(dims)
        self.prox_groups(len(dims))
        layout = self._flat_layout
        if layout is None or layout[0] != dims:
            ngroups = len(self._groups)
            lead = np.array([g[0] for g in self._groups], dtype=int)
            block_gid = np.repeat(np.arange(ngroups), self.group_dims)
            layout = (dims, lead, block_gid, np.repeat(block_gid, dims))
            self._flat_layout = layout
        _, lead, block_gid, scal_gid = layout
        gamma = np.asarray(gamma, dtype=float)
        g0 = gamma[lead]
        spread = np.abs(gamma - g0[block_gid])
        bad = spread > 1e-9 * np.maximum(np.abs(gamma), np.abs(g0[block_gid]))
        if np.any(bad):
            gid = int(block_gid[int(np.argmax(bad))])
            raise ValueError(
                "group l2,1 prox needs a uniform weight within each group; "
                f"got {[float(gamma[i]) for i in self._groups[gid]]}"
            )
        sq = np.bincount(scal_gid, weights=v * v, minlength=len(self._groups))
        nrm = np.sqrt(sq)
        t = self.alpha * g0
        safe = np.where(nrm > t, nrm, 1.0)
        scale = np.where(nrm > t, 1.0 - t / safe, 0.0)
        return v * scale[scal_gid]

    def prox_group(self, idx, gamma, blocks):
        g0 = gamma[0]
        for g in gamma[1:]:
            if abs(g - g0) > 1e-9 * max(abs(g0), abs(g)):
                raise ValueError(
                    "group l2,1 prox needs a uniform weight within each group; "
                    f"got {gamma}"
                )
        sizes = [np.asarray(b).size for b in blocks]
        v = np.concatenate([np.asarray(b, dtype=float).reshape(-1) for b in blocks])
        nrm = float(np.linalg.norm(v))
        t = self.alpha * g0
        scale = 0.0 if nrm <= t else 1.0 - t / nrm
        out = scale * v
        res, off = [], 0
        for s in sizes:
            res.append(out[off:off + s].copy())
            off += s
        return res

    def conjugate_value(self, y):
        # indicator of the product of radius-alpha balls, one per group
        yb = _blocks(y)
        self.prox_groups(len(yb))
        lim = self.alpha + _FEAS_TOL * (1.0 + self.alpha)
        for g in self._groups:
            v = np.concatenate([np.asarray(yb[i], dtype=float).reshape(-1) for i in g])
            if float(np.linalg.norm(v)) > lim:
                return INF
        return 0.0


def group_l21_norm(alpha, group_dims):
    return GroupL21(alpha, group_dims)


class BoxIndicator(ProxFunction):
    """Indicator of the box [lo, hi], entrywise over the flattened vector.

    Blocks are assumed scalar unless ``block_dims`` locates each block's
    slice of the bounds.
    """

    separable = True

    def __init__(self, lo, hi, block_dims=None):
        self.lo = np.asarray(lo, dtype=float).reshape(-1)
        self.hi = np.asarray(hi, dtype=float).reshape(-1)
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo and hi must have the same shape")
        if np.any(self.lo > self.hi):
            raise ValueError("box requires lo <= hi entrywise")
        if block_dims is None:
            self._offsets = np.arange(self.lo.size + 1)
            self._dims = (1,) * self.lo.size
        else:
            self._dims = tuple(int(d) for d in block_dims)
            if sum(self._dims) != self.lo.size:
                raise ValueError("block dims do not cover the bound vectors")
            self._offsets = np.concatenate(([0], np.cumsum(self._dims))).astype(int)

    def _slice(self, i, b):
        off = self._offsets
        if i >= len(self._dims) or np.asarray(b).size != self._dims[i]:
            raise ValueError(f"block {i} does not match the box layout")
        return self.lo[off[i]:off[i + 1]], self.hi[off[i]:off[i + 1]]

    def value(self, u):
        ub = _blocks(u)
        for i, b in enumerate(ub):
            lo, hi = self._slice(i, b)
            b = np.asarray(b, dtype=float).reshape(-1)
            if np.any(b < lo - 1e-12) or np.any(b > hi + 1e-12):
                return INF
        return 0.0

    def prox_group(self, idx, gamma, blocks):
        out = []
        for i, b in zip(idx, blocks):
            lo, hi = self._slice(i, b)
            out.append(np.clip(np.asarray(b, dtype=float).reshape(-1), lo, hi))
        return out

    def prox_flat(self, gamma, dims, v):
        if tuple(dims) != self._dims:
            raise ValueError("blocks do not match the box layout")
        return np.clip(v, self.lo, self.hi)

    def conjugate_value(self, y):
        # support function of the box
        yb = _blocks(y)
        total = 0.0
        for i, b in enumerate(yb):
            lo, hi = self._slice(i, b)
            b = np.asarray(b, dtype=float).reshape(-1)
            total += float(np.sum(np.maximum(lo * b, hi * b)))
        return total


def box_indicator(lo, hi, block_dims=None):
    return BoxIndicator(lo, hi, block_dims=block_dims)


class HyperplaneIndicator(ProxFunction):
    """Indicator of {u : <b, u> = 0} on the flattened vector; fully coupled.

    The prox under per-block weights gamma is the weighted projection

        u - D(gamma) b <b, u> / <b, D(gamma) b>,

    with the block weight applied to every scalar inside its block.
    Values are evaluated with a relative feasibility slack of 1e-9.
    """

    def __init__(self, b):
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.bnorm_sq = float(self.b @ self.b)
        if self.bnorm_sq == 0.0:
            raise ValueError("hyperplane normal must be nonzero")

    def _flat(self, blocks):
        v = np.concatenate([np.asarray(x, dtype=float).reshape(-1) for x in blocks])
        if v.size != self.b.size:
            raise ValueError(f"expected total dimension {self.b.size}, got {v.size}")
        return v

    def value(self, u):
        v = self._flat(_blocks(u))
        ip = abs(float(self.b @ v))
        lim = _FEAS_TOL * (np.linalg.norm(self.b) * np.linalg.norm(v) + 1.0)
        return 0.0 if ip <= lim else INF

    def prox_group(self, idx, gamma, blocks):
        sizes = [np.asarray(x).size for x in blocks]
        v = self._flat(blocks)
        gflat = np.concatenate([np.full(s, g) for g, s in zip(gamma, sizes)])
        gb = gflat * self.b
        coef = float(self.b @ v) / float(self.b @ gb)
        out = v - coef * gb
        res, off = [], 0
        for s in sizes:
            res.append(out[off:off + s].copy())
            off += s
        return res

    def prox_flat(self, gamma, dims, v):
        if v.size != self.b.size:
            raise ValueError(f"expected total dimension {self.b.size}, got {v.size}")
        gb = np.repeat(np.asarray(gamma, dtype=float), dims) * self.b
        coef = float(self.b @ v) / float(self.b @ gb)
        return v - coef * gb

    def conjugate_value(self, y):
        # indicator of span(b)
        v = self._flat(_blocks(y))
        resid = v - self.b * (float(self.b @ v) / self.bnorm_sq)
        lim = _FEAS_TOL * (1.0 + float(np.linalg.norm(v)))
        return 0.0 if float(np.linalg.norm(resid)) <= lim else INF


def hyperplane_indicator(b):
    return HyperplaneIndicator(b)


def conjugate_prox_group(h, idx, sigma, blocks):
    """prox of h* on one prox group, through the Moreau identity."""
    inv = [1.0 / s for s in sigma]
    scaled = [np.asarray(b, dtype=float) * iv for b, iv in zip(blocks, inv)]
    p = h.prox_group(idx, inv, scaled)
    return [np.asarray(b, dtype=float) - s * q for b, s, q in zip(blocks, sigma, p)]


def conjugate_prox(h, sigma, u):
    """prox_{sigma,h*}(u) = u - D(sigma) prox_{1/sigma,h}(D(1/sigma) u)."""
    ub = _blocks(u)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (len(ub),):
        raise ValueError(f"expected {len(ub)} weights, got shape {sigma.shape}")
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise ValueError("conjugate prox weights must be positive and finite")
    out = [None] * len(ub)
    for idx in h.prox_groups(len(ub)):
        res = conjugate_prox_group(h, idx, [sigma[i] for i in idx], [ub[i] for i in idx])
        for t, i in enumerate(idx):
            out[i] = res[t]
    return out


def conjugate_prox_flat(h, sigma, dims, v):
    """Flat-vector Moreau identity; None when h has no flat prox path."""
    sigma = np.asarray(sigma, dtype=float)
    inv = 1.0 / sigma
    p = h.prox_flat(inv, dims, v * np.repeat(inv, dims))
    if p is None:
        return None
    return v - np.repeat(sigma, dims) * p


class ConjugateProx:
    """View of a proximable h as its conjugate h*: prox and value."""

    def __init__(self, h):
        self.h = h

    def prox(self, sigma, u):
        return conjugate_prox(self.h, sigma, u)

    def value(self, y):
        return self.h.conjugate_value(y)
