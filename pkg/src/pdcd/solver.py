"""Coordinate-descent primal-dual iterations and the run loop.

All variants share one state layout: the primal point x, the duplicated
dual ybold with one copy per (row j, block i in I(j)) pair, and the two
bookkeeping vectors

    w = K* ybold   (per primal block: sum over j in J(i) of M_{j,i}^T ybold^(j)(i)),
    z = S ybold    (per dual row: the average of its copies),

which make one iteration touch only the chosen block and its coupled
rows. The randomized variants draw one block index per iteration,
uniformly, from a PCG64 generator (one bounded-integer draw per
iteration, unbiased by rejection); given the same seed every variant
consumes the identical index stream.

Variants
--------
``cd_primal_dual``
    The general algorithm on the duplicated dual. Per iteration: dual
    candidates ybar^(j) = prox of h* at z + D(sigma) M x on the rows
    coupled to the drawn block (whole prox groups of h, so non-separable
    penalties see every input they need), then the primal candidate
    xbar^(i) = prox of g at x - D(tau)(grad f(x) + 2 M* ybar - w), then
    the block i and copies (j, i), j in J(i), commit.
``cd_pd_mj1``
    The simplification available when every row has multiplicity 1: the
    dual state is single-copy and the primal candidate reads
    M*(2 ybar - y) directly.
``cd_forward_backward``
    h = 0: one forward-backward step on the drawn block.
``full_vu_condat``
    Deterministic full update of the same defining equations (every
    block, every row, no randomness).
``unrolled_oracle``
    Literal reference iteration on the duplicated space: full vectors,
    no lazy evaluation, bookkeeping recomputed from ybold each
    iteration. Slow by design; used to certify the fast path.

When g is separable only the drawn coordinate of the primal prox is
evaluated; otherwise the full prox is evaluated and only the drawn
coordinate is committed.

Commits either rebind freshly allocated arrays or, on the all-scalar
fast path below, write through views into flat mirror buffers private to
the state; either way ``SolverState.copy`` deep-copies every array, so
copies of state never alias.

When every primal block and every dual row is one-dimensional and the
three terms have recognized closed forms, ``cd_primal_dual`` switches to
a precomputed index plan over flat vectors. The plan replicates the
generic block arithmetic operation for operation (same products, same
accumulation order within each row and group), so the two paths agree to
rounding noise; each stays bitwise deterministic per seed.
"""

import time
from dataclasses import dataclass

import numpy as np

from .blocks import BlockVector, DuplicatedDual, dual_reduce_S
from .functions import (
    BoxIndicator,
    GroupL21,
    HyperplaneIndicator,
    QuadraticSmooth,
    ScaledL1,
    ZeroFunction,
    conjugate_prox,
    conjugate_prox_flat,
    conjugate_prox_group,
)
from . import diagnostics

__all__ = [
    "SolverConfig",
    "SolverState",
    "RunResult",
    "DivergenceError",
    "VARIANTS",
    "iterate_cd_primal_dual",
    "iterate_cd_pd_mj1",
    "iterate_cd_forward_backward",
    "iterate_unrolled_oracle",
    "iterate_full_vu_condat",
    "t_map",
    "run",
]


class DivergenceError(RuntimeError):
    """An iterate went non-finite; carries the trace of finite checkpoints."""

    def __init__(self, message, trace=None, iteration=None):
        super().__init__(message)
        self.trace = trace
        self.iteration = iteration


def _dual_adjoint(M, ybold):
    """K* ybold: block i sums M_{j,i}^T over the copies (j, i), j in J(i)."""
    out = []
    for i in range(M.n):
        acc = np.zeros(M.primal_dims[i])
        for j, mat in M.col_entries[i]:
            acc = acc + mat.T @ ybold.entries[(j, i)]
        out.append(acc)
    return BlockVector(out)


class SolverState:
    """Mutable iteration state shared by all variants."""

    __slots__ = ("x", "ybold", "w", "z", "k", "rng", "grad", "_fastpath")

    def __init__(self, x, ybold, w, z, k, rng, grad):
        self.x = x
        self.ybold = ybold
        self.w = w
        self.z = z
        self.k = k
        self.rng = rng
        self.grad = grad

    @classmethod
    def initial(cls, problem, seed=0, x0=None, y0=None):
        """State at iteration 0; x0 and the dual default to zero.

        ``y0`` may be a dual-space BlockVector (expanded to identical
        copies) or a DuplicatedDual.
        """
        M = problem.M
        x = BlockVector.zeros(M.primal_dims) if x0 is None else x0.copy()
        if y0 is None:
            ybold = DuplicatedDual.zeros(M)
        elif isinstance(y0, DuplicatedDual):
            ybold = y0.copy()
        else:
            from .blocks import dual_expand

            ybold = dual_expand(y0, M)
        z = dual_reduce_S(ybold)
        w = _dual_adjoint(M, ybold)
        rng = np.random.Generator(np.random.PCG64(seed))
        grad = problem.f.residual_tracker(x.blocks)
        return cls(x, ybold, w, z, 0, rng, grad)

    def copy(self, problem):
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        x = self.x.copy()
        return SolverState(
            x,
            self.ybold.copy(),
            self.w.copy(),
            self.z.copy(),
            self.k,
            rng,
            problem.f.residual_tracker(x.blocks),
        )

    def refresh(self, problem):
        """Recompute w, z and the gradient cache exactly from x and ybold."""
        self.z = dual_reduce_S(self.ybold)
        self.w = _dual_adjoint(problem.M, self.ybold)
        self.grad.refresh(self.x.blocks)

    def is_finite(self):
        buf = getattr(self, "_fastpath", None)
        if buf is not None and buf.owns(self):
            return bool(
                np.all(np.isfinite(buf.xs))
                and np.all(np.isfinite(buf.zs))
                and np.all(np.isfinite(buf.ws))
                and np.all(np.isfinite(buf.ycop))
            )
        return (
            all(np.all(np.isfinite(b)) for b in self.x.blocks)
            and all(np.all(np.isfinite(b)) for b in self.z.blocks)
            and all(np.all(np.isfinite(b)) for b in self.w.blocks)
            and all(np.all(np.isfinite(v)) for v in self.ybold.entries.values())
        )


def _draw(state, n, index):
    if index is not None:
        i = int(index)
        if not (0 <= i < n):
            raise ValueError(f"block index {i} outside range({n})")
        return i
    return int(state.rng.integers(0, n))


class _ScalarBuffers:
    """Flat mirrors of an all-scalar state; the state's blocks are views.

    ``owns`` re-validates the aliasing before every fast iteration: any
    foreign mutation (a refresh, another variant, manual stepping)
    advances ``state.k`` or rebinds a block, and the next fast iteration
    then re-attaches from the current state instead of trusting stale
    buffers.
    """

    __slots__ = ("xs", "zs", "ws", "ycop", "k")

    def __init__(self, xs, zs, ws, ycop, k):
        self.xs = xs
        self.zs = zs
        self.ws = ws
        self.ycop = ycop
        self.k = k

    def owns(self, state):
        if self.k != state.k:
            return False
        if state.x.blocks[0].base is not self.xs:
            return False
        if state.w.blocks[0].base is not self.ws:
            return False
        zb = state.z.blocks
        return not zb or zb[0].base is self.zs


def _attach_scalar(state, problem):
    """Rebuild the state around flat buffers; None if the gradient cache
    is not the plain residual tracker the plan was built for."""
    tr = state.grad
    if getattr(tr, "fn", None) is not problem.f:
        return None
    if not isinstance(getattr(tr, "r", None), np.ndarray):
        return None
    M = problem.M
    xs = state.x.to_flat()
    state.x = BlockVector._wrap([xs[i:i + 1] for i in range(M.n)])
    ws = state.w.to_flat()
    state.w = BlockVector._wrap([ws[i:i + 1] for i in range(M.n)])
    zs = state.z.to_flat()
    state.z = BlockVector._wrap([zs[j:j + 1] for j in range(M.p)])
    ycop = np.empty(len(M.copy_order))
    ent = state.ybold.entries
    for c, pair in enumerate(M.copy_order):
        ycop[c] = ent[pair][0]
        ent[pair] = ycop[c:c + 1]
    buf = _ScalarBuffers(xs, zs, ws, ycop, state.k)
    state._fastpath = buf
    return buf


class _ScalarPlan:
    __slots__ = (
        "steps_src", "tau", "per_block", "h_kind", "g_kind",
        "g_thr", "g_lo", "g_hi", "cols", "fscale", "lin",
    )


def _build_scalar_plan(problem, steps):
    M, f, g, h = problem.M, problem.f, problem.g, problem.h
    plan = _ScalarPlan()
    plan.steps_src = steps
    tau = np.asarray(steps.tau, dtype=float)
    plan.tau = tau

    # exact-type checks: a subclass may override prox semantics, in which
    # case the generic block path is the only safe one
    plan.g_thr = plan.g_lo = plan.g_hi = None
    if type(g) is ScaledL1:
        plan.g_kind = "l1"
        # same product order as the block prox: weight times alpha
        plan.g_thr = tau * g.alpha
    elif type(g) is BoxIndicator:
        if g._dims != (1,) * M.n:
            return None
        plan.g_kind = "box"
        plan.g_lo = g.lo
        plan.g_hi = g.hi
    elif type(g) is ZeroFunction:
        plan.g_kind = "zero"
    else:
        return None

    plan.cols = [np.ascontiguousarray(cb[:, 0]) for cb in f.col_blocks]
    plan.fscale = f.scale
    if f.lin_blocks is None:
        plan.lin = None
    else:
        plan.lin = np.array([float(lb[0]) for lb in f.lin_blocks])

    if M.p:
        sigma = np.asarray(steps.sigma, dtype=float)
        inv = 1.0 / sigma
        if type(h) is GroupL21:
            plan.h_kind = "group_l21"
            # run the group prox once per group so a non-uniform sigma
            # fails here with the exact error the block path would raise
            for idx in problem.dual_groups:
                h.prox_group(list(idx), [inv[j] for j in idx],
                             [np.zeros(1)] * len(idx))
        elif type(h) is HyperplaneIndicator:
            plan.h_kind = "hyperplane"
            gb_full = inv * h.b
            denom = float(h.b @ gb_full)
        elif type(h) is ScaledL1:
            plan.h_kind = "l1"
        elif type(h) is BoxIndicator:
            if h._dims != (1,) * M.p:
                return None
            plan.h_kind = "box"
        elif type(h) is ZeroFunction:
            plan.h_kind = "zero"
        else:
            return None
    else:
        plan.h_kind = "zero"

    groups = problem.dual_groups
    mult = M.multiplicities.astype(float)
    per_block = []
    for i in range(M.n):
        rows = [j for gi in problem.groups_for_primal[i] for j in groups[gi]]
        rows_arr = np.array(rows, dtype=np.intp)
        mvals, mcols, segptr = [], [], []
        for j in rows:
            segptr.append(len(mvals))
            for ii, mat in M.row_entries[j]:
                mvals.append(mat[0, 0])
                mcols.append(ii)
        jsel = [j for j, _ in M.col_entries[i]]
        pos = {j: t for t, j in enumerate(rows)}
        entry = {
            "rows": rows_arr,
            "mvals": np.array(mvals),
            "mcols": np.array(mcols, dtype=np.intp),
            "segptr": np.array(segptr, dtype=np.intp),
            "selfpos": np.array([pos[j] for j in jsel], dtype=np.intp),
            "cop": np.array([M.copy_slot[(j, i)] for j in jsel], dtype=np.intp),
            "colvals": np.array([mat[0, 0] for _, mat in M.col_entries[i]]),
            "jsel": np.array(jsel, dtype=np.intp),
            "msel": mult[jsel] if jsel else np.zeros(0),
        }
        if M.p:
            entry["sig"] = sigma[rows_arr]
            entry["inv"] = inv[rows_arr]
            if plan.h_kind == "group_l21":
                gptr, grep, lead = [], [], []
                off = 0
                for gi in problem.groups_for_primal[i]:
                    size = len(groups[gi])
                    gptr.append(off)
                    grep.extend([len(gptr) - 1] * size)
                    lead.append(groups[gi][0])
                    off += size
                entry["hx"] = (
                    np.array(gptr, dtype=np.intp),
                    np.array(grep, dtype=np.intp),
                    h.alpha * inv[np.array(lead, dtype=np.intp)]
                    if lead else np.zeros(0),
                )
            elif plan.h_kind == "hyperplane":
                entry["hx"] = (gb_full, denom, h.b)
            elif plan.h_kind == "l1":
                entry["hx"] = (inv[rows_arr] * h.alpha,)
            elif plan.h_kind == "box":
                entry["hx"] = (h.lo[rows_arr], h.hi[rows_arr])
            else:
                entry["hx"] = ()
        else:
            entry["sig"] = entry["inv"] = np.zeros(0)
            entry["hx"] = ()
        per_block.append((
            entry["rows"], entry["mvals"], entry["mcols"], entry["segptr"],
            entry["sig"], entry["inv"], entry["cop"], entry["selfpos"],
            entry["colvals"], entry["jsel"], entry["msel"], entry["hx"],
        ))
    plan.per_block = per_block
    return plan


def _scalar_plan_for(problem, steps):
    """Cached plan lookup; None when the problem has no fast path."""
    d = problem.__dict__
    if d.get("_cd_plan_unfit"):
        return None
    cached = d.get("_cd_plan")
    if cached is not None and cached.steps_src is steps:
        return cached
    M = problem.M
    if any(dd != 1 for dd in M.primal_dims) or any(dd != 1 for dd in M.dual_dims) \
            or type(problem.f) is not QuadraticSmooth:
        d["_cd_plan_unfit"] = True
        return None
    plan = _build_scalar_plan(problem, steps)
    if plan is None:
        d["_cd_plan_unfit"] = True
        return None
    d["_cd_plan"] = plan
    return plan


def _scalar_step(state, problem, plan, buf, i):
    """One cd_primal_dual iteration on the flat mirrors."""
    xs, zs, ws, ycop = buf.xs, buf.zs, buf.ws, buf.ycop
    (rows, mvals, mcols, segptr, sig, inv, cop, selfpos,
     colvals, jsel, msel, hx) = plan.per_block[i]
    tr = state.grad
    col = plan.cols[i]
    gi = plan.fscale * float(np.dot(col, tr.r))
    if plan.lin is not None:
        gi += plan.lin[i]

    touched = rows.size > 0
    if touched:
        mx = np.add.reduceat(mvals * xs[mcols], segptr)
        u = zs[rows] + sig * mx
        kind = plan.h_kind
        if kind == "group_l21":
            gptr, grep, tgrp = hx
            scaled = u * inv
            nrm = np.sqrt(np.add.reduceat(scaled * scaled, gptr))
            live = nrm > tgrp
            sc = np.where(live, 1.0 - tgrp / np.where(live, nrm, 1.0), 0.0)
            ybar = u - sig * (scaled * sc[grep])
        elif kind == "hyperplane":
            gb, denom, bvec = hx
            scaled = u * inv
            coef = float(bvec @ scaled) / denom
            ybar = u - sig * (scaled - coef * gb)
        elif kind == "l1":
            thr, = hx
            scaled = u * inv
            ybar = u - sig * (np.sign(scaled) * np.maximum(np.abs(scaled) - thr, 0.0))
        elif kind == "box":
            lo, hi = hx
            ybar = u - sig * np.clip(u * inv, lo, hi)
        else:
            ybar = u - sig * (u * inv)
        ysel = ybar[selfpos]
        v = float(np.dot(colvals, ysel))
    else:
        v = 0.0

    xi = float(xs[i])
    a = xi - plan.tau[i] * (gi + 2.0 * v - float(ws[i]))
    gk = plan.g_kind
    if gk == "l1":
        t = abs(a) - plan.g_thr[i]
        xb = 0.0 if t <= 0.0 else (t if a > 0.0 else -t)
    elif gk == "box":
        lo_i, hi_i = plan.g_lo[i], plan.g_hi[i]
        xb = lo_i if a < lo_i else (hi_i if a > hi_i else a)
    else:
        xb = a

    if touched and jsel.size:
        dyv = ysel - ycop[cop]
        ws[i] += np.dot(colvals, dyv)
        zs[jsel] += dyv / msel
        ycop[cop] = ysel
    dx = xb - xi
    xs[i] = xb
    np.add(tr.r, col * dx, out=tr.r)
    state.k += 1
    buf.k = state.k


def _lazy_dual_candidates(problem, state, sigma, i):
    """ybar^(j) for every row in the prox groups touching block i."""
    M, h = problem.M, problem.h
    x, z = state.x.blocks, state.z.blocks
    ybar = {}
    for gi in problem.groups_for_primal[i]:
        idx = problem.dual_groups[gi]
        u = [z[j] + sigma[j] * M.apply_row(j, x) for j in idx]
        res = conjugate_prox_group(h, idx, [sigma[j] for j in idx], u)
        for t, j in enumerate(idx):
            ybar[j] = res[t]
    return ybar


def _full_dual_candidates(problem, state, sigma):
    M, h = problem.M, problem.h
    mx = M.apply(state.x)
    z = state.z.blocks
    u = [z[j] + sigma[j] * mx.blocks[j] for j in range(M.p)]
    return conjugate_prox(h, sigma, u)


def iterate_cd_primal_dual(state, problem, steps, index=None):
    """One iteration of the general randomized primal-dual update."""
    M, g = problem.M, problem.g
    if g.separable:
        plan = _scalar_plan_for(problem, steps)
        if plan is not None:
            buf = getattr(state, "_fastpath", None)
            if buf is None or not buf.owns(state):
                buf = _attach_scalar(state, problem)
            if buf is not None:
                i = _draw(state, M.n, index)
                _scalar_step(state, problem, plan, buf, i)
                return state
    i = _draw(state, M.n, index)
    tau, sigma = steps.tau, steps.sigma
    x, w, z = state.x.blocks, state.w.blocks, state.z.blocks
    yb = state.ybold.entries
    m = M.multiplicities

    if g.separable:
        ybar = _lazy_dual_candidates(problem, state, sigma, i)
        grad_i = state.grad.partial(i)
        v = np.zeros(M.primal_dims[i])
        for j, mat in M.col_entries[i]:
            v = v + mat.T @ ybar[j]
        a = x[i] - tau[i] * (grad_i + 2.0 * v - w[i])
        xbar_i = g.prox_group([i], [tau[i]], [a])[0]
    else:
        ybar = dict(enumerate(_full_dual_candidates(problem, state, sigma)))
        grad = state.grad.full()
        arg = []
        for t in range(M.n):
            adj = np.zeros(M.primal_dims[t])
            for j, mat in M.col_entries[t]:
                adj = adj + mat.T @ ybar[j]
            arg.append(x[t] - tau[t] * (grad[t] + 2.0 * adj - w[t]))
        xbar_i = g.prox(tau, arg)[i]

    wi = w[i]
    for j, mat in M.col_entries[i]:
        dy = ybar[j] - yb[(j, i)]
        wi = wi + mat.T @ dy
        z[j] = z[j] + dy / m[j]
        yb[(j, i)] = ybar[j]
    w[i] = wi
    dx = xbar_i - x[i]
    x[i] = xbar_i
    state.grad.update(i, dx)
    state.k += 1
    return state


def iterate_cd_pd_mj1(state, problem, steps, index=None):
    """One iteration of the single-copy variant (all row multiplicities 1)."""
    M, g = problem.M, problem.g
    if not M.all_single:
        raise ValueError("cd_pd_mj1 requires every row multiplicity m_j = 1")
    i = _draw(state, M.n, index)
    tau, sigma = steps.tau, steps.sigma
    x, w, z = state.x.blocks, state.w.blocks, state.z.blocks
    yb = state.ybold.entries

    if g.separable:
        ybar = _lazy_dual_candidates(problem, state, sigma, i)
        grad_i = state.grad.partial(i)
        v = np.zeros(M.primal_dims[i])
        for j, mat in M.col_entries[i]:
            v = v + mat.T @ (2.0 * ybar[j] - z[j])
        a = x[i] - tau[i] * (grad_i + v)
        xbar_i = g.prox_group([i], [tau[i]], [a])[0]
    else:
        ybar = dict(enumerate(_full_dual_candidates(problem, state, sigma)))
        grad = state.grad.full()
        arg = []
        for t in range(M.n):
            adj = np.zeros(M.primal_dims[t])
            for j, mat in M.col_entries[t]:
                adj = adj + mat.T @ (2.0 * ybar[j] - z[j])
            arg.append(x[t] - tau[t] * (grad[t] + adj))
        xbar_i = g.prox(tau, arg)[i]

    wi = w[i]
    for j, mat in M.col_entries[i]:
        dy = ybar[j] - z[j]
        wi = wi + mat.T @ dy
        z[j] = ybar[j]
        yb[(j, i)] = ybar[j]
    w[i] = wi
    dx = xbar_i - x[i]
    x[i] = xbar_i
    state.grad.update(i, dx)
    state.k += 1
    return state


def iterate_cd_forward_backward(state, problem, steps, index=None):
    """One randomized forward-backward step; requires h = 0."""
    M, g = problem.M, problem.g
    if M.p != 0 and not problem.h.is_zero:
        raise ValueError("cd_forward_backward requires h = 0")
    i = _draw(state, M.n, index)
    tau = steps.tau
    x = state.x.blocks

    if g.separable:
        a = x[i] - tau[i] * state.grad.partial(i)
        xbar_i = g.prox_group([i], [tau[i]], [a])[0]
    else:
        grad = state.grad.full()
        arg = [x[t] - tau[t] * grad[t] for t in range(M.n)]
        xbar_i = g.prox(tau, arg)[i]

    dx = xbar_i - x[i]
    x[i] = xbar_i
    state.grad.update(i, dx)
    state.k += 1
    return state


def _t_map_flat(problem, steps, x_flat, grad_flat, y_flat):
    """Candidate map on concatenated vectors; None if a term has no flat prox."""
    M, g, h = problem.M, problem.g, problem.h
    tau = np.asarray(steps.tau, dtype=float)
    if M.p:
        sigma = np.asarray(steps.sigma, dtype=float)
        u = y_flat + np.repeat(sigma, M.dual_dims) * M.apply_flat(x_flat)
        ybar = conjugate_prox_flat(h, sigma, M.dual_dims, u)
        if ybar is None:
            return None
        adj = M.adjoint_apply_flat(2.0 * ybar - y_flat)
        arg = x_flat - np.repeat(tau, M.primal_dims) * (grad_flat + adj)
    else:
        ybar = np.zeros(0)
        arg = x_flat - np.repeat(tau, M.primal_dims) * grad_flat
    xbar = g.prox_flat(tau, M.primal_dims, arg)
    if xbar is None:
        return None
    return xbar, ybar


def _split_primal(M, flat):
    off = M.col_offsets
    return [flat[off[i]:off[i + 1]] for i in range(M.n)]


def _split_dual(M, flat):
    off = M.row_offsets
    return [flat[off[j]:off[j + 1]] for j in range(M.p)]


def t_map(problem, x, y, steps):
    """Full candidate map: (x, y) -> (xbar, ybar).

    ybar = prox of h* at y + D(sigma) M x, then
    xbar = prox of g at x - D(tau)(grad f(x) + M*(2 ybar - y)).
    Its fixed points are exactly the saddle points.
    """
    M, f, g, h = problem.M, problem.f, problem.g, problem.h
    gradient_flat = getattr(f, "gradient_flat", None)
    if gradient_flat is not None:
        xf = x.to_flat()
        flat = _t_map_flat(problem, steps, xf, gradient_flat(xf), y.to_flat())
        if flat is not None:
            xbar_f, ybar_f = flat
            return (
                BlockVector._wrap(_split_primal(M, xbar_f)),
                BlockVector._wrap(_split_dual(M, ybar_f)),
            )
    tau, sigma = steps.tau, steps.sigma
    mx = M.apply(x)
    u = [y.blocks[j] + sigma[j] * mx.blocks[j] for j in range(M.p)]
    ybar = conjugate_prox(h, sigma, u)
    grad = f.gradient(x)
    adj = M.adjoint_apply([2.0 * ybar[j] - y.blocks[j] for j in range(M.p)])
    arg = [
        x.blocks[t] - tau[t] * (grad[t] + adj.blocks[t]) for t in range(M.n)
    ]
    xbar = g.prox(tau, arg)
    return BlockVector(xbar), BlockVector(ybar)


def iterate_full_vu_condat(state, problem, steps, index=None):
    """Deterministic full update; tau must be valid for the global
    Lipschitz constant of grad f (the caller chooses the steps)."""
    M = problem.M
    flat = None
    full_flat = getattr(state.grad, "full_flat", None)
    if full_flat is not None:
        flat = _t_map_flat(
            problem, steps, state.x.to_flat(), full_flat(), state.z.to_flat()
        )
    if flat is not None:
        xbar_blocks = _split_primal(M, flat[0])
        ybar_blocks = _split_dual(M, flat[1])
        w_new = BlockVector._wrap(_split_primal(M, M.adjoint_apply_flat(flat[1])))
    else:
        y = BlockVector([b for b in state.z.blocks])
        xbar, ybar = t_map(problem, state.x, y, steps)
        xbar_blocks, ybar_blocks = xbar.blocks, ybar.blocks
        w_new = M.adjoint_apply(ybar)
    yb = state.ybold.entries
    for (j, i) in M.copy_order:
        yb[(j, i)] = ybar_blocks[j]
    state.z = BlockVector._wrap(list(ybar_blocks))
    state.w = w_new
    state.x = BlockVector._wrap(list(xbar_blocks))
    state.grad.refresh(state.x.blocks)
    state.k += 1
    return state


def iterate_unrolled_oracle(state, problem, steps, index=None):
    """Literal reference iteration on the duplicated space.

    Maintains the full duplicated dual explicitly: per iteration it forms
    ubold = ybold + D(sigma_tilde) K x with sigma_tilde_j = m_j sigma_j,
    averages the copies, takes the prox of h* row-wise (each row of the
    duplicated prox is that many identical copies), forms the full primal
    candidate with K*(2 ybarbold - ybold), and commits the drawn block
    and its copies. w and z are then recomputed from ybold outright.
    """
    M, f, g, h = problem.M, problem.f, problem.g, problem.h
    K, S, m = problem.duplication
    i = _draw(state, M.n, index)
    tau, sigma = steps.tau, steps.sigma

    ybold_bv = state.ybold.to_blockvector()
    kx = K.apply(state.x)
    sig_t = [m[j] * sigma[j] for (j, _) in M.copy_order]
    ubold = BlockVector(
        [ybold_bv.blocks[c] + sig_t[c] * kx.blocks[c] for c in range(len(M.copy_order))]
    )
    zt = S(ubold)
    ybar = conjugate_prox(h, sigma, zt.blocks)
    twice_minus = BlockVector(
        [
            2.0 * ybar[j] - ybold_bv.blocks[c]
            for c, (j, _) in enumerate(M.copy_order)
        ]
    )
    v = K.adjoint_apply(twice_minus)
    grad = f.gradient(state.x)
    arg = [
        state.x.blocks[t] - tau[t] * (grad[t] + v.blocks[t]) for t in range(M.n)
    ]
    xbar = g.prox(tau, arg)

    state.x[i] = xbar[i]
    for j, _mat in M.col_entries[i]:
        state.ybold.entries[(j, i)] = ybar[j].copy()
    state.z = dual_reduce_S(state.ybold)
    state.w = _dual_adjoint(M, state.ybold)
    state.grad.refresh(state.x.blocks)
    state.k += 1
    return state


VARIANTS = {
    "cd_primal_dual": iterate_cd_primal_dual,
    "cd_pd_mj1": iterate_cd_pd_mj1,
    "cd_forward_backward": iterate_cd_forward_backward,
    "full_vu_condat": iterate_full_vu_condat,
    "unrolled_oracle": iterate_unrolled_oracle,
}


@dataclass
class SolverConfig:
    """Run-loop configuration.

    ``checkpoint_every`` counts iterations and defaults to one epoch
    (n iterations). ``stop_tolerance`` > 0 stops the run at the first
    checkpoint whose saddle residual falls below it. ``refresh_every``
    bounds bookkeeping drift by recomputing w, z and the gradient cache.
    """

    steps: object
    max_iterations: int
    variant: str = "cd_primal_dual"
    seed: int = 0
    checkpoint_every: int = None
    stop_tolerance: float = 0.0
    refresh_every: int = 10000
    record_gap: bool = None
    record_lyapunov: bool = False

    def __post_init__(self):
        self.max_iterations = int(self.max_iterations)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown variant {self.variant!r}; pick one of {sorted(VARIANTS)}"
            )
        if self.checkpoint_every is not None and int(self.checkpoint_every) < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if not np.isfinite(self.stop_tolerance) or self.stop_tolerance < 0:
            raise ValueError("stop_tolerance must be >= 0")
        if int(self.refresh_every) < 1:
            raise ValueError("refresh_every must be >= 1")


class RunResult(tuple):
    """(solution, dual, trace) with named access."""

    def __new__(cls, solution, dual, trace):
        return super().__new__(cls, (solution, dual, trace))

    @property
    def solution(self):
        return self[0]

    @property
    def dual(self):
        return self[1]

    @property
    def trace(self):
        return self[2]


def _check_variant_preconditions(problem, variant):
    if variant == "cd_pd_mj1" and not problem.M.all_single:
        raise ValueError("cd_pd_mj1 requires all row multiplicities equal to 1")
    if variant == "cd_forward_backward" and problem.M.p != 0 and not problem.h.is_zero:
        raise ValueError("cd_forward_backward requires h = 0")


def run(problem, config, x0=None, y0=None, reference=None, reference_saddle=None):
    """Run one variant to its stopping rule.

    Returns ``RunResult(solution, dual, trace)``. The trace records one
    checkpoint per ``checkpoint_every`` iterations (iteration 0
    included): iteration, epoch = k // n, wall time, primal objective,
    saddle residual, and optionally the SVM duality gap, the distance to
    ``reference``, and Lyapunov values against ``reference_saddle``.
    Runs are bitwise deterministic in (problem, config, seed).

    Raises :class:`DivergenceError` when an iterate goes non-finite; the
    exception carries the trace up to the last finite checkpoint.
    """
    _check_variant_preconditions(problem, config.variant)
    step_fn = VARIANTS[config.variant]
    n = problem.M.n
    every = n if config.checkpoint_every is None else int(config.checkpoint_every)
    record_gap = config.record_gap
    if record_gap is None:
        record_gap = getattr(problem, "kind", "") == "svm_dual"

    state = SolverState.initial(problem, seed=config.seed, x0=x0, y0=y0)
    trace = diagnostics.Trace()
    t0 = time.perf_counter()

    def checkpoint(k):
        x, y = state.x, state.z
        if not state.is_finite():
            raise DivergenceError(
                f"iterate went non-finite at iteration {k}", trace=trace, iteration=k
            )
        res = diagnostics.saddle_residual(problem, x, y)
        cp = diagnostics.Checkpoint(
            iteration=k,
            epoch=k // n,
            wall_time=time.perf_counter() - t0,
            objective=diagnostics.objective_value(problem, x),
            saddle_residual=res,
            duality_gap=diagnostics.svm_duality_gap(problem, x) if record_gap else None,
            distance_to_reference=(
                float(np.linalg.norm(x.to_flat() - reference.to_flat()))
                if reference is not None
                else None
            ),
        )
        if config.record_lyapunov and reference_saddle is not None:
            xs, ys = reference_saddle
            cp.lyapunov_V = diagnostics.V_lyapunov(
                (x, y), (xs, ys), config.steps.tau, config.steps.sigma, problem.M
            )
            cp.bregman_S = diagnostics.S_bregman(problem.f, x, xs)
        trace.append(cp)
        return res

    res = checkpoint(0)
    converged = config.stop_tolerance > 0 and res <= config.stop_tolerance
    if not converged:
        for k in range(1, config.max_iterations + 1):
            step_fn(state, problem, config.steps)
            if k % config.refresh_every == 0:
                state.refresh(problem)
            if k % every == 0 or k == config.max_iterations:
                res = checkpoint(k)
                if config.stop_tolerance > 0 and res <= config.stop_tolerance:
                    converged = True
                    break
    trace.converged = converged
    trace.total_iterations = state.k
    return RunResult(state.x, state.ybold, trace)
