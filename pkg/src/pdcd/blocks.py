"""Block-structured vectors and sparse block linear operators.

The solvers in this package work on a product space X_1 x ... x X_n of
dense real coordinate blocks, coupled to a dual product space
Y_1 x ... x Y_p through a block linear operator M whose rows touch only
a few primal blocks. This module provides:

* :class:`BlockVector`, a list of dense float64 blocks with the small
  amount of arithmetic the solvers need;
* :class:`BlockLinearOperator`, a map-of-blocks sparse operator with
  precomputed row supports I(j), column supports J(i) and row
  multiplicities m_j = |I(j)|;
* the duplication factorization M = D(m) S K, where K copies each primal
  block into every row that reads it (one nonzero per row of K) and S
  averages the copies back; and
* :class:`DuplicatedDual`, the duplicated dual variable holding one copy
  of y^(j) per (row j, primal block i in I(j)) pair.

All objects are immutable after construction except for the entries of
:class:`BlockVector` and :class:`DuplicatedDual`, which solver state
mutates in place. Nothing here locks: concurrent use requires one state
per thread.
"""

import numpy as np

__all__ = [
    "BlockStructure",
    "BlockVector",
    "BlockLinearOperator",
    "DuplicatedDual",
    "weighted_norm_sq",
    "block_dot",
    "build_duplication",
    "dual_reduce_S",
    "dual_expand",
]


def _check_dims(dims, name):
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"{name}: all block dimensions must be >= 1, got {dims}")
    return dims


class BlockStructure:
    """Dimensions of the primal and dual product spaces."""

    def __init__(self, primal_dims, dual_dims):
        self.primal_dims = _check_dims(primal_dims, "primal_dims")
        self.dual_dims = _check_dims(dual_dims, "dual_dims")

    @property
    def n(self):
        return len(self.primal_dims)

    @property
    def p(self):
        return len(self.dual_dims)

    def __repr__(self):
        return f"BlockStructure(primal={self.primal_dims}, dual={self.dual_dims})"


class BlockVector:
    """A point of a block product space: a list of dense float64 vectors.

    Scalar blocks are stored as length-1 vectors so every block has the
    same shape contract.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        self.blocks = [np.asarray(b, dtype=float).reshape(-1) for b in blocks]

    @classmethod
    def zeros(cls, dims):
        return cls([np.zeros(int(d)) for d in dims])

    @classmethod
    def _wrap(cls, blocks):
        # trusted fast path: ``blocks`` is a fresh list of float64 1-D arrays
        out = object.__new__(cls)
        out.blocks = blocks
        return out

    @classmethod
    def from_flat(cls, values, dims):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != sum(dims):
            raise ValueError(f"flat vector of size {values.size} does not match dims {tuple(dims)}")
        out, off = [], 0
        for d in dims:
            out.append(values[off:off + d].copy())
            off += d
        return cls(out)

    @property
    def dims(self):
        return tuple(b.size for b in self.blocks)

    @property
    def n_blocks(self):
        return len(self.blocks)

    def to_flat(self):
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate(self.blocks)

    def copy(self):
        return BlockVector([b.copy() for b in self.blocks])

    def norm_sq(self):
        return float(sum(b @ b for b in self.blocks))

    def norm(self):
        return float(np.sqrt(self.norm_sq()))

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    def __setitem__(self, i, value):
        self.blocks[i] = np.asarray(value, dtype=float).reshape(-1)

    def __add__(self, other):
        return BlockVector([a + b for a, b in zip(self.blocks, other.blocks, strict=True)])

    def __sub__(self, other):
        return BlockVector([a - b for a, b in zip(self.blocks, other.blocks, strict=True)])

    def __mul__(self, c):
        c = float(c)
        return BlockVector([c * b for b in self.blocks])

    __rmul__ = __mul__

    def __repr__(self):
        return f"BlockVector(dims={self.dims})"


def block_dot(u, v):
    """Euclidean inner product of two conforming block vectors."""
    return float(sum(a @ b for a, b in zip(u.blocks, v.blocks, strict=True)))


def weighted_norm_sq(u, gamma):
    """Squared weighted norm sum_i gamma_i ||u^(i)||^2 with one weight per block.

    Weights must be finite and nonnegative.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (len(u.blocks),):
        raise ValueError(f"expected {len(u.blocks)} weights, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)) or np.any(gamma < 0):
        raise ValueError("weights must be finite and >= 0")
    return float(sum(g * (b @ b) for g, b in zip(gamma, u.blocks)))


class BlockLinearOperator:
    """Sparse block linear operator between block product spaces.

    Stored as a map from (row j, column i) to a dense d_j x d_i matrix.
    Absent keys are structural zeros. Construction precomputes, for every
    row j, the support I(j) (primal blocks the row reads) and the
    multiplicity m_j = |I(j)|, and for every column i the support J(i)
    (rows that read block i). Rows with empty support are rejected: a row
    of the coupling term that reads nothing constrains nothing and would
    make the row multiplicities meaningless downstream.
    """

    def __init__(self, primal_dims, dual_dims, blocks):
        self.primal_dims = _check_dims(primal_dims, "primal_dims")
        self.dual_dims = _check_dims(dual_dims, "dual_dims")
        n, p = len(self.primal_dims), len(self.dual_dims)
        store = {}
        for (j, i), mat in blocks.items():
            j, i = int(j), int(i)
            if not (0 <= j < p and 0 <= i < n):
                raise ValueError(f"block key ({j}, {i}) outside the {p} x {n} pattern")
            mat = np.ascontiguousarray(mat, dtype=float)
            if mat.ndim != 2 or mat.shape != (self.dual_dims[j], self.primal_dims[i]):
                raise ValueError(
                    f"block ({j}, {i}) must have shape "
                    f"({self.dual_dims[j]}, {self.primal_dims[i]}), got {mat.shape}"
                )
            store[(j, i)] = mat
        self.blocks = store
        row_support = [[] for _ in range(p)]
        col_support = [[] for _ in range(n)]
        for (j, i) in store:
            row_support[j].append(i)
            col_support[i].append(j)
        for j, sup in enumerate(row_support):
            if not sup:
                raise ValueError(f"row {j} has empty support; operators with empty rows are rejected")
        self.row_support = tuple(tuple(sorted(s)) for s in row_support)
        self.col_support = tuple(tuple(sorted(s)) for s in col_support)
        self.multiplicities = np.array([len(s) for s in self.row_support], dtype=int)
        self.all_single = bool(np.all(self.multiplicities == 1)) if p else True
        # per-column list of (row, matrix) pairs in row order, for the solvers' hot path
        self.col_entries = tuple(
            tuple((j, store[(j, i)]) for j in self.col_support[i]) for i in range(n)
        )
        self.row_entries = tuple(
            tuple((i, store[(j, i)]) for i in self.row_support[j]) for j in range(p)
        )
        # copy layout of the duplicated dual: one slot per (row, support block)
        self.copy_order = tuple((j, i) for j in range(p) for i in self.row_support[j])
        self.copy_slot = {pair: c for c, pair in enumerate(self.copy_order)}
        self.row_offsets = np.concatenate(([0], np.cumsum(self.dual_dims))).astype(int)
        self.col_offsets = np.concatenate(([0], np.cumsum(self.primal_dims))).astype(int)
        self._flat_cache = None

    @property
    def n(self):
        return len(self.primal_dims)

    @property
    def p(self):
        return len(self.dual_dims)

    @property
    def structure(self):
        return BlockStructure(self.primal_dims, self.dual_dims)

    def apply_row(self, j, x_blocks):
        """(Mx)^(j) = sum over i in I(j) of M_{j,i} x^(i)."""
        entries = self.row_entries[j]
        if len(entries) == 1:
            i, mat = entries[0]
            return mat @ x_blocks[i]
        out = np.zeros(self.dual_dims[j])
        for i, mat in entries:
            out += mat @ x_blocks[i]
        return out

    def _flat_ops(self):
        # scipy CSR of the whole operator and its transpose, built on first
        # full apply; the per-row and per-column paths never need it
        if self._flat_cache is None:
            from scipy import sparse

            roff, coff = self.row_offsets, self.col_offsets
            rows, cols, data = [], [], []
            for (j, i), mat in self.blocks.items():
                dj, di = mat.shape
                rows.append(np.repeat(np.arange(dj) + roff[j], di))
                cols.append(np.tile(np.arange(di) + coff[i], dj))
                data.append(mat.reshape(-1))
            coo = sparse.coo_matrix(
                (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                shape=(int(roff[-1]), int(coff[-1])),
            )
            self._flat_cache = (coo.tocsr(), coo.T.tocsr())
        return self._flat_cache

    def apply_flat(self, x_flat):
        """Mx on flat (concatenated-block) vectors."""
        if self.p == 0:
            return np.zeros(0)
        fwd, _ = self._flat_ops()
        return fwd @ np.asarray(x_flat, dtype=float)

    def adjoint_apply_flat(self, y_flat):
        """M* y on flat vectors."""
        if self.p == 0:
            return np.zeros(int(self.col_offsets[-1]))
        _, adj = self._flat_ops()
        return adj @ np.asarray(y_flat, dtype=float)

    def apply(self, x):
        """Mx as a dual-space block vector."""
        xb = x.blocks if isinstance(x, BlockVector) else x
        if self.p == 0:
            return BlockVector([])
        out = self.apply_flat(np.concatenate(xb))
        roff = self.row_offsets
        return BlockVector([out[roff[j]:roff[j + 1]] for j in range(self.p)])

    def adjoint_block(self, i, y_blocks):
        """(M* y)^(i) = sum over j in J(i) of M_{j,i}^T y^(j)."""
        out = np.zeros(self.primal_dims[i])
        for j, mat in self.col_entries[i]:
            out += mat.T @ y_blocks[j]
        return out

    def adjoint_apply(self, y):
        """M* y as a primal-space block vector."""
        yb = y.blocks if isinstance(y, BlockVector) else y
        if self.p == 0:
            return BlockVector.zeros(self.primal_dims)
        out = self.adjoint_apply_flat(np.concatenate(yb))
        coff = self.col_offsets
        return BlockVector([out[coff[i]:coff[i + 1]] for i in range(self.n)])

    def to_dense(self):
        rows = sum(self.dual_dims)
        cols = sum(self.primal_dims)
        dense = np.zeros((rows, cols))
        roff = np.concatenate(([0], np.cumsum(self.dual_dims))).astype(int)
        coff = np.concatenate(([0], np.cumsum(self.primal_dims))).astype(int)
        for (j, i), mat in self.blocks.items():
            dense[roff[j]:roff[j + 1], coff[i]:coff[i + 1]] = mat
        return dense

    def frobenius_norm(self):
        return float(np.sqrt(sum(float(np.sum(m * m)) for m in self.blocks.values())))

    def __repr__(self):
        return (
            f"BlockLinearOperator({self.p} x {self.n} blocks, "
            f"{len(self.blocks)} nonzero)"
        )


class DuplicatedDual:
    """Duplicated dual variable: one copy of y^(j) per (j, i) with i in I(j).

    The key set always matches the operator's nonzero pattern; each entry
    is a vector in the row's dual block space.
    """

    __slots__ = ("op", "entries")

    def __init__(self, op, entries):
        keys = set(entries)
        expect = set(op.copy_order)
        if keys != expect:
            missing = sorted(expect - keys)
            extra = sorted(keys - expect)
            raise ValueError(
                f"duplicated dual keys must match the operator pattern; "
                f"missing {missing[:4]}, extra {extra[:4]}"
            )
        self.op = op
        self.entries = {
            k: np.asarray(v, dtype=float).reshape(-1) for k, v in entries.items()
        }
        for (j, _), v in self.entries.items():
            if v.size != op.dual_dims[j]:
                raise ValueError(f"copy {(j, _)} must have dimension {op.dual_dims[j]}")

    @classmethod
    def zeros(cls, op):
        return cls(op, {(j, i): np.zeros(op.dual_dims[j]) for (j, i) in op.copy_order})

    def copy(self):
        out = DuplicatedDual.__new__(DuplicatedDual)
        out.op = self.op
        out.entries = {k: v.copy() for k, v in self.entries.items()}
        return out

    def __getitem__(self, key):
        return self.entries[key]

    def __setitem__(self, key, value):
        if key not in self.entries:
            raise KeyError(f"copy {key} is not in the operator pattern")
        self.entries[key] = np.asarray(value, dtype=float).reshape(-1)

    def to_blockvector(self):
        """Copies laid out as a block vector in the operator's copy order."""
        return BlockVector([self.entries[pair] for pair in self.op.copy_order])

    @classmethod
    def from_blockvector(cls, op, bv):
        if len(bv.blocks) != len(op.copy_order):
            raise ValueError(
                f"expected {len(op.copy_order)} copies, got {len(bv.blocks)}"
            )
        return cls(op, dict(zip(op.copy_order, bv.blocks)))

    def norm_sq(self):
        return float(sum(v @ v for v in self.entries.values()))

    def __repr__(self):
        return f"DuplicatedDual({len(self.entries)} copies)"


class DualAveraging:
    """The averaging map S of the factorization M = D(m) S K.

    Applied to a duplicated dual (or its block-vector layout), returns
    the per-row average (1/m_j) sum over i in I(j) of the copies.
    """

    def __init__(self, op):
        self.op = op

    def __call__(self, ybold):
        op = self.op
        if isinstance(ybold, BlockVector):
            ybold = DuplicatedDual.from_blockvector(op, ybold)
        out = []
        for j in range(op.p):
            acc = np.zeros(op.dual_dims[j])
            for i in op.row_support[j]:
                acc += ybold.entries[(j, i)]
            out.append(acc / op.multiplicities[j])
        return BlockVector(out)


def build_duplication(M):
    """Factor M = D(m) S K.

    Returns ``(K, S, m)`` where K is a block operator from the primal
    space to the duplicated dual space with exactly one nonzero block per
    row (row (j, i) holds M_{j,i}), S is the copy-averaging map, and m is
    the vector of row multiplicities.
    """
    dual_dims = [M.dual_dims[j] for (j, i) in M.copy_order]
    kblocks = {}
    for c, (j, i) in enumerate(M.copy_order):
        kblocks[(c, i)] = M.blocks[(j, i)]
    K = BlockLinearOperator(M.primal_dims, dual_dims, kblocks)
    return K, DualAveraging(M), M.multiplicities.copy()


def dual_reduce_S(ybold):
    """S(ybold): per-row average of the duplicated copies."""
    return DualAveraging(ybold.op)(ybold)


def dual_expand(y, op):
    """Expand a dual vector to identical copies across the operator pattern."""
    yb = y.blocks if isinstance(y, BlockVector) else y
    if len(yb) != op.p:
        raise ValueError(f"expected {op.p} dual blocks, got {len(yb)}")
    return DuplicatedDual(
        op, {(j, i): np.asarray(yb[j], dtype=float).copy() for (j, i) in op.copy_order}
    )
