"""Small linear-operator algebra used to wire block systems together.

Systems are compositions of dense boundary-operator matrices, sparse mass /
stiffness matrices and their factorised inverses.  Everything exposes the
same ``matvec`` interface so formulations and preconditioners can be built
as expressions and solved matrix-free.

Dense applications are the unit of work reported by the benchmark (each
``DenseOp.matvec`` bumps the shared :class:`ApplyCounter`); sparse applies
and factorised solves are deliberately not counted, matching how the
per-apply cost of a formulation is audited.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import issparse
from scipy.sparse.linalg import splu

__all__ = [
    "ApplyCounter",
    "LinearOp",
    "DenseOp",
    "SparseOp",
    "FactorizedInverseOp",
    "ScaledOp",
    "SumOp",
    "ChainOp",
    "IdentityOp",
    "ZeroOp",
    "CallableOp",
    "BlockOp",
]


class ApplyCounter:
    """Counts dense operator applications within one solve."""

    __slots__ = ("dense_matvecs",)

    def __init__(self):
        self.dense_matvecs = 0

    def reset(self):
        self.dense_matvecs = 0


class LinearOp:
    """Base class: a shape-aware complex linear map."""

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.shape[1],):
            raise ValueError(
                f"operand has shape {x.shape}, operator expects ({self.shape[1]},)"
            )
        return self._apply(x)

    __call__ = matvec

    def _apply(self, x):  # pragma: no cover - abstract
        raise NotImplementedError


class DenseOp(LinearOp):
    """Dense matrix application; the counted unit of work."""

    def __init__(self, matrix: np.ndarray, counter: ApplyCounter | None = None):
        super().__init__(matrix.shape)
        self.matrix = matrix
        self.counter = counter

    def _apply(self, x):
        if self.counter is not None:
            self.counter.dense_matvecs += 1
        return self.matrix @ x


class SparseOp(LinearOp):
    """Sparse matrix application (mass, stiffness); not counted."""

    def __init__(self, matrix):
        if not issparse(matrix):
            raise TypeError("SparseOp expects a scipy sparse matrix")
        super().__init__(matrix.shape)
        self.matrix = matrix.tocsr()

    def _apply(self, x):
        return self.matrix @ x


class FactorizedInverseOp(LinearOp):
    """Action of the inverse of a sparse matrix through a cached LU."""

    def __init__(self, matrix):
        if not issparse(matrix):
            raise TypeError("FactorizedInverseOp expects a scipy sparse matrix")
        super().__init__(matrix.shape)
        self._lu = splu(matrix.tocsc().astype(complex))

    def _apply(self, x):
        return self._lu.solve(np.asarray(x, dtype=complex))


class ScaledOp(LinearOp):
    def __init__(self, alpha: complex, op: LinearOp):
        super().__init__(op.shape)
        self.alpha = complex(alpha)
        self.op = op

    def _apply(self, x):
        return self.alpha * self.op.matvec(x)


class SumOp(LinearOp):
    def __init__(self, *ops: LinearOp):
        if not ops:
            raise ValueError("SumOp needs at least one operand")
        shape = ops[0].shape
        for op in ops:
            if op.shape != shape:
                raise ValueError("SumOp operands must share a shape")
        super().__init__(shape)
        self.ops = ops

    def _apply(self, x):
        out = self.ops[0].matvec(x)
        for op in self.ops[1:]:
            out = out + op.matvec(x)
        return out


class ChainOp(LinearOp):
    """Composition in mathematical order: ChainOp(A, B)(x) = A(B(x))."""

    def __init__(self, *ops: LinearOp):
        if not ops:
            raise ValueError("ChainOp needs at least one operand")
        for left, right in zip(ops[:-1], ops[1:]):
            if left.shape[1] != right.shape[0]:
                raise ValueError("ChainOp shapes do not compose")
        super().__init__((ops[0].shape[0], ops[-1].shape[1]))
        self.ops = ops

    def _apply(self, x):
        for op in reversed(self.ops):
            x = op.matvec(x)
        return x


class IdentityOp(LinearOp):
    def __init__(self, n: int):
        super().__init__((n, n))

    def _apply(self, x):
        return x.copy()


class ZeroOp(LinearOp):
    def _apply(self, x):
        return np.zeros(self.shape[0], dtype=complex)


class CallableOp(LinearOp):
    """Escape hatch for operators realised by a closure (e.g. Pade resolvent
    sweeps); not counted as dense work."""

    def __init__(self, shape, fn):
        super().__init__(shape)
        self.fn = fn

    def _apply(self, x):
        return self.fn(x)


class BlockOp(LinearOp):
    """Dense block layout of operators; ``None`` blocks are zero.

    Every row and column must contain at least one operator so the block
    sizes are determined.
    """

    def __init__(self, blocks):
        self.blocks = [list(row) for row in blocks]
        nrows = len(self.blocks)
        ncols = len(self.blocks[0])
        for row in self.blocks:
            if len(row) != ncols:
                raise ValueError("ragged block structure")
        row_sizes = [None] * nrows
        col_sizes = [None] * ncols
        for i, row in enumerate(self.blocks):
            for j, op in enumerate(row):
                if op is None:
                    continue
                if row_sizes[i] is None:
                    row_sizes[i] = op.shape[0]
                elif row_sizes[i] != op.shape[0]:
                    raise ValueError(f"inconsistent row height in block row {i}")
                if col_sizes[j] is None:
                    col_sizes[j] = op.shape[1]
                elif col_sizes[j] != op.shape[1]:
                    raise ValueError(f"inconsistent column width in block column {j}")
        if any(s is None for s in row_sizes) or any(s is None for s in col_sizes):
            raise ValueError("every block row and column needs an operator")
        self.row_sizes = row_sizes
        self.col_sizes = col_sizes
        self.row_offsets = np.concatenate([[0], np.cumsum(row_sizes)])
        self.col_offsets = np.concatenate([[0], np.cumsum(col_sizes)])
        super().__init__((int(self.row_offsets[-1]), int(self.col_offsets[-1])))

    def _apply(self, x):
        out = np.zeros(self.shape[0], dtype=complex)
        for i, row in enumerate(self.blocks):
            sl_out = slice(self.row_offsets[i], self.row_offsets[i + 1])
            for j, op in enumerate(row):
                if op is None:
                    continue
                sl_in = slice(self.col_offsets[j], self.col_offsets[j + 1])
                out[sl_out] += op.matvec(x[sl_in])
        return out
