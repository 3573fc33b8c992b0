"""Dense block semidefinite programs in standard primal form.

    maximize    sum_k <C_k, X_k> + c0
    subject to  sum_k <A_ik, X_k> = b_i      (i = 1..m)
                X_k >= 0

``<A, X> = Re tr(A X)``. A block is either real symmetric or complex
Hermitian; coefficient matrices are stored Hermitian (their Hermitian part is
taken on input, which leaves every functional unchanged on Hermitian ``X``).
Constraint rows are kept as sparse ``(m, n*n)`` matrices of row-major
flattened coefficient matrices, one per block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Block:
    name: str
    dim: int
    complex: bool = True
    trace_bound: float | None = None

    @property
    def dtype(self):
        return np.complex128 if self.complex else np.float64

    @property
    def real_dim(self) -> int:
        """Dimension of the block as a real vector space."""
        return self.dim * self.dim if self.complex else self.dim * (self.dim + 1) // 2


def hermitian_part(m: np.ndarray, complex_block: bool = True) -> np.ndarray:
    m = np.asarray(m)
    h = 0.5 * (m + m.conj().T)
    return h if complex_block else np.real(h)


def transpose_permutation(n: int) -> np.ndarray:
    """Index map sending row-major ``(u, v)`` to ``(v, u)``."""
    return np.arange(n * n).reshape(n, n).T.ravel()


def hermitian_rows(w: sp.spmatrix, n: int, complex_block: bool = True) -> sp.csr_matrix:
    """Coefficient rows for the real functionals ``Re sum_uv w[u,v] X[u,v]``.

    Row ``w`` defines ``f(X) = sum w_uv X_uv = tr(W^T X)``; the returned row is the
    flattened Hermitian part of ``W^T``.
    """
    w = sp.csr_matrix(w, dtype=np.complex128)
    perm = transpose_permutation(n)
    h = (w[:, perm] + w.conj()) * 0.5
    if not complex_block:
        h = sp.csr_matrix(h.real)
    h = sp.csr_matrix(h)
    h.eliminate_zeros()
    return h


@dataclass(frozen=True, eq=False)
class SdpProblem:
    blocks: tuple[Block, ...]
    objective: Mapping[str, np.ndarray]
    a: Mapping[str, sp.csr_matrix]
    b: np.ndarray
    objective_constant: float = 0.0
    tags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        names = [blk.name for blk in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate block names {names}")
        b = np.asarray(self.b, dtype=float).ravel()
        m = b.size
        obj, rows = {}, {}
        for blk in self.blocks:
            n = blk.dim
            if n < 1:
                raise ValueError(f"block {blk.name!r} has dimension {n}")
            c = self.objective.get(blk.name)
            c = np.zeros((n, n), dtype=blk.dtype) if c is None else np.asarray(c)
            if c.shape != (n, n):
                raise ValueError(f"objective for block {blk.name!r} has shape {c.shape}, expected {(n, n)}")
            c = hermitian_part(c, blk.complex).astype(blk.dtype)
            c.flags.writeable = False
            obj[blk.name] = c
            a = self.a.get(blk.name)
            a = sp.csr_matrix((m, n * n), dtype=blk.dtype) if a is None else sp.csr_matrix(a)
            if a.shape != (m, n * n):
                raise ValueError(f"constraint matrix for block {blk.name!r} has shape {a.shape}, "
                                 f"expected {(m, n * n)}")
            if not blk.complex and np.iscomplexobj(a.data) and np.any(a.data.imag != 0):
                raise ValueError(f"real block {blk.name!r} has complex constraint coefficients")
            rows[blk.name] = sp.csr_matrix(a, dtype=blk.dtype)
        unknown = (set(self.objective) | set(self.a)) - set(names)
        if unknown:
            raise ValueError(f"coefficients given for unknown blocks {sorted(unknown)}")
        tags = tuple(self.tags) if self.tags else ("",) * m
        if len(tags) != m:
            raise ValueError("one tag per constraint expected")
        b.flags.writeable = False
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "a", rows)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "tags", tags)

    @property
    def num_constraints(self) -> int:
        return int(self.b.size)

    def block(self, name: str) -> Block:
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise KeyError(name)

    def constraint_matrix(self, i: int, name: str) -> np.ndarray:
        n = self.block(name).dim
        return self.a[name].getrow(i).toarray().reshape(n, n)

    # -- linear maps ---------------------------------------------------------

    def apply_constraints(self, x: Mapping[str, np.ndarray]) -> np.ndarray:
        """``A(X)``: the vector of constraint functionals."""
        out = np.zeros(self.num_constraints)
        for blk in self.blocks:
            out += np.real(self.a[blk.name].conj() @ np.asarray(x[blk.name]).ravel())
        return out

    def adjoint(self, y: np.ndarray) -> dict[str, np.ndarray]:
        """``A^T(y) = sum_i y_i A_i`` per block."""
        out = {}
        for blk in self.blocks:
            m = (self.a[blk.name].T @ np.asarray(y, dtype=float)).reshape(blk.dim, blk.dim)
            out[blk.name] = hermitian_part(m, blk.complex)
        return out

    def objective_value(self, x: Mapping[str, np.ndarray]) -> float:
        return float(self.objective_constant + sum(
            np.real(np.vdot(self.objective[blk.name], x[blk.name])) for blk in self.blocks))

    def dual_objective_value(self, y: np.ndarray) -> float:
        return float(self.objective_constant + self.b @ np.asarray(y, dtype=float))

    @classmethod
    def from_dense(cls, blocks: Sequence[Block], objective: Mapping[str, np.ndarray],
                   constraints: Sequence[tuple[Mapping[str, np.ndarray], float]],
                   objective_constant: float = 0.0) -> "SdpProblem":
        """Build from per-constraint dense coefficient matrices."""
        m = len(constraints)
        a = {}
        for blk in blocks:
            rows = []
            for coeffs, _ in constraints:
                c = coeffs.get(blk.name)
                if c is None:
                    rows.append(sp.csr_matrix((1, blk.dim ** 2), dtype=blk.dtype))
                else:
                    c = np.asarray(c)
                    if c.shape != (blk.dim, blk.dim):
                        raise ValueError(f"constraint coefficient for {blk.name!r} has shape {c.shape}")
                    rows.append(sp.csr_matrix(hermitian_part(c, blk.complex).reshape(1, -1)))
            a[blk.name] = sp.vstack(rows, format="csr") if m else sp.csr_matrix((0, blk.dim ** 2))
        b = np.array([rhs for _, rhs in constraints], dtype=float)
        return cls(tuple(blocks), dict(objective), a, b, objective_constant)


def svec_matrix(a: sp.csr_matrix, blk: Block) -> np.ndarray:
    """Rows of ``a`` in an orthonormal real coordinate system of the block.

    Coordinates are ``X_uu`` and ``sqrt(2) Re X_uv``, ``sqrt(2) Im X_uv`` for
    ``u < v`` (the latter only for complex blocks), so Euclidean geometry of the
    rows matches the trace inner product.
    """
    n = blk.dim
    dense = a.toarray().reshape(-1, n, n)
    iu, ju = np.triu_indices(n, 1)
    parts = [np.real(dense[:, np.arange(n), np.arange(n)]),
             np.sqrt(2.0) * np.real(dense[:, iu, ju])]
    if blk.complex:
        parts.append(np.sqrt(2.0) * np.imag(dense[:, iu, ju]))
    return np.concatenate(parts, axis=1)
