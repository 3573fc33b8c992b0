"""Operator-valued affine expressions over SDP blocks and a problem builder.

An :class:`Expr` is ``sum_k L_k(X_k) + const`` where each ``L_k`` is a sparse
linear map from the flattened block variable to a flattened ``D x D`` operator
on a :class:`~qihier.linalg.SystemLayout`. Structural operations (partial
trace, partial transpose, dephasing, multiplication by constant matrices) act
on the maps, so constraints are emitted as sparse rows without ever expanding
a dense basis of the variable space.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from ..linalg import (
    SystemLayout,
    as_layout,
    dephase_mask,
    ptrace_array,
    ptranspose_array,
)
from .problem import Block, SdpProblem, hermitian_rows

SCALAR = SystemLayout(())
_CHUNK = 256


def _kernel_matrix(kernel, d_in: int, d_out: int) -> sp.csr_matrix:
    """Sparse matrix of a linear kernel acting on ``(D, D, batch)`` arrays."""
    n = d_in * d_in
    cols = []
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        basis = np.zeros((n, stop - start))
        basis[np.arange(start, stop), np.arange(stop - start)] = 1.0
        out = kernel(basis.reshape(d_in, d_in, -1)).reshape(d_out * d_out, -1)
        cols.append(sp.csr_matrix(out))
    return sp.hstack(cols, format="csr")


@lru_cache(maxsize=64)
def _ptrace_map(dims: tuple[int, ...], drop: tuple[int, ...]) -> sp.csr_matrix:
    keep = [d for k, d in enumerate(dims) if k not in drop]
    d_out = int(np.prod(keep, dtype=np.int64)) if keep else 1
    return _kernel_matrix(lambda a: ptrace_array(a, dims, drop), int(np.prod(dims)), d_out)


@lru_cache(maxsize=64)
def _ptranspose_map(dims: tuple[int, ...], on: tuple[int, ...]) -> sp.csr_matrix:
    d = int(np.prod(dims))
    return _kernel_matrix(lambda a: ptranspose_array(a, dims, on), d, d)


class Expr:
    """Affine operator-valued expression in the block variables of a model."""

    def __init__(self, layout, terms: dict[str, sp.csr_matrix], const=None):
        self.layout = as_layout(layout)
        d = self.layout.dim
        self.terms = {k: sp.csr_matrix(v, dtype=np.complex128) for k, v in terms.items()}
        for k, v in self.terms.items():
            if v.shape[0] != d * d:
                raise ValueError(f"term for block {k!r} maps to {v.shape[0]} entries, expected {d * d}")
        self.const = np.zeros((d, d), complex) if const is None else np.asarray(const, complex).reshape(d, d)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @classmethod
    def constant(cls, matrix, layout=None) -> "Expr":
        m = np.atleast_2d(np.asarray(matrix, complex))
        return cls(layout if layout is not None else m.shape[0], {}, m)

    def _linear(self, mat: sp.spmatrix, layout, kernel) -> "Expr":
        terms = {k: mat @ v for k, v in self.terms.items()}
        return Expr(layout, terms, kernel(self.const[..., None])[..., 0])

    def partial_trace(self, labels: Iterable[str]) -> "Expr":
        dims = self.layout.dims
        drop = tuple(self.layout.indices(labels))
        return self._linear(_ptrace_map(dims, drop), self.layout.drop(labels),
                            lambda a: ptrace_array(a, dims, drop))

    def partial_transpose(self, labels: Iterable[str]) -> "Expr":
        dims = self.layout.dims
        on = tuple(self.layout.indices(labels))
        return self._linear(_ptranspose_map(dims, on), self.layout,
                            lambda a: ptranspose_array(a, dims, on))

    def dephase(self, labels: Iterable[str]) -> "Expr":
        mask = dephase_mask(self.layout.dims, self.layout.indices(labels)).ravel()
        return self._linear(sp.diags(mask), self.layout, lambda a: a * mask.reshape(a.shape[:2] + (1,)))

    def lmul(self, m) -> "Expr":
        """``M @ expr`` for a constant square ``M``."""
        m = np.asarray(m, complex)
        d = self.dim
        mat = sp.kron(sp.csr_matrix(m), sp.identity(d), format="csr")
        return Expr(self.layout, {k: mat @ v for k, v in self.terms.items()}, m @ self.const)

    def rmul(self, m) -> "Expr":
        """``expr @ M`` for a constant square ``M``."""
        m = np.asarray(m, complex)
        d = self.dim
        mat = sp.kron(sp.identity(d), sp.csr_matrix(m.T), format="csr")
        return Expr(self.layout, {k: mat @ v for k, v in self.terms.items()}, self.const @ m)

    def inner(self, m) -> "Expr":
        """Scalar ``tr(M @ expr)``."""
        m = np.asarray(m, complex)
        row = sp.csr_matrix(m.T.reshape(1, -1))
        return Expr(SCALAR, {k: row @ v for k, v in self.terms.items()}, np.trace(m @ self.const))

    def trace(self) -> "Expr":
        return self.inner(np.eye(self.dim))

    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            if other.layout.dims != self.layout.dims:
                raise ValueError(f"shape mismatch: {self.layout.dims} vs {other.layout.dims}")
            return other
        return Expr.constant(np.broadcast_to(np.asarray(other, complex), (self.dim, self.dim)), self.layout)

    def __add__(self, other) -> "Expr":
        other = self._coerce(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Expr(self.layout, terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr(self.layout, {k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other) -> "Expr":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Expr":
        return self._coerce(other) - self

    def __mul__(self, s) -> "Expr":
        if not np.isscalar(s):
            raise TypeError("expressions scale by scalars only; use lmul/rmul for matrices")
        return Expr(self.layout, {k: s * v for k, v in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    def value(self, x: dict[str, np.ndarray]) -> np.ndarray:
        out = self.const.ravel().copy()
        for k, v in self.terms.items():
            out += v @ np.asarray(x[k]).ravel()
        return out.reshape(self.dim, self.dim)


class SdpModel:
    """Incremental builder for an :class:`SdpProblem`."""

    def __init__(self):
        self.blocks: list[Block] = []
        self._rows: list[tuple[dict[str, sp.csr_matrix], np.ndarray, str]] = []
        self._objective: Expr | None = None

    def add_block(self, name: str, layout, complex: bool = True,
                  trace_bound: float | None = None) -> Expr:
        """Declare a PSD block variable and return it as an expression."""
        layout = as_layout(layout)
        if any(b.name == name for b in self.blocks):
            raise ValueError(f"block {name!r} already exists")
        blk = Block(name, layout.dim, complex, trace_bound)
        self.blocks.append(blk)
        return Expr(layout, {name: sp.identity(layout.dim ** 2, format="csr")})

    def _block(self, name: str) -> Block:
        return next(b for b in self.blocks if b.name == name)

    def _emit(self, rows: dict[str, sp.csr_matrix], rhs: np.ndarray, tag: str):
        emitted = {}
        for k, w in rows.items():
            blk = self._block(k)
            emitted[k] = hermitian_rows(w, blk.dim, blk.complex)
        nnz = np.zeros(rhs.size, dtype=bool)
        for h in emitted.values():
            nnz |= np.diff(h.indptr) > 0
        keep = nnz | (np.abs(rhs) > 1e-14)
        if not keep.all():
            emitted = {k: h[keep] for k, h in emitted.items()}
            rhs = rhs[keep]
        if rhs.size:
            self._rows.append((emitted, rhs, tag))

    def add_scalar_constraint(self, expr: Expr, rhs: float, tag: str = "scalar"):
        """``Re expr == rhs`` for a 1x1 expression."""
        if expr.dim != 1:
            raise ValueError("scalar constraint needs a 1x1 expression")
        self._emit(dict(expr.terms), np.array([rhs - expr.const.real[0, 0]]), tag)

    def equality_of_operators(self, expr: Expr, target=None, hermitian: bool = True,
                              tag: str = "eq", entries=None):
        """Constrain ``expr == target`` entrywise.

        For Hermitian-valued expressions only the upper triangle is imposed
        (real parts on and above the diagonal, imaginary parts above it).
        ``entries`` restricts the constraint to a list of ``(p, q)`` positions.
        """
        diff = expr - (0.0 if target is None else target)
        d = diff.dim
        if entries is None:
            if hermitian:
                p, q = np.triu_indices(d)
            else:
                p, q = np.indices((d, d)).reshape(2, -1)
        else:
            entries = np.asarray(list(entries), dtype=int).reshape(-1, 2)
            p, q = entries[:, 0], entries[:, 1]
        flat = p * d + q
        rhs_c = -diff.const[p, q]
        rows_re = {k: v[flat] for k, v in diff.terms.items()}
        self._emit(rows_re, rhs_c.real.copy(), tag + ".re")
        im = p != q if hermitian else np.ones(p.size, dtype=bool)
        if im.any():
            rows_im = {k: -1j * v[flat[im]] for k, v in diff.terms.items()}
            self._emit(rows_im, rhs_c.imag[im].copy(), tag + ".im")

    def diagonal_only(self, expr: Expr, tag: str = "offdiag"):
        """Force every off-diagonal entry of a Hermitian expression to zero."""
        p, q = np.triu_indices(expr.dim, 1)
        if p.size:
            self.equality_of_operators(expr, None, True, tag, entries=np.stack([p, q], axis=1))

    def partial_trace_equals(self, expr: Expr, factors: Iterable[str], target, tag: str = "ptrace"):
        """``tr_factors(expr) == target``."""
        self.equality_of_operators(expr.partial_trace(factors), target, True, tag)

    def psd_linked_block(self, expr: Expr, name: str, trace_bound: float | None = None) -> Expr:
        """New PSD block ``Y`` with ``Y == expr``, which makes ``expr`` PSD."""
        y = self.add_block(name, expr.layout, True, trace_bound)
        self.equality_of_operators(y - expr, None, True, f"link.{name}")
        return y

    def maximize(self, expr: Expr):
        if expr.dim != 1:
            raise ValueError("objective must be a scalar expression")
        self._objective = expr

    def build(self) -> SdpProblem:
        obj = {}
        c0 = 0.0
        if self._objective is not None:
            c0 = float(self._objective.const.real[0, 0])
            for k, w in self._objective.terms.items():
                blk = self._block(k)
                obj[k] = hermitian_rows(w, blk.dim, blk.complex).toarray().reshape(blk.dim, blk.dim)
        a = {}
        for blk in self.blocks:
            parts = [rows.get(blk.name, sp.csr_matrix((rhs.size, blk.dim ** 2), dtype=blk.dtype))
                     for rows, rhs, _ in self._rows]
            a[blk.name] = (sp.vstack(parts, format="csr") if parts
                           else sp.csr_matrix((0, blk.dim ** 2), dtype=blk.dtype))
        b = np.concatenate([rhs for _, rhs, _ in self._rows]) if self._rows else np.zeros(0)
        tags = tuple(t for _, rhs, t in self._rows for _ in range(rhs.size))
        return SdpProblem(tuple(self.blocks), obj, a, b, c0, tags)
