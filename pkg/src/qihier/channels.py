"""Quantum channels in Kraus and Choi form.

The Choi operator of a channel from ``input_layout`` to ``output_layout`` is
the unnormalised matrix

    J = sum_{ij} E(|i><j|) (x) |i><j|

with the output factors first, so ``tr_out J`` is the identity on the input
and ``E(rho) = tr_in[(1 (x) rho^T) J]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .linalg import (
    PSD_TOL,
    DensityOperator,
    HermitianOperator,
    LayoutError,
    SystemLayout,
    as_layout,
    hermiticity_error,
    ptrace_array,
    random_unitary,
)
from .verdict import MembershipVerdict

TP_TOL = 1e-8
EQUAL_TOL = 1e-8
KRAUS_RANK_TOL = 1e-9
IO_ENTRY_TOL = 1e-10


class ChannelError(ValueError):
    """Raised when a channel violates its structural invariants."""


def _frozen(m) -> np.ndarray:
    a = np.array(m, dtype=np.complex128)
    a.flags.writeable = False
    return a


def _completeness_deviation(kraus: Iterable[np.ndarray], din: int) -> float:
    s = np.zeros((din, din), dtype=np.complex128)
    for k in kraus:
        s += k.conj().T @ k
    return float(np.linalg.norm(s - np.eye(din)))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Trace-preserving map ``rho -> sum_i K_i rho K_i^dagger``."""

    input_layout: SystemLayout
    output_layout: SystemLayout
    kraus: tuple[np.ndarray, ...]
    tp_tol: float = field(default=TP_TOL, repr=False)

    def __post_init__(self):
        lin, lout = as_layout(self.input_layout), as_layout(self.output_layout)
        ks = tuple(_frozen(k) for k in self.kraus)
        if not ks:
            raise ChannelError("Kraus list is empty")
        for i, k in enumerate(ks):
            if k.shape != (lout.dim, lin.dim):
                raise ChannelError(
                    f"Kraus operator {i} has shape {k.shape}, expected {(lout.dim, lin.dim)}")
        dev = _completeness_deviation(ks, lin.dim)
        if dev > self.tp_tol:
            raise ChannelError(f"Kraus operators are not trace preserving (deviation {dev:.3e})")
        object.__setattr__(self, "input_layout", lin)
        object.__setattr__(self, "output_layout", lout)
        object.__setattr__(self, "kraus", ks)


def choi_layout(input_layout: SystemLayout, output_layout: SystemLayout) -> SystemLayout:
    """Layout of a Choi matrix: output factors (primed if needed) then input factors."""
    out = output_layout
    taken = set(input_layout.labels)
    while taken & set(out.labels):
        out = out.renamed("'")
    return out + input_layout


@dataclass(frozen=True, eq=False)
class ChoiOperator:
    """Choi matrix on ``output (x) input`` with explicit layouts.

    With ``validate=True`` (default) the matrix must be Hermitian, positive
    semidefinite and trace preserving within tolerance.
    """

    input_layout: SystemLayout
    output_layout: SystemLayout
    matrix: np.ndarray
    validate: bool = field(default=True, repr=False)
    tp_tol: float = field(default=TP_TOL, repr=False)

    def __post_init__(self):
        lin, lout = as_layout(self.input_layout), as_layout(self.output_layout)
        m = _frozen(self.matrix)
        d = lin.dim * lout.dim
        if m.shape != (d, d):
            raise ChannelError(f"Choi matrix shape {m.shape}, expected {(d, d)}")
        object.__setattr__(self, "input_layout", lin)
        object.__setattr__(self, "output_layout", lout)
        object.__setattr__(self, "matrix", m)
        if self.validate:
            err = hermiticity_error(m)
            if err > 1e-10:
                raise ChannelError(f"Choi matrix is not Hermitian (deviation {err:.3e})")
            lo = self.min_eigenvalue()
            if lo < -PSD_TOL:
                raise ChannelError(f"Choi matrix is not positive semidefinite (min eigenvalue {lo:.3e})")
            dev = self.tp_deviation()
            if dev > self.tp_tol:
                raise ChannelError(f"Choi matrix is not trace preserving (deviation {dev:.3e})")

    @property
    def layout(self) -> SystemLayout:
        return choi_layout(self.input_layout, self.output_layout)

    @property
    def operator(self) -> HermitianOperator:
        return HermitianOperator(self.layout, self.matrix)

    def min_eigenvalue(self) -> float:
        m = self.matrix
        return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])

    def tp_deviation(self) -> float:
        dims = (self.output_layout.dim, self.input_layout.dim)
        red = ptrace_array(self.matrix, dims, [0])
        return float(np.max(np.abs(red - np.eye(dims[1])))) if red.size else 0.0

    def tensor(self) -> np.ndarray:
        """Matrix reshaped to ``J[o, i, o', i']``."""
        do, di = self.output_layout.dim, self.input_layout.dim
        return self.matrix.reshape(do, di, do, di)


@dataclass(frozen=True, eq=False)
class Instrument:
    """Quantum instrument: one Kraus list per outcome, jointly trace preserving."""

    input_layout: SystemLayout
    output_layout: SystemLayout
    branches: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        lin, lout = as_layout(self.input_layout), as_layout(self.output_layout)
        branches = tuple(tuple(_frozen(k) for k in b) for b in self.branches)
        if not branches or any(not b for b in branches):
            raise ChannelError("instrument needs at least one non-empty branch")
        for b in branches:
            for k in b:
                if k.shape != (lout.dim, lin.dim):
                    raise ChannelError(f"instrument Kraus shape {k.shape}, expected {(lout.dim, lin.dim)}")
        dev = _completeness_deviation([k for b in branches for k in b], lin.dim)
        if dev > TP_TOL:
            raise ChannelError(f"instrument is not trace preserving (deviation {dev:.3e})")
        object.__setattr__(self, "input_layout", lin)
        object.__setattr__(self, "output_layout", lout)
        object.__setattr__(self, "branches", branches)


# ---------------------------------------------------------------------------
# conversions and application
# ---------------------------------------------------------------------------


def choi_from_kraus(ch: KrausChannel) -> ChoiOperator:
    vecs = np.stack([k.reshape(-1) for k in ch.kraus], axis=1)
    return ChoiOperator(ch.input_layout, ch.output_layout, vecs @ vecs.conj().T)


def kraus_from_choi(j: ChoiOperator) -> KrausChannel:
    """Canonical Kraus operators from the eigendecomposition of the Choi matrix."""
    w, v = np.linalg.eigh(0.5 * (j.matrix + j.matrix.conj().T))
    if w[0] < -PSD_TOL:
        raise ChannelError(f"Choi matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    do, di = j.output_layout.dim, j.input_layout.dim
    order = np.argsort(w)[::-1]
    ks = [np.sqrt(w[k]) * v[:, k].reshape(do, di) for k in order if w[k] > KRAUS_RANK_TOL]
    return KrausChannel(j.input_layout, j.output_layout, tuple(ks), tp_tol=max(TP_TOL, j.tp_tol))


def as_choi(ch) -> ChoiOperator:
    if isinstance(ch, ChoiOperator):
        return ch
    if isinstance(ch, KrausChannel):
        return choi_from_kraus(ch)
    raise TypeError(f"expected KrausChannel or ChoiOperator, got {type(ch).__name__}")


def apply_matrix(ch, m: np.ndarray) -> np.ndarray:
    """Apply a channel to an arbitrary (not necessarily Hermitian) input matrix."""
    if isinstance(ch, KrausChannel):
        out = np.zeros((ch.output_layout.dim,) * 2, dtype=np.complex128)
        for k in ch.kraus:
            out += k @ m @ k.conj().T
        return out
    t = as_choi(ch).tensor()
    return np.einsum("aibj,ij->ab", t, m)


def apply(ch, rho: HermitianOperator) -> HermitianOperator:
    """Image of ``rho`` under the channel; density operators map to density operators."""
    if rho.layout != ch.input_layout:
        raise LayoutError(
            f"state layout {rho.layout.labels}{rho.layout.dims} does not match channel input "
            f"{ch.input_layout.labels}{ch.input_layout.dims}")
    out = apply_matrix(ch, rho.matrix)
    out = 0.5 * (out + out.conj().T)
    if isinstance(rho, DensityOperator):
        return DensityOperator(ch.output_layout, out, trace_tol=max(rho.trace_tol, 10 * ch.tp_tol))
    return HermitianOperator(ch.output_layout, out)


def compose(f, g) -> ChoiOperator:
    """Choi operator of ``f o g`` (apply ``g`` first)."""
    jf, jg = as_choi(f), as_choi(g)
    if jg.output_layout != jf.input_layout:
        raise LayoutError(
            f"cannot compose: output {jg.output_layout.labels} of inner channel does not match "
            f"input {jf.input_layout.labels} of outer channel")
    tf, tg = jf.tensor(), jg.tensor()
    t = np.einsum("ambn,minj->aibj", tf, tg, optimize=True)
    do, di = jf.output_layout.dim, jg.input_layout.dim
    m = t.reshape(do * di, do * di)
    return ChoiOperator(jg.input_layout, jf.output_layout, 0.5 * (m + m.conj().T),
                        tp_tol=max(jf.tp_tol, jg.tp_tol) * 2)


def channels_equal(a, b, tol: float = EQUAL_TOL) -> bool:
    """True iff the Choi matrices agree entrywise within ``tol``."""
    ja, jb = as_choi(a), as_choi(b)
    if ja.input_layout != jb.input_layout or ja.output_layout != jb.output_layout:
        raise LayoutError("channels act between different layouts")
    return bool(np.max(np.abs(ja.matrix - jb.matrix)) <= tol)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _ab_layout(da: int, db: int) -> SystemLayout:
    return SystemLayout([("A", da, "A"), ("B", db, "B")])


def identity_channel(layout) -> KrausChannel:
    layout = as_layout(layout)
    return KrausChannel(layout, layout, (np.eye(layout.dim),))


def unitary_channel(u, layout) -> KrausChannel:
    layout = as_layout(layout)
    return KrausChannel(layout, layout, (np.asarray(u),))


def dephasing_channel(layout, on: Iterable[str] | None = None) -> KrausChannel:
    """Completely dephasing channel on the factors ``on`` (default: all)."""
    layout = as_layout(layout)
    on = set(layout.labels if on is None else layout.keep(on).labels)
    projectors = [np.ones(1)]
    for f in layout.factors:
        nxt = []
        for p in projectors:
            if f.label in on:
                nxt.extend(np.kron(p, np.eye(f.dim)[i]) for i in range(f.dim))
            else:
                nxt.append(np.kron(p, np.ones(f.dim)))
        projectors = nxt
    return KrausChannel(layout, layout, tuple(np.diag(p) for p in projectors))


def replacement_channel(state: DensityOperator, input_layout) -> KrausChannel:
    """Channel discarding its input and preparing ``state``."""
    lin = as_layout(input_layout)
    w, v = np.linalg.eigh(state.matrix)
    ks = []
    for k in range(len(w)):
        if w[k] > KRAUS_RANK_TOL:
            for i in range(lin.dim):
                e = np.zeros(lin.dim)
                e[i] = 1.0
                ks.append(np.sqrt(w[k]) * np.outer(v[:, k], e))
    return KrausChannel(lin, state.layout, tuple(ks))


def product_channel(a: KrausChannel, b: KrausChannel) -> KrausChannel:
    """Independent local channels ``a (x) b``."""
    ks = tuple(np.kron(x, y) for x in a.kraus for y in b.kraus)
    return KrausChannel(a.input_layout + b.input_layout, a.output_layout + b.output_layout, ks)


def trace_out_channel(layout, keep: Iterable[str]) -> KrausChannel:
    """Partial trace as a channel: discard every factor not in ``keep``."""
    layout = as_layout(layout)
    kept = layout.keep(keep)
    ks = [np.ones((1, 1))]
    for f in layout.factors:
        if f.label in kept.labels:
            ks = [np.kron(k, np.eye(f.dim)) for k in ks]
        else:
            ks = [np.kron(k, np.eye(f.dim)[i][None, :]) for k in ks for i in range(f.dim)]
    return KrausChannel(layout, kept, tuple(ks))


def make_swap(d: int) -> KrausChannel:
    """Unitary exchanging the contents of two ``d``-dimensional factors A and B."""
    if d < 2:
        raise ValueError("swap needs d >= 2")
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[j * d + i, i * d + j] = 1.0
    layout = _ab_layout(d, d)
    return KrausChannel(layout, layout, (s,))


def make_sep_from_product_kraus(pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                                input_layout=None, output_layout=None) -> KrausChannel:
    """Separable channel with Kraus operators ``M_i (x) K_i``."""
    if not pairs:
        raise ChannelError("no Kraus pairs given")
    m0, k0 = np.asarray(pairs[0][0]), np.asarray(pairs[0][1])
    lin = as_layout(input_layout) if input_layout is not None else _ab_layout(m0.shape[1], k0.shape[1])
    lout = as_layout(output_layout) if output_layout is not None else SystemLayout(
        [("A", m0.shape[0], "A"), ("B", k0.shape[0], "B")])
    ks = [np.kron(np.asarray(m), np.asarray(k)) for m, k in pairs]
    if any(k.shape != (lout.dim, lin.dim) for k in ks):
        raise ChannelError("product Kraus operators have inconsistent shapes")
    dev = _completeness_deviation(ks, lin.dim)
    if dev > TP_TOL:
        raise ChannelError(f"product Kraus operators are not complete: ||sum K^dag K - I|| = {dev:.3e}")
    return KrausChannel(lin, lout, tuple(ks))


def is_io_kraus(ch: KrausChannel, tol: float = IO_ENTRY_TOL) -> MembershipVerdict:
    """Check the incoherent Kraus form: at most one nonzero entry per column.

    The verdict concerns the given decomposition only; another Kraus
    decomposition of the same channel may or may not have this form.
    """
    for i, k in enumerate(ch.kraus):
        nonzero = np.abs(k) > tol
        counts = nonzero.sum(axis=0)
        bad = np.flatnonzero(counts > 1)
        if bad.size:
            col = int(bad[0])
            return MembershipVerdict("IO", False, {"kraus_index": i, "column": col,
                                                   "nonzeros": int(counts[col])}, tol)
    return MembershipVerdict("IO", True, None, tol)


def make_one_way_lqicc(instrument: Instrument, conditionals: Sequence[KrausChannel]) -> KrausChannel:
    """A measures with ``instrument``; B applies the incoherent channel matching the outcome."""
    if len(conditionals) != len(instrument.branches):
        raise ChannelError(
            f"{len(instrument.branches)} instrument branches but {len(conditionals)} conditional channels")
    lb_in, lb_out = conditionals[0].input_layout, conditionals[0].output_layout
    for i, c in enumerate(conditionals):
        if c.input_layout != lb_in or c.output_layout != lb_out:
            raise LayoutError(f"conditional channel {i} has a different layout")
        v = is_io_kraus(c)
        if not v:
            raise ChannelError(f"conditional channel {i} is not in incoherent Kraus form: {v.witness}")
    ks = tuple(np.kron(m, k) for branch, cond in zip(instrument.branches, conditionals)
               for m in branch for k in cond.kraus)
    return KrausChannel(instrument.input_layout + lb_in, instrument.output_layout + lb_out, ks)


# ---------------------------------------------------------------------------
# named channels
# ---------------------------------------------------------------------------

_PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
_MINUS = np.array([1.0, -1.0]) / np.sqrt(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.diag([1.0, -1.0])
_P0 = np.diag([1.0, 0.0])
_P1 = np.diag([0.0, 1.0])


def nonlocal_incoherent_channel() -> KrausChannel:
    """Two-qubit incoherent channel that entangles ``|+>|0>`` into a Bell state.

    Kraus operators ``|0><0| (x) |0><0| + |1><1| (x) |1><0|`` and
    ``|0><0| (x) |0><1| + |1><1| (x) |1><1|``.
    """
    k0 = np.kron(_P0, _P0) + np.kron(_P1, np.outer([0, 1], [1, 0]))
    k1 = np.kron(_P0, np.outer([1, 0], [0, 1])) + np.kron(_P1, _P1)
    return KrausChannel(_ab_layout(2, 2), _ab_layout(2, 2), (k0, k1))


def plus_preparation_channel() -> KrausChannel:
    """Discard A and prepare it in ``|+>``; B untouched. Sends ``|0>|0>`` to ``|+>|0>``."""
    ks = tuple(np.kron(np.outer(_PLUS, np.eye(2)[i]), np.eye(2)) for i in range(2))
    return KrausChannel(_ab_layout(2, 2), _ab_layout(2, 2), ks)


def measure_and_correct_channel() -> KrausChannel:
    """A measures in the ``|+>, |->`` basis, B applies 1 or Z on the outcome."""
    m0 = np.kron(np.outer(_PLUS, _PLUS), np.eye(2))
    m1 = np.kron(np.outer(_MINUS, _MINUS), _Z)
    return KrausChannel(_ab_layout(2, 2), _ab_layout(2, 2), (m0, m1))


def measure_and_correct_channel_io_form() -> KrausChannel:
    """The same channel as :func:`measure_and_correct_channel` in incoherent Kraus form."""
    k0 = (np.kron(np.eye(2), _P0) + np.kron(_X, _P1)) / np.sqrt(2)
    k1 = (np.kron(_X, _P0) + np.kron(np.eye(2), _P1)) / np.sqrt(2)
    return KrausChannel(_ab_layout(2, 2), _ab_layout(2, 2), (k0, k1))


def random_channel(input_layout, output_layout, n_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Random channel from a Haar isometry into ``output (x) environment``."""
    lin, lout = as_layout(input_layout), as_layout(output_layout)
    din, dout = lin.dim, lout.dim
    if dout * n_kraus < din:
        raise ValueError("not enough Kraus operators for an isometry")
    u = random_unitary(dout * n_kraus, rng)[:, :din]
    ks = tuple(u[k * dout:(k + 1) * dout, :] for k in range(n_kraus))
    return KrausChannel(lin, lout, ks)


def remix_kraus(ch: KrausChannel, u: np.ndarray) -> KrausChannel:
    """Kraus operators ``K'_j = sum_i u[i, j] K_i`` for a unitary ``u``."""
    ks = tuple(sum(u[i, j] * ch.kraus[i] for i in range(len(ch.kraus))) for j in range(u.shape[1]))
    return KrausChannel(ch.input_layout, ch.output_layout, ks)
