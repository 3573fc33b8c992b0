"""Free-state predicates and channel-class membership tests.

Factors are assigned to parties through their ``side`` tag. A state is QI
(quantum-incoherent) when it is unchanged by dephasing every B-side factor,
incoherent when it is unchanged by dephasing every factor. Channel tests scan a
finite probe set in a fixed lexicographic order and report the first failure.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channels import KrausChannel, apply, as_choi, is_io_kraus
from .linalg import (
    PSD_TOL,
    DensityOperator,
    HermitianOperator,
    LayoutError,
    SystemLayout,
    dephase_array,
    ket,
    permute_array,
    ptranspose_array,
    random_density,
    trace_norm,
)
from .verdict import MembershipVerdict

DEFAULT_TOL = 1e-7


def basis_state(a: int, b: int, d: int, label: str = "A") -> DensityOperator:
    """Probe state ``rho_{a,b}`` on a ``d``-dimensional system.

    ``|a><a|`` for ``a == b``; ``|+_{ab}>`` with real phase for ``a < b``; with
    phase ``i`` on ``|b>`` for ``a > b``.
    """
    if not (0 <= a < d and 0 <= b < d):
        raise IndexError(f"basis state indices ({a}, {b}) out of range for dimension {d}")
    if a == b:
        v = ket(a, d)
    elif a < b:
        v = (ket(a, d) + ket(b, d)) / np.sqrt(2)
    else:
        v = (ket(a, d) + 1j * ket(b, d)) / np.sqrt(2)
    return DensityOperator(SystemLayout([(label, d, "A")]), np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class ProbeBasis:
    """The ``d**2`` probe states ``rho_{a,b}`` and their change-of-basis matrix."""

    d: int
    states: tuple[tuple[int, int, DensityOperator], ...]
    change_of_basis: np.ndarray

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.change_of_basis))

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        """Expansion coefficients of an arbitrary ``d x d`` matrix in the probe basis."""
        return np.linalg.solve(self.change_of_basis, np.asarray(x, dtype=complex).reshape(-1))


def probe_basis(d: int) -> ProbeBasis:
    states = tuple((a, b, basis_state(a, b, d)) for a in range(d) for b in range(d))
    cob = np.stack([s.matrix.reshape(-1) for _, _, s in states], axis=1)
    return ProbeBasis(d, states, cob)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def _dephasing_deviation(m: np.ndarray, layout: SystemLayout, labels) -> float:
    idx = layout.indices(labels)
    return trace_norm(m - dephase_array(m, layout.dims, idx))


def is_qi_state(rho: HermitianOperator, b_factors=None, tol: float = DEFAULT_TOL) -> bool:
    """QI test: ``||(id (x) Delta_B)(rho) - rho||_1 <= tol``.

    ``b_factors`` defaults to every B-side factor of the layout.
    """
    labels = rho.layout.side_labels("B") if b_factors is None else b_factors
    return _dephasing_deviation(rho.matrix, rho.layout, labels) <= tol


def is_incoherent_state(rho: HermitianOperator, factors=None, tol: float = DEFAULT_TOL) -> bool:
    labels = rho.layout.labels if factors is None else factors
    return _dephasing_deviation(rho.matrix, rho.layout, labels) <= tol


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------


def _require_split(layout: SystemLayout, what: str):
    missing = [f.label for f in layout.factors if f.side is None]
    if missing:
        raise LayoutError(f"{what} factors {missing} carry no A/B side tag")


def _side_order(layout: SystemLayout) -> list[int]:
    return [k for k, f in enumerate(layout.factors) if f.side == "A"] + \
           [k for k, f in enumerate(layout.factors) if f.side == "B"]


def _side_index_map(layout: SystemLayout) -> np.ndarray:
    """``idx[a, j]``: layout-order index of A-part ``a`` and B-part ``j``."""
    grid = np.arange(layout.dim).reshape(layout.dims).transpose(_side_order(layout))
    return grid.reshape(layout.side_dim("A"), layout.side_dim("B"))


def _from_side_order(layout: SystemLayout, m: np.ndarray) -> np.ndarray:
    """Reorder a matrix given as (all A factors) (x) (all B factors) into layout order."""
    order = _side_order(layout)
    side_dims = [layout.dims[k] for k in order]
    return permute_array(m, side_dims, list(np.argsort(order)))


def probe_input(layout: SystemLayout, a: int, b: int, j: int) -> DensityOperator:
    """``rho_{a,b}`` on the A-side factors times ``|j><j|`` on the B-side factors."""
    da, db = layout.side_dim("A"), layout.side_dim("B")
    m = np.kron(basis_state(a, b, da).matrix, np.outer(ket(j, db), ket(j, db)))
    return DensityOperator(layout, _from_side_order(layout, m))


def random_qi_state(layout: SystemLayout, rng: np.random.Generator) -> DensityOperator:
    """Random ``sum_j p_j rho_j (x) |j><j|`` with ``j`` running over the B-side basis."""
    _require_split(layout, "state")
    da, db = layout.side_dim("A"), layout.side_dim("B")
    p = rng.dirichlet(np.ones(db))
    m = np.zeros((layout.dim, layout.dim), complex)
    for j in range(db):
        rho = random_density(da, rng).matrix
        m += p[j] * np.kron(rho, np.outer(ket(j, db), ket(j, db)))
    return DensityOperator(layout, _from_side_order(layout, m))


def is_mio(ch, tol: float = DEFAULT_TOL) -> MembershipVerdict:
    """Maximally incoherent: every product basis state maps to an incoherent state.

    Basis states are the extreme points of the incoherent set, so checking them
    suffices by convexity.
    """
    j = as_choi(ch)
    t = j.tensor()
    lout = j.output_layout
    dims_in = j.input_layout.dims
    for x, index in enumerate(itertools.product(*[range(d) for d in dims_in])):
        out = t[:, x, :, x]
        dev = _dephasing_deviation(out, lout, lout.labels)
        if dev > tol:
            return MembershipVerdict("MIO", False, {"input": list(index), "deviation": dev}, tol)
    return MembershipVerdict("MIO", True, None, tol)


def is_ppt(ch, tol: float = PSD_TOL) -> MembershipVerdict:
    """PPT: Choi matrix stays PSD after transposing every A-side factor (input and output)."""
    j = as_choi(ch)
    _require_split(j.input_layout, "input")
    _require_split(j.output_layout, "output")
    if not j.input_layout.side_labels("A"):
        raise LayoutError("PPT test needs at least one A-side input factor")
    layout = j.layout
    on = [k for k, f in enumerate(layout.factors) if f.side == "A"]
    pt = ptranspose_array(j.matrix, layout.dims, on)
    lo = float(np.linalg.eigvalsh(pt)[0])
    if lo < -tol:
        return MembershipVerdict("PPT", False, {"min_eigenvalue": lo}, tol, {"min_eigenvalue": lo})
    return MembershipVerdict("PPT", True, None, tol, {"min_eigenvalue": lo})


def is_qip(ch, tol: float = DEFAULT_TOL) -> MembershipVerdict:
    """QI-preserving, decided on the finite probe set ``rho_{a,b} (x) |j><j|``."""
    _require_split(ch.input_layout, "input")
    _require_split(ch.output_layout, "output")
    lin, lout = ch.input_layout, ch.output_layout
    da, db = lin.side_dim("A"), lin.side_dim("B")
    b_out = lout.side_labels("B")
    for a, b, jj in itertools.product(range(da), range(da), range(db)):
        out = apply(ch, probe_input(lin, a, b, jj))
        dev = _dephasing_deviation(out.matrix, lout, b_out)
        if dev > tol:
            return MembershipVerdict("QIP", False, {"a": a, "b": b, "j": jj, "deviation": dev}, tol)
    return MembershipVerdict("QIP", True, None, tol)


def cqip_probe_output(ch, j: int) -> HermitianOperator:
    """``(id_{A''} (x) E)(Phi_{D_A} (x) |j><j|)`` on ``A'' (x) output``."""
    choi = as_choi(ch)
    t = choi.tensor()
    lin, lout = choi.input_layout, choi.output_layout
    da = lin.side_dim("A")
    idx = _side_index_map(lin)
    cols = idx[:, j]
    # block[a, o, b, o'] = E(|a><b| (x) |j><j|)[o, o'] / D_A
    block = t[:, cols, :, :][:, :, :, cols].transpose(1, 0, 3, 2) / da
    dout = lout.dim
    m = block.reshape(da * dout, da * dout)
    anc = SystemLayout([("A''", da, "A")])
    layout = anc + lout
    return HermitianOperator(layout, 0.5 * (m + m.conj().T))


def is_cqip(ch, tol: float = DEFAULT_TOL) -> MembershipVerdict:
    """Completely QI-preserving, decided on ``D_B`` maximally entangled probes."""
    _require_split(ch.input_layout, "input")
    _require_split(ch.output_layout, "output")
    db = ch.input_layout.side_dim("B")
    for jj in range(db):
        out = cqip_probe_output(ch, jj)
        dev = _dephasing_deviation(out.matrix, out.layout, out.layout.side_labels("B"))
        if dev > tol:
            return MembershipVerdict("CQIP", False, {"j": jj, "deviation": dev}, tol)
    return MembershipVerdict("CQIP", True, None, tol)


def is_io(ch, tol: float = 1e-10) -> MembershipVerdict:
    if not isinstance(ch, KrausChannel):
        raise TypeError("the incoherent-form test needs an explicit Kraus decomposition")
    return is_io_kraus(ch, tol)


CLASS_TESTS = {
    "io": is_io,
    "mio": is_mio,
    "ppt": is_ppt,
    "qip": is_qip,
    "cqip": is_cqip,
}
