"""Assisted coherence distillation: state family, SDP drivers and the hierarchy demo.

The distillation channel maps the joint system ``A (x) B`` to an output ``B'``
held by B. Its Choi matrix ``J`` lives on ``B' (x) A (x) B``. The class
constraints are linear in ``J``:

* QIP: every probe ``rho_ab (x) |j><j|`` maps to a diagonal output on ``B'``
  (the output has no A part, so QI reduces to incoherent);
* MIO: every product basis state maps to a diagonal output;
* PPT: ``J`` stays PSD after transposing the A factor.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import channels as chn
from .classes import DEFAULT_TOL, is_mio, is_ppt, is_qip, probe_input
from .linalg import (
    DensityOperator,
    SystemLayout,
    fidelity_squared,
    partial_trace,
    pure_state,
    shannon_entropy,
)
from .sdp import SdpModel, SolverOptions, solve, verify_certificate
from .sdp.certificate import CertificateReport
from .sdp.solver import OPTIMAL, SdpSolution

OP_CLASSES = ("qip", "qip-ppt", "mio", "mio-ppt")
OBJECTIVES = ("fidelity", "trace")
OMEGA = 0.5 * (-1 + 1j * math.sqrt(3))


class SolverFailure(RuntimeError):
    """A distillation SDP did not reach an optimal, certified solution."""

    def __init__(self, message: str, solution: SdpSolution | None = None):
        super().__init__(message)
        self.solution = solution


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def example_vectors(t: float) -> tuple[np.ndarray, np.ndarray]:
    """The pair ``|u>`` and ``|v(t)>`` on B."""
    u = np.array([OMEGA, OMEGA ** 2, 1, 0]) / math.sqrt(3)
    v = np.array([t, t, t, math.sqrt(1 - 3 * t * t)], dtype=complex)
    return u, v


def build_example_state(t: float) -> DensityOperator:
    """Pure state ``sqrt(1-q)|0>|u> + sqrt(q)|1>|v(t)>`` on ``A(2) (x) B(4)``, ``q = 1/(4-12t^2)``."""
    if not (0.0 < t < 0.5):
        raise ValueError("t out of (0, 0.5)")
    u, v = example_vectors(t)
    q = 1.0 / (4.0 - 12.0 * t * t)
    psi = math.sqrt(1 - q) * np.kron([1, 0], u) + math.sqrt(q) * np.kron([0, 1], v)
    return pure_state(psi, SystemLayout([("A", 2, "A"), ("B", 4, "B")]))


def maximally_coherent(m: int, label: str = "B'") -> DensityOperator:
    """``|Phi_M><Phi_M|`` with ``|Phi_M> = sum_j |j> / sqrt(M)``."""
    if m < 1:
        raise ValueError("rank must be at least 1")
    return pure_state(np.ones(m) / math.sqrt(m), SystemLayout([(label, m, "B")]))


def b_marginal(state: DensityOperator) -> DensityOperator:
    return partial_trace(state, state.layout.side_labels("A"))


def _require_pure(state: DensityOperator, tol: float = 1e-9):
    purity = float(np.real(np.trace(state.matrix @ state.matrix)))
    if abs(purity - 1.0) > tol:
        raise ValueError(f"state is not pure (purity {purity:.12g})")


def asymptotic_rate(state: DensityOperator) -> float:
    """``H(Delta(psi^B))`` in bits for a pure bipartite state."""
    _require_pure(state)
    rb = b_marginal(state)
    return shannon_entropy(np.real(np.diag(rb.matrix)))


def qi_relative_entropy_closed_form(state: DensityOperator, tol: float = 1e-9) -> float:
    """Minimal relative entropy to the QI states, in bits, where a closed form is known.

    Pure bipartite states give ``H(Delta(psi^B))``; a maximally coherent state
    held by B alone gives ``log2 M``. Other inputs raise ``ValueError``.
    """
    layout = state.layout
    if not layout.side_labels("A") and layout.side_labels("B"):
        d = layout.dim
        target = np.full((d, d), 1.0 / d)
        if np.max(np.abs(state.matrix - target)) <= tol:
            return math.log2(d)
        raise ValueError("only maximally coherent states are supported on B alone")
    if layout.side_labels("A") and layout.side_labels("B"):
        _require_pure(state, tol)
        return asymptotic_rate(state)
    raise ValueError("state needs an A/B bipartition")


# ---------------------------------------------------------------------------
# SDP drivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DistillationProblem:
    """One-shot assisted distillation of ``Phi_M`` from ``input_state``.

    Args:
        input_state: pure (or mixed) state on A-side and B-side factors.
        target_rank: the coherence rank ``M`` of the target.
        op_class: one of ``qip``, ``qip-ppt``, ``mio``, ``mio-ppt``.
        objective: ``fidelity`` (maximize) or ``trace`` (minimize trace distance).
        output_dim: dimension of ``B'``; defaults to ``target_rank``.
    """

    input_state: DensityOperator
    target_rank: int
    op_class: str = "qip"
    objective: str = "fidelity"
    output_dim: int | None = None

    def __post_init__(self):
        if self.op_class not in OP_CLASSES:
            raise ValueError(f"unknown class {self.op_class!r}; choose from {OP_CLASSES}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; choose from {OBJECTIVES}")
        if self.target_rank < 1:
            raise ValueError("target rank must be at least 1")
        out = self.target_rank if self.output_dim is None else int(self.output_dim)
        if out < self.target_rank:
            raise ValueError(f"target rank {self.target_rank} exceeds output dimension {out}")
        object.__setattr__(self, "output_dim", out)
        layout = self.input_state.layout
        if any(f.side is None for f in layout.factors):
            raise ValueError("every input factor needs an A/B side tag")

    @property
    def input_layout(self) -> SystemLayout:
        return self.input_state.layout

    @property
    def output_layout(self) -> SystemLayout:
        return SystemLayout([("B'", self.output_dim, "B")])

    def target(self) -> np.ndarray:
        m = np.zeros((self.output_dim,) * 2, complex)
        r = self.target_rank
        m[:r, :r] = 1.0 / r
        return m


@dataclass(frozen=True, eq=False)
class DistillationResult:
    value: float
    choi: chn.ChoiOperator
    certificate: CertificateReport
    solution: SdpSolution
    problem: DistillationProblem
    upper_bound: float

    def summary(self) -> dict[str, Any]:
        return {
            "class": self.problem.op_class,
            "objective": self.problem.objective,
            "target_rank": self.problem.target_rank,
            "value": self.value,
            "status": self.solution.status,
            "iterations": self.solution.iterations,
            "relative_gap": self.solution.relative_gap,
            "certificate_passed": self.certificate.passed,
            "bound": self.upper_bound,
        }


def _channel_model(p: DistillationProblem):
    """Model with the Choi block, CPTP and class constraints."""
    lin = p.input_layout
    lout = p.output_layout
    layout = chn.choi_layout(lin, lout)
    model = SdpModel()
    j = model.add_block("J", layout, trace_bound=float(lin.dim))
    in_labels = list(lin.labels)
    model.partial_trace_equals(j, [layout.labels[0]], np.eye(lin.dim), tag="tp")
    eye_out = np.eye(lout.dim)
    base = p.op_class.split("-")[0]
    if base == "qip":
        da, db = lin.side_dim("A"), lin.side_dim("B")
        for a, b, jj in itertools.product(range(da), range(da), range(db)):
            probe = probe_input(lin, a, b, jj).matrix
            sigma = j.rmul(np.kron(eye_out, probe.T)).partial_trace(in_labels)
            model.diagonal_only(sigma, tag=f"qip[{a},{b},{jj}]")
    else:
        for x in range(lin.dim):
            e = np.zeros((lin.dim, lin.dim))
            e[x, x] = 1.0
            sigma = j.rmul(np.kron(eye_out, e)).partial_trace(in_labels)
            model.diagonal_only(sigma, tag=f"mio[{x}]")
    if p.op_class.endswith("ppt"):
        a_labels = [f.label for f in layout.factors if f.side == "A"]
        model.psd_linked_block(j.partial_transpose(a_labels), "J_pt", trace_bound=float(lin.dim))
    return model, j, layout


def _output_expr(j, p: DistillationProblem):
    rho_t = p.input_state.matrix.T
    return j.rmul(np.kron(np.eye(p.output_dim), rho_t)).partial_trace(list(p.input_layout.labels))


def build_sdp(p: DistillationProblem):
    """The SDP for ``p`` as ``(problem, sign)``; the task value is ``sign * optimum``."""
    model, j, _ = _channel_model(p)
    out = _output_expr(j, p)
    if p.objective == "fidelity":
        model.maximize(out.inner(p.target()))
        return model.build(), 1.0
    lout = p.output_layout
    # at an optimum tr P + tr N equals the distance, which is at most 2
    pos = model.add_block("P", lout, trace_bound=2.0)
    neg = model.add_block("N", lout, trace_bound=2.0)
    model.equality_of_operators(pos - neg - out, -p.target(), tag="split")
    model.maximize(-1.0 * (pos.trace() + neg.trace()))
    return model.build(), -1.0


def distill(p: DistillationProblem, options: SolverOptions | None = None) -> DistillationResult:
    """Solve ``p`` and verify the certificate.

    Raises:
        SolverFailure: the solver did not report an optimal solution.
    """
    problem, sign = build_sdp(p)
    sol = solve(problem, options)
    if sol.status != OPTIMAL:
        raise SolverFailure(f"solver stopped with status {sol.status}: {sol.message}", sol)
    cert = verify_certificate(problem, sol)
    m = sol.x["J"]
    choi = chn.ChoiOperator(p.input_layout, p.output_layout, 0.5 * (m + m.conj().T),
                            tp_tol=max(chn.TP_TOL, 10 * sol.options.feas_tol * (1 + p.input_layout.dim)))
    return DistillationResult(sign * sol.primal_objective, choi, cert, sol, p, sign * cert.upper_bound)


def max_fidelity_distillation(p: DistillationProblem, options: SolverOptions | None = None) -> DistillationResult:
    """Maximal ``<Phi_M| E(psi) |Phi_M>`` over channels of the selected class.

    ``upper_bound`` on the result is a rigorous dual bound on the optimum.
    """
    if p.objective != "fidelity":
        raise ValueError("max_fidelity_distillation needs objective='fidelity'")
    return distill(p, options)


def min_trace_distance_distillation(p: DistillationProblem,
                                    options: SolverOptions | None = None) -> DistillationResult:
    """Minimal ``||E(psi) - Phi_M||_1`` over channels of the selected class.

    The trace norm is split as ``E(psi) - Phi_M = P - N`` with ``P, N >= 0`` and
    ``tr(P + N)`` minimized. For this objective ``upper_bound`` holds a rigorous
    lower bound on the distance (the sign flips with the objective).
    """
    if p.objective != "trace":
        raise ValueError("min_trace_distance_distillation needs objective='trace'")
    return distill(p, options)


def one_shot_scan(state: DensityOperator, op_class: str, max_rank: int | None = None,
                  options: SolverOptions | None = None) -> dict[int, float]:
    """Optimal trace distance to ``Phi_M`` for ``M = 1 .. max_rank`` (default ``D_B``)."""
    max_rank = state.layout.side_dim("B") if max_rank is None else max_rank
    out = {}
    for m in range(1, max_rank + 1):
        if m == 1:
            # a replacement channel onto |0> is free in every class
            out[m] = 0.0
            continue
        res = min_trace_distance_distillation(
            DistillationProblem(state, m, op_class, "trace"), options)
        out[m] = max(0.0, res.value)
    return out


def one_shot_rate(state: DensityOperator, epsilon: float, op_class: str = "qip",
                  max_rank: int | None = None, scan: dict[int, float] | None = None,
                  options: SolverOptions | None = None) -> float:
    """``log2 M*`` for the largest ``M`` reachable within trace distance ``epsilon``."""
    if not (0.0 < epsilon < 2.0):
        raise ValueError("epsilon must lie in (0, 2)")
    scan = one_shot_scan(state, op_class, max_rank, options) if scan is None else scan
    best = max(m for m, v in scan.items() if v <= epsilon)
    return math.log2(best)


# ---------------------------------------------------------------------------
# hierarchy demonstration
# ---------------------------------------------------------------------------


@dataclass
class DemoItem:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class HierarchyReport:
    items: list[DemoItem]

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed,
                "items": [{"name": i.name, "passed": i.passed, **i.details} for i in self.items]}


def bell_state() -> np.ndarray:
    v = np.zeros(4, complex)
    v[0] = v[3] = 1 / math.sqrt(2)
    return np.outer(v, v.conj())


def hierarchy_demo(tol: float = DEFAULT_TOL, t: float = 0.25,
                   options: SolverOptions | None = None) -> HierarchyReport:
    """Run the separating examples of the operation hierarchy.

    Tolerances only loosen the membership tests; the SDP separation is judged
    against the fixed 0.98 threshold.
    """
    items = []

    io = chn.nonlocal_incoherent_channel()
    v_mio, v_qip = is_mio(io, tol), is_qip(io, tol)
    v_io = chn.is_io_kraus(io)
    plus_zero = probe_input(io.input_layout, 0, 1, 0)
    out = chn.apply(io, plus_zero)
    fid = float(np.real(np.trace(bell_state() @ out.matrix)))
    items.append(DemoItem("io_channel_not_qip", bool(v_io and v_mio and not v_qip and fid >= 1 - 1e-10), {
        "io": v_io.member, "mio": v_mio.member, "qip": v_qip.member,
        "qip_witness": v_qip.witness, "bell_fidelity": fid}))

    prep = chn.plus_preparation_channel()
    p_qip, p_mio = is_qip(prep, tol), is_mio(prep, tol)
    items.append(DemoItem("plus_preparation_not_mio", bool(p_qip and not p_mio), {
        "qip": p_qip.member, "mio": p_mio.member, "mio_witness": p_mio.witness}))

    swap = chn.make_swap(2)
    s_mio, s_ppt = is_mio(swap, tol), is_ppt(swap)
    lo = s_ppt.details["min_eigenvalue"]
    items.append(DemoItem("swap_not_ppt", bool(s_mio and not s_ppt and lo < -0.1), {
        "mio": s_mio.member, "ppt": s_ppt.member, "min_eigenvalue": lo}))

    state = build_example_state(t)
    r_qip = max_fidelity_distillation(DistillationProblem(state, 4, "qip"), options)
    r_ppt = max_fidelity_distillation(DistillationProblem(state, 4, "qip-ppt"), options)
    ok = (r_qip.value >= 1 - 1e-4 and r_ppt.value < 0.98 and r_ppt.upper_bound < 0.98
          and r_qip.certificate.passed and r_ppt.certificate.passed)
    items.append(DemoItem("qip_vs_qip_ppt_distillation", bool(ok), {
        "t": t, "qip": r_qip.summary(), "qip_ppt": r_ppt.summary()}))
    return HierarchyReport(items)


def lqicc_fidelity(state: DensityOperator, protocol: chn.KrausChannel, target_rank: int) -> float:
    """Fidelity with ``Phi_M`` of the output of an explicit AB -> B' protocol."""
    out = chn.apply(protocol, state)
    return fidelity_squared(out, maximally_coherent(target_rank, out.layout.labels[0]))
