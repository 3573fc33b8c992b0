"""Independent verification of SDP solutions.

Everything here is recomputed from the problem data and the returned
``(X, y)`` pair. Dual slacks are rebuilt as ``sum_i y_i A_i - C`` rather than
taken from the solver, so a wrong slack cannot certify itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import SdpProblem
from .solver import SdpSolution

PSD_CHECK_TOL = 1e-8


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class CertificateReport:
    checks: tuple[Check, ...]
    primal_objective: float
    dual_objective: float
    upper_bound: float
    """Rigorous bound on the primal optimum: ``b^T y + c0`` plus the penalty for
    any negative slack eigenvalue times the block trace bound. ``inf`` when a
    slack is indefinite on a block without a trace bound."""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "upper_bound": self.upper_bound,
            "checks": {c.name: {"value": c.value, "threshold": c.threshold, "passed": c.passed}
                       for c in self.checks},
        }


def _min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])


def verify_certificate(problem: SdpProblem, solution: SdpSolution,
                       x: dict | None = None, y: np.ndarray | None = None) -> CertificateReport:
    """Check primal feasibility, PSD blocks, dual feasibility and the duality gap.

    ``x`` and ``y`` override the solution's values, which is how perturbed or
    externally produced points are checked.
    """
    opts = solution.options
    x = solution.x if x is None else x
    y = solution.y if y is None else np.asarray(y, dtype=float)
    checks = []

    residual = problem.apply_constraints(x) - problem.b
    pres = float(np.linalg.norm(residual)) / (1.0 + float(np.linalg.norm(problem.b)))
    checks.append(Check("primal_residual", pres, opts.feas_tol, pres <= opts.feas_tol))

    for blk in problem.blocks:
        lo = _min_eig(np.asarray(x[blk.name]))
        checks.append(Check(f"primal_psd[{blk.name}]", lo, -PSD_CHECK_TOL, lo >= -PSD_CHECK_TOL))

    slack = problem.adjoint(y)
    bound = problem.dual_objective_value(y)
    for blk in problem.blocks:
        z = slack[blk.name] - problem.objective[blk.name]
        lo = _min_eig(z)
        checks.append(Check(f"dual_psd[{blk.name}]", lo, -PSD_CHECK_TOL, lo >= -PSD_CHECK_TOL))
        if lo < 0:
            if blk.trace_bound is None:
                bound = np.inf if lo < -PSD_CHECK_TOL else bound
            else:
                bound += -lo * blk.trace_bound

    pobj = problem.objective_value(x)
    dobj = problem.dual_objective_value(y)
    relgap = abs(dobj - pobj) / (1.0 + abs(pobj) + abs(dobj))
    checks.append(Check("relative_gap", relgap, opts.gap_tol, relgap <= opts.gap_tol))
    scale = 1.0 + abs(pobj) + abs(dobj)
    slack_dual = (dobj - pobj) / scale
    checks.append(Check("weak_duality", slack_dual, -10 * opts.feas_tol, slack_dual >= -10 * opts.feas_tol))
    return CertificateReport(tuple(checks), pobj, dobj, float(bound))
