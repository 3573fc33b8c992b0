"""Primal-dual interior-point method for block SDPs.

Infeasible-start path following with the HKM search direction and a Mehrotra
predictor-corrector. Complex Hermitian blocks are handled natively: the Schur
complement ``M_ij = Re tr(A_i X A_j Z^-1)`` is real symmetric for Hermitian data.

Dual problem of :class:`SdpProblem`::

    minimize  b^T y + c0   subject to  Z = sum_i y_i A_i - C >= 0
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .problem import SdpProblem, svec_matrix

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-8
    max_iters: int = 200
    infeas_tol: float = 1e-7
    rank_tol: float = 1e-10
    step_fraction: float = 0.98
    debug: bool = False


@dataclass(frozen=True)
class IterateRecord:
    iteration: int
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    complementarity: float


@dataclass(frozen=True, eq=False)
class SdpSolution:
    """Solver outcome.

    ``y`` has one entry per constraint of the original problem; constraints
    dropped as linearly dependent get multiplier zero. For ``infeasible`` the
    ``certificate`` field holds a normalized Farkas ray.
    """

    status: str
    x: dict[str, np.ndarray]
    y: np.ndarray
    z: dict[str, np.ndarray]
    primal_objective: float
    dual_objective: float
    relative_gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    options: SolverOptions
    history: tuple[IterateRecord, ...] = ()
    message: str = ""
    certificate: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def weak_duality_violations(self, slack: float = 10.0) -> list[IterateRecord]:
        """Recorded iterates that are feasible yet have dual objective below primal.

        An iterate counts as feasible when both infeasibilities are within the
        feasibility tolerance; the comparison allows ``slack * feas_tol`` relative
        to the objective magnitudes.
        """
        tol = self.options.feas_tol
        bad = []
        for r in self.history:
            if r.primal_infeasibility <= tol and r.dual_infeasibility <= tol:
                scale = 1.0 + abs(r.primal_objective) + abs(r.dual_objective)
                if r.dual_objective < r.primal_objective - slack * tol * scale:
                    bad.append(r)
        return bad


# ---------------------------------------------------------------------------
# presolve
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Presolved:
    keep: np.ndarray
    consistent: bool
    inconsistency: float


def presolve(problem: SdpProblem, rank_tol: float = 1e-10) -> Presolved:
    """Drop linearly dependent constraints via rank-revealing pivoted QR.

    Dropped rows are checked for consistency with the kept ones; a dependent
    row with a mismatched right-hand side makes the problem infeasible.
    """
    m = problem.num_constraints
    if m == 0:
        return Presolved(np.zeros(0, dtype=int), True, 0.0)
    a = np.hstack([svec_matrix(problem.a[blk.name], blk) for blk in problem.blocks])
    _, r, piv = sla.qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(diag > rank_tol * diag[0]))
    keep = np.sort(piv[:rank])
    if rank == m:
        return Presolved(keep, True, 0.0)
    b = problem.b[piv]
    if rank == 0:
        mismatch = float(np.max(np.abs(b)))
    else:
        coeffs = sla.solve_triangular(r[:rank, :rank], r[:rank, rank:])
        mismatch = float(np.max(np.abs(b[rank:] - coeffs.T @ b[:rank])))
    scale = 1.0 + float(np.max(np.abs(problem.b)))
    return Presolved(keep, mismatch <= 1e-8 * scale, mismatch)


# ---------------------------------------------------------------------------
# per-block linear algebra
# ---------------------------------------------------------------------------


class _BlockData:
    def __init__(self, name, n, is_complex, a: sp.csr_matrix, c: np.ndarray):
        self.name = name
        self.n = n
        self.complex = is_complex
        self.dtype = np.complex128 if is_complex else np.float64
        self.a = sp.csr_matrix(a, dtype=self.dtype)
        self.a_conj = self.a.conj().tocsr()
        self.a_t = self.a.T.tocsr()
        self.c = np.asarray(c, dtype=self.dtype)
        active = np.flatnonzero(np.diff(self.a.indptr) > 0)
        self.active = active
        sub = self.a[active].tocoo()
        # rows of A_i stacked vertically: (len(active) * n, n)
        self.a_stack = sp.csr_matrix(
            (sub.data, (sub.row * n + sub.col // n, sub.col % n)),
            shape=(active.size * n, n))
        self.a_conj_active = self.a_conj[active]

    def op(self, x: np.ndarray) -> np.ndarray:
        return np.real(self.a_conj @ x.ravel())

    def adj(self, y: np.ndarray) -> np.ndarray:
        m = (self.a_t @ y).reshape(self.n, self.n)
        return _herm(m)

    def schur(self, x: np.ndarray, zinv: np.ndarray, m_total: int) -> np.ndarray:
        k = self.active.size
        out = np.zeros((m_total, m_total))
        if k == 0:
            return out
        az = (self.a_stack @ zinv).reshape(k, self.n, self.n)
        g = np.matmul(x, az).reshape(k, self.n * self.n)
        block = np.real(self.a_conj_active @ g.T)
        out[np.ix_(self.active, self.active)] = block
        return out


def _herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest ``alpha`` with ``x + alpha dx`` PSD (``x`` positive definite)."""
    try:
        l = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    li = sla.solve_triangular(l, np.eye(l.shape[0]), lower=True)
    s = _herm(li @ dx @ li.conj().T)
    lo = float(np.linalg.eigvalsh(s)[0])
    return np.inf if lo >= 0 else -1.0 / lo


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


class _Iterate:
    def __init__(self, x, y, z):
        self.x, self.y, self.z = x, y, z


def _solve_schur(m: np.ndarray, rhs: np.ndarray, factor_cache: list) -> np.ndarray:
    if not factor_cache:
        scale = np.max(np.abs(np.diag(m))) or 1.0
        for reg in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                factor_cache.append(sla.cho_factor(m + reg * scale * np.eye(m.shape[0]), check_finite=True))
                break
            except (np.linalg.LinAlgError, ValueError):
                continue
        else:
            raise np.linalg.LinAlgError("Schur complement is not positive definite")
    return sla.cho_solve(factor_cache[0], rhs)


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def solve(problem: SdpProblem, options: SolverOptions | None = None, **overrides) -> SdpSolution:
    """Solve ``problem`` to the requested tolerances.

    Args:
        problem: the block SDP.
        options: solver tolerances; keyword overrides are applied on top.

    Returns:
        An :class:`SdpSolution`. ``status`` is ``optimal`` when relative gap and
        both infeasibilities are below tolerance, ``infeasible`` when a Farkas
        ray for the primal (or dual) is found, ``max_iterations`` or
        ``numerical_failure`` otherwise.
    """
    opts = options or SolverOptions()
    if overrides:
        opts = SolverOptions(**{**opts.__dict__, **overrides})
    m_full = problem.num_constraints
    pre = presolve(problem, opts.rank_tol)
    names = [blk.name for blk in problem.blocks]

    def finish(status, it, x, y, z, pobj, dobj, pinf, dinf, k, history, msg, cert=None):
        y_full = np.zeros(m_full)
        y_full[pre.keep] = y
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        return SdpSolution(status, dict(zip(names, x)), y_full, dict(zip(names, z)),
                           pobj, dobj, relgap, pinf, dinf, k, opts, tuple(history), msg, cert or {})

    if not pre.consistent:
        zeros = [np.zeros((blk.dim, blk.dim), blk.dtype) for blk in problem.blocks]
        return finish(INFEASIBLE, 0, zeros, np.zeros(pre.keep.size), zeros, np.nan, np.nan,
                      pre.inconsistency, np.nan, 0, [],
                      "linearly dependent equality constraints are inconsistent",
                      {"kind": "inconsistent_equalities", "mismatch": pre.inconsistency})

    keep = pre.keep
    b = np.asarray(problem.b)[keep]
    m = b.size
    blocks = [_BlockData(blk.name, blk.dim, blk.complex, problem.a[blk.name][keep],
                         problem.objective[blk.name]) for blk in problem.blocks]
    c0 = problem.objective_constant
    n_total = sum(bd.n for bd in blocks)
    norm_b = float(np.linalg.norm(b))
    norm_c = float(np.sqrt(sum(np.linalg.norm(bd.c) ** 2 for bd in blocks)))

    # SDPT3-style starting point
    x, z = [], []
    for bd in blocks:
        row_norms = np.sqrt(np.asarray(abs(bd.a).power(2).sum(axis=1))).ravel()
        xi = max(10.0, np.sqrt(bd.n), bd.n * float(np.max((1.0 + np.abs(b)) / (1.0 + row_norms), initial=0.0)))
        eta = max(10.0, np.sqrt(bd.n), float(np.max(row_norms, initial=0.0)), float(np.linalg.norm(bd.c)))
        x.append(xi * np.eye(bd.n, dtype=bd.dtype))
        z.append(eta * np.eye(bd.n, dtype=bd.dtype))
    y = np.zeros(m)

    def op(xs):
        out = np.zeros(m)
        for bd, xk in zip(blocks, xs):
            out += bd.op(xk)
        return out

    history: list[IterateRecord] = []
    status, msg, cert = MAX_ITERATIONS, "iteration limit reached", None
    pobj = dobj = np.nan
    pinf = dinf = np.inf
    k = 0
    for k in range(opts.max_iters + 1):
        aty = [bd.adj(y) for bd in blocks]
        rp = b - op(x)
        rd = [bd.c - atyk + zk for bd, atyk, zk in zip(blocks, aty, z)]
        pobj = c0 + sum(_inner(bd.c, xk) for bd, xk in zip(blocks, x))
        dobj = c0 + float(b @ y)
        pinf = float(np.linalg.norm(rp)) / (1.0 + norm_b)
        dinf = float(np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd))) / (1.0 + norm_c)
        xz = sum(_inner(xk, zk) for xk, zk in zip(x, z))
        mu = xz / n_total
        history.append(IterateRecord(k, pobj, dobj, pinf, dinf, xz))
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        log.debug("iter %d pobj %.10g dobj %.10g pinf %.2e dinf %.2e gap %.2e", k, pobj, dobj, pinf, dinf, relgap)
        if opts.debug and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            scale = 1.0 + abs(pobj) + abs(dobj)
            assert dobj >= pobj - 10 * opts.feas_tol * scale, "weak duality violated"

        if relgap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            status, msg = OPTIMAL, "converged"
            break

        # Farkas ray for primal infeasibility: A^T y >= 0 with b^T y < 0
        by = float(b @ y)
        if by < 0:
            ray = y / -by
            lo = min(float(np.linalg.eigvalsh(bd.adj(ray))[0]) for bd in blocks)
            if lo >= -opts.infeas_tol:
                status, msg = INFEASIBLE, "primal infeasible"
                cert = {"kind": "primal_infeasible", "ray_min_eigenvalue": lo}
                break
        # ray for dual infeasibility: A(X) = 0, X >= 0, <C, X> > 0
        cx = pobj - c0
        if cx > 0:
            xs = [xk / cx for xk in x]
            res = float(np.linalg.norm(op(xs)))
            if res <= opts.infeas_tol and min(float(np.linalg.eigvalsh(xk)[0]) for xk in xs) >= -opts.infeas_tol:
                status, msg = INFEASIBLE, "dual infeasible (primal unbounded)"
                cert = {"kind": "dual_infeasible", "ray_residual": res}
                break
        if k == opts.max_iters:
            break

        try:
            zinv = [np.linalg.inv(zk) for zk in z]
            zinv = [_herm(zi) for zi in zinv]
            schur = sum(bd.schur(xk, zi, m) for bd, xk, zi in zip(blocks, x, zinv))
            cache: list = []
            if m:
                schur = 0.5 * (schur + schur.T)

            def direction(corr_terms, sigma_mu):
                # M dy = A(-X + sigma mu Z^-1 + X Rd Z^-1 - corr Z^-1) - rp
                g = []
                for xk, zi, rdk, ck in zip(x, zinv, rd, corr_terms):
                    t = -xk + sigma_mu * zi + xk @ rdk @ zi
                    if ck is not None:
                        t = t - ck @ zi
                    g.append(t)
                rhs = op(g) - rp
                dy = _solve_schur(schur, rhs, cache) if m else np.zeros(0)
                dz = [bd.adj(dy) - rdk for bd, rdk in zip(blocks, rd)]
                dx = []
                for xk, zi, dzk, ck in zip(x, zinv, dz, corr_terms):
                    t = -xk + sigma_mu * zi - xk @ dzk @ zi
                    if ck is not None:
                        t = t - ck @ zi
                    dx.append(_herm(t))
                return dx, dy, dz

            dx_a, dy_a, dz_a = direction([None] * len(blocks), 0.0)
            ap = min(1.0, min(_max_step(xk, d) for xk, d in zip(x, dx_a)))
            ad = min(1.0, min(_max_step(zk, d) for zk, d in zip(z, dz_a)))
            mu_aff = sum(_inner(xk + ap * dxk, zk + ad * dzk)
                         for xk, dxk, zk, dzk in zip(x, dx_a, z, dz_a)) / n_total
            sigma = min(1.0, max(0.0, mu_aff / mu) ** 3) if mu > 0 else 0.0
            corr = [dxk @ dzk for dxk, dzk in zip(dx_a, dz_a)]
            dx, dy, dz = direction(corr, sigma * mu)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            status, msg = NUMERICAL_FAILURE, f"linear algebra failure: {exc}"
            break

        if not all(np.all(np.isfinite(d)) for d in dx + dz) or not np.all(np.isfinite(dy)):
            status, msg = NUMERICAL_FAILURE, "non-finite search direction"
            break
        ap = min(1.0, opts.step_fraction * min(_max_step(xk, d) for xk, d in zip(x, dx)))
        ad = min(1.0, opts.step_fraction * min(_max_step(zk, d) for zk, d in zip(z, dz)))
        if ap < 1e-12 and ad < 1e-12:
            status, msg = NUMERICAL_FAILURE, "step length collapsed"
            break
        x = [_herm(xk + ap * d) for xk, d in zip(x, dx)]
        y = y + ad * dy
        z = [_herm(zk + ad * d) for zk, d in zip(z, dz)]
        if max(np.abs(y).max(initial=0.0), max(np.abs(xk).max() for xk in x)) > 1e14:
            status, msg = NUMERICAL_FAILURE, "iterates diverged without an infeasibility certificate"
            break

    return finish(status, k, x, y, z, pobj, dobj, pinf, dinf, k, history, msg, cert)
