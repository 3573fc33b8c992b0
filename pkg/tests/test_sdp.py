import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qihier import channels as chn
from qihier.linalg import (
    SystemLayout,
    dephase_array,
    ptrace_array,
    ptranspose_array,
    random_density,
    random_hermitian,
)
from qihier.sdp import (
    INFEASIBLE,
    MAX_ITERATIONS,
    OPTIMAL,
    Block,
    Expr,
    ProblemFormatError,
    SdpModel,
    SdpProblem,
    dumps_problem,
    embed_hermitian,
    loads_problem,
    presolve,
    solve,
    verify_certificate,
)
from qihier.sdp.embed import decode, embed_functional, encode


def max_eig_problem(h, complex_block=True):
    model = SdpModel()
    x = model.add_block("X", h.shape[0], complex=complex_block, trace_bound=1.0)
    model.add_scalar_constraint(x.trace(), 1.0)
    model.maximize(x.inner(h))
    return model.build()


def test_scalar_block():
    p = SdpProblem.from_dense([Block("x", 1, complex=False)], {"x": np.ones((1, 1))},
                              [({"x": np.ones((1, 1))}, 1.0)])
    s = solve(p)
    assert s.status == OPTIMAL
    assert s.primal_objective == pytest.approx(1.0, abs=1e-7)
    assert verify_certificate(p, s).passed


def test_best_eigenvector():
    s = solve(max_eig_problem(np.diag([1.0, -1.0])))
    assert s.status == OPTIMAL
    assert s.primal_objective == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(s.x["X"], np.diag([1.0, 0.0]), atol=1e-6)


@pytest.mark.parametrize("complex_block", [True, False])
def test_max_eigenvalue_oracle(rng, complex_block):
    for d in (2, 4, 6):
        h = random_hermitian(d, rng)
        if not complex_block:
            h = h.real
        p = max_eig_problem(h, complex_block)
        s = solve(p)
        assert s.status == OPTIMAL
        assert abs(s.primal_objective - np.linalg.eigvalsh(h)[-1]) <= 1e-6
        assert verify_certificate(p, s).passed
        assert not s.weak_duality_violations()


def test_perturbed_solution_fails_feasibility(rng):
    p = max_eig_problem(random_hermitian(4, rng))
    s = solve(p)
    rep = verify_certificate(p, s, x={"X": s.x["X"] + 1e-3 * np.eye(4)})
    assert not rep.passed
    assert "primal_residual" in rep.failures()


def test_certificate_upper_bound_dominates_primal(rng):
    p = max_eig_problem(random_hermitian(5, rng))
    s = solve(p)
    rep = verify_certificate(p, s)
    assert rep.upper_bound >= s.primal_objective - 1e-12
    assert rep.upper_bound == pytest.approx(s.dual_objective, abs=1e-6)


def test_solver_is_deterministic(rng):
    p = max_eig_problem(random_hermitian(5, rng))
    a, b = solve(p), solve(p)
    np.testing.assert_array_equal(a.x["X"], b.x["X"])
    np.testing.assert_array_equal(a.y, b.y)
    assert a.primal_objective == b.primal_objective


def test_debug_mode_checks_weak_duality(rng):
    s = solve(max_eig_problem(random_hermitian(3, rng)), debug=True)
    assert s.status == OPTIMAL
    assert len(s.history) == s.iterations + 1


def test_iteration_limit(rng):
    s = solve(max_eig_problem(random_hermitian(4, rng)), max_iters=1)
    assert s.status == MAX_ITERATIONS


def test_presolve_drops_duplicate_rows(rng):
    h = random_hermitian(3, rng)
    model = SdpModel()
    x = model.add_block("X", 3)
    model.add_scalar_constraint(x.trace(), 1.0)
    model.add_scalar_constraint(2.0 * x.trace(), 2.0)
    model.maximize(x.inner(h))
    p = model.build()
    pre = presolve(p)
    assert pre.consistent and pre.keep.size == 1
    s = solve(p)
    assert s.status == OPTIMAL
    assert s.primal_objective == pytest.approx(np.linalg.eigvalsh(h)[-1], abs=1e-6)
    assert verify_certificate(p, s).passed


def test_inconsistent_equalities_are_infeasible():
    model = SdpModel()
    x = model.add_block("X", 2)
    model.add_scalar_constraint(x.trace(), 1.0)
    model.add_scalar_constraint(2.0 * x.trace(), 3.0)
    s = solve(model.build())
    assert s.status == INFEASIBLE
    assert s.certificate["kind"] == "inconsistent_equalities"


def test_psd_link_of_swap_partial_transpose_is_infeasible():
    j = chn.as_choi(chn.make_swap(2))
    model = SdpModel()
    pt = Expr.constant(j.matrix, j.layout).partial_transpose(["A'", "A"])
    model.psd_linked_block(pt, "Y")
    s = solve(model.build())
    assert s.status == INFEASIBLE
    assert s.certificate["kind"] == "primal_infeasible"


def test_unbounded_problem_reports_dual_infeasibility():
    model = SdpModel()
    x = model.add_block("X", 2)
    model.add_scalar_constraint(x.inner(np.diag([1.0, 0.0])), 1.0)
    model.maximize(x.inner(np.diag([0.0, 1.0])))
    s = solve(model.build())
    assert s.status == INFEASIBLE
    assert s.certificate["kind"] == "dual_infeasible"


# ---------------------------------------------------------------------------
# expressions and constraint helpers
# ---------------------------------------------------------------------------

LAY = SystemLayout([("P", 2, "A"), ("Q", 3, "B")])


def test_expression_maps_match_dense_kernels(rng):
    model = SdpModel()
    x = model.add_block("X", LAY)
    val = random_density(LAY, rng).matrix
    env = {"X": val}
    m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    np.testing.assert_allclose(x.partial_trace(["P"]).value(env), ptrace_array(val, (2, 3), [0]), atol=1e-12)
    np.testing.assert_allclose(x.partial_transpose(["Q"]).value(env), ptranspose_array(val, (2, 3), [1]))
    np.testing.assert_allclose(x.dephase(["Q"]).value(env), dephase_array(val, (2, 3), [1]))
    np.testing.assert_allclose(x.lmul(m).value(env), m @ val, atol=1e-12)
    np.testing.assert_allclose(x.rmul(m).value(env), val @ m, atol=1e-12)
    assert x.inner(m).value(env)[0, 0] == pytest.approx(np.trace(m @ val))
    combo = 2.0 * x - x.lmul(m) + np.eye(6)
    np.testing.assert_allclose(combo.value(env), 2 * val - m @ val + np.eye(6), atol=1e-12)


def test_expression_rejects_matrix_scaling():
    x = SdpModel().add_block("X", LAY)
    with pytest.raises(TypeError):
        x * np.eye(6)
    with pytest.raises(ValueError):
        x + Expr.constant(np.eye(2))


def constraint_residual(problem, values):
    return problem.apply_constraints(values) - problem.b


def test_partial_trace_equals_on_identity_choi():
    lay = SystemLayout([("B", 3, "B")])
    j = chn.as_choi(chn.identity_channel(lay))
    model = SdpModel()
    x = model.add_block("J", j.layout)
    model.partial_trace_equals(x, ["B'"], np.eye(3))
    p = model.build()
    np.testing.assert_array_equal(constraint_residual(p, {"J": j.matrix}), 0.0)


def test_diagonal_only_on_dephased_operator(rng):
    model = SdpModel()
    x = model.add_block("X", LAY)
    model.diagonal_only(x.partial_trace(["P"]))
    p = model.build()
    rho = random_density(LAY, rng).matrix
    deph = dephase_array(rho, (2, 3), [1])
    np.testing.assert_allclose(constraint_residual(p, {"X": deph}), 0.0, atol=1e-15)
    assert np.max(np.abs(constraint_residual(p, {"X": rho}))) > 1e-3


def test_equality_of_operators_counts_real_rows():
    model = SdpModel()
    x = model.add_block("X", 3)
    model.equality_of_operators(x, np.eye(3) / 3)
    assert model.build().num_constraints == 9
    model = SdpModel()
    y = model.add_block("Y", 3, complex=False)
    model.equality_of_operators(y, np.eye(3) / 3)
    # imaginary rows vanish on a real block
    assert model.build().num_constraints == 6


# ---------------------------------------------------------------------------
# real embedding
# ---------------------------------------------------------------------------


def test_embedding_examples():
    np.testing.assert_array_equal(encode(np.array([[2.5]])), np.diag([2.5, 2.5]))
    x = np.array([[1, 1j], [-1j, 1]])
    np.testing.assert_allclose(np.linalg.eigvalsh(encode(x)), [0, 0, 2, 2], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5))
def test_embedding_round_trip_and_positivity(seed, d):
    rng = np.random.default_rng(seed)
    x = random_density(d, rng).matrix
    y = encode(x)
    np.testing.assert_array_equal(decode(y), 0.5 * (x + x.conj().T))
    assert np.linalg.eigvalsh(y)[0] >= -1e-12
    a = random_hermitian(d, rng)
    assert np.sum(embed_functional(a) * y) == pytest.approx(np.real(np.trace(a @ x)), abs=1e-10)


def test_embedded_problem_matches_native(rng):
    d = 3
    h = random_hermitian(d, rng)
    emb = embed_hermitian(d)
    constraints = [({"X": embed_functional(np.eye(d))}, 1.0)]
    constraints += [({"X": s}, rhs) for s, rhs in emb.structural_constraints()]
    p = SdpProblem.from_dense([emb.block], {"X": embed_functional(h)}, constraints)
    s = solve(p)
    assert s.status == OPTIMAL
    assert s.primal_objective == pytest.approx(np.linalg.eigvalsh(h)[-1], abs=1e-6)
    assert verify_certificate(p, s).passed
    native = solve(max_eig_problem(h))
    assert s.primal_objective == pytest.approx(native.primal_objective, abs=1e-6)
    x = decode(s.x["X"])
    assert np.real(np.trace(h @ x)) == pytest.approx(s.primal_objective, abs=1e-6)


def test_embedding_requires_positive_dimension():
    with pytest.raises(ValueError):
        embed_hermitian(0)


# ---------------------------------------------------------------------------
# text dump
# ---------------------------------------------------------------------------


def test_text_round_trip(rng):
    p = max_eig_problem(random_hermitian(3, rng))
    q = loads_problem(dumps_problem(p))
    assert dumps_problem(q) == dumps_problem(p)
    assert solve(q).primal_objective == solve(p).primal_objective


def test_text_format_errors():
    with pytest.raises(ProblemFormatError, match="header"):
        loads_problem("nonsense\n")
    with pytest.raises(ProblemFormatError, match="line 2"):
        loads_problem("qihier-sdp 1\nblock X two real\n")
    with pytest.raises(ProblemFormatError, match="unknown block"):
        loads_problem("qihier-sdp 1\nblock X 2 real\nobjective\nY 0 0 1.0 0.0\nend\n")
    with pytest.raises(ProblemFormatError, match="unterminated"):
        loads_problem("qihier-sdp 1\nblock X 2 real\nconstraint 1.0\nX 0 0 1.0 0.0\n")
