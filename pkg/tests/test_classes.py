import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qihier import channels as chn
from qihier.classes import (
    basis_state,
    cqip_probe_output,
    is_cqip,
    is_incoherent_state,
    is_io,
    is_mio,
    is_ppt,
    is_qi_state,
    is_qip,
    probe_basis,
    probe_input,
    random_qi_state,
)
from qihier.linalg import LayoutError, SystemLayout, dephase, pure_state, random_density, random_unitary

AB = SystemLayout([("A", 2, "A"), ("B", 2, "B")])


def mixture(p, ch1, ch2):
    j1, j2 = chn.as_choi(ch1), chn.as_choi(ch2)
    return chn.ChoiOperator(j1.input_layout, j1.output_layout, (1 - p) * j1.matrix + p * j2.matrix)


def dephased_output(ch):
    """Compose with complete dephasing of the B-side output factors."""
    lout = ch.output_layout
    return chn.compose(chn.dephasing_channel(lout, lout.side_labels("B")), ch)


def test_basis_state_matrices():
    np.testing.assert_allclose(basis_state(0, 1, 2).matrix, 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(basis_state(1, 0, 2).matrix, 0.5 * np.array([[1, 1j], [-1j, 1]]))
    np.testing.assert_allclose(basis_state(2, 2, 3).matrix, np.diag([0, 0, 1]))
    with pytest.raises(IndexError):
        basis_state(0, 3, 3)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_probe_basis_spans_all_matrices(d, rng):
    pb = probe_basis(d)
    assert len(pb.states) == d * d
    assert pb.condition_number < 1e6
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    c = pb.coefficients(x)
    recon = sum(ci * s.matrix for ci, (_, _, s) in zip(c, pb.states))
    np.testing.assert_allclose(recon, x, atol=1e-10)


def test_qi_and_incoherent_states(rng):
    rho = random_qi_state(AB, rng)
    assert is_qi_state(rho)
    assert not is_incoherent_state(rho)
    assert is_incoherent_state(dephase(rho, ["A"]))
    bell = pure_state(np.array([1, 0, 0, 1]) / np.sqrt(2), AB)
    assert not is_qi_state(bell)
    assert is_qi_state(dephase(bell, ["B"]))


def test_probe_input_respects_layout_order():
    lay = SystemLayout([("B", 2, "B"), ("A", 2, "A")])
    rho = probe_input(lay, 0, 1, 1)
    expected = np.kron(np.diag([0, 1]), 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(rho.matrix, expected)


def test_nonlocal_io_channel_not_qip():
    io = chn.nonlocal_incoherent_channel()
    assert is_io(io)
    assert is_mio(io)
    v = is_qip(io)
    assert not v
    assert (v.witness["a"], v.witness["b"], v.witness["j"]) == (0, 1, 0)
    assert v.witness["deviation"] == pytest.approx(1.0)
    assert not is_cqip(io)


def test_plus_preparation_not_mio():
    prep = chn.plus_preparation_channel()
    assert is_qip(prep)
    assert is_cqip(prep)
    v = is_mio(prep)
    assert not v
    assert v.witness["input"] == [0, 0]


def test_swap_is_mio_not_ppt():
    swap = chn.make_swap(2)
    assert is_mio(swap)
    v = is_ppt(swap)
    assert not v
    assert v.witness["min_eigenvalue"] == pytest.approx(-1.0)
    assert not is_qip(swap)


def test_local_operations_are_ppt(rng):
    la, lb = SystemLayout([("A", 2, "A")]), SystemLayout([("B", 2, "B")])
    local = chn.product_channel(chn.random_channel(la, la, 2, rng), chn.random_channel(lb, lb, 2, rng))
    assert is_ppt(local)


def test_incoherent_unitary_on_b_is_qip(rng):
    perm = np.array([[0, 1], [1, 0]]) * np.exp(1j * np.array([0.3, 1.1]))[:, None]
    u = np.kron(random_unitary(2, rng), perm)
    ch = chn.unitary_channel(u, AB)
    assert is_qip(ch)
    assert is_cqip(ch)
    assert is_ppt(ch)


def test_is_io_needs_kraus():
    with pytest.raises(TypeError):
        is_io(chn.as_choi(chn.identity_channel(AB)))


def test_class_tests_require_sides():
    lay = SystemLayout([("X", 2), ("Y", 2)])
    ch = chn.identity_channel(lay)
    with pytest.raises(LayoutError):
        is_qip(ch)
    with pytest.raises(LayoutError):
        is_ppt(ch)


def test_cqip_probe_output_is_choi_slice():
    out = cqip_probe_output(chn.identity_channel(AB), 1)
    assert out.layout.labels == ("A''", "A", "B")
    assert out.trace() == pytest.approx(1.0)
    # identity channel: maximally entangled on A''A, times |1><1| on B
    np.testing.assert_allclose(np.linalg.eigvalsh(out.matrix)[-1], 1.0)
    assert not is_qi_state(out, ["A"])
    assert is_qi_state(out, ["B"])


def test_qip_verdicts_on_channel_families(rng):
    lout = SystemLayout([("A'", 2, "A"), ("B'", 2, "B")])
    for _ in range(5):
        member = dephased_output(chn.random_channel(AB, lout, 3, rng))
        assert is_qip(member) and is_cqip(member)
        generic = chn.random_channel(AB, lout, 3, rng)
        assert not is_qip(generic) and not is_cqip(generic)


def test_qip_channels_preserve_random_qi_states(rng):
    lout = SystemLayout([("A'", 3, "A"), ("B'", 2, "B")])
    ch = dephased_output(chn.random_channel(AB, lout, 2, rng))
    assert is_qip(ch)
    for _ in range(20):
        out = chn.apply(ch, random_qi_state(AB, rng))
        assert is_qi_state(out)


def test_witness_is_first_in_lexicographic_order():
    ch = chn.compose(chn.make_swap(2), chn.plus_preparation_channel())
    v = is_qip(ch)
    assert not v
    first = (v.witness["a"], v.witness["b"], v.witness["j"])
    for probe in itertools.product(range(2), range(2), range(2)):
        out = chn.apply(ch, probe_input(AB, *probe))
        if probe < first:
            assert is_qi_state(out)
        elif probe == first:
            assert not is_qi_state(out)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([0.0, 1e-10, 1e-3, 0.2, 1.0]))
def test_qip_and_cqip_agree(seed, p):
    rng = np.random.default_rng(seed)
    lout = SystemLayout([("A'", 2, "A"), ("B'", 2, "B")])
    member = dephased_output(chn.random_channel(AB, lout, 2, rng))
    ch = mixture(p, member, chn.random_channel(AB, lout, 2, rng))
    assert bool(is_qip(ch)) == bool(is_cqip(ch))
