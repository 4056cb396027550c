import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.hamiltonian import (HamiltonianError, LocalHamiltonian, PauliTerm, QuditHamiltonian,
                                  energy_upper_bound, make_hamiltonian, parse_hamiltonian, pauli_decompose,
                                  qudit_to_qubit_encode, shift_to_nonnegative, to_dense_matrix)

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_oracle(n, factors):
    ops = [I2] * n
    for s, p in factors:
        ops[s] = PAULI[p]
    out = np.array([[1.0 + 0j]])
    for o in ops:
        out = np.kron(out, o)
    return out


def dense_oracle(h):
    m = h.energy_offset * np.eye(2 ** h.n, dtype=complex)
    for t in h.terms:
        m = m + t.coefficient * kron_oracle(h.n, t.factors)
    return m


@st.composite
def hamiltonians(draw, n_min=1, n_max=3):
    n = draw(st.integers(n_min, n_max))
    k = draw(st.integers(1, 5))
    terms = []
    for _ in range(k):
        sites = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=min(n, 2), unique=True))
        labels = draw(st.lists(st.sampled_from("XYZ"), min_size=len(sites), max_size=len(sites)))
        coeff = draw(st.floats(-2, 2, allow_nan=False).filter(lambda c: abs(c) > 1e-3))
        terms.append((coeff, tuple(zip(sites, labels))))
    return make_hamiltonian(n, terms)


def test_parse_single_term():
    h = parse_hamiltonian("n=1; 0.5 Z0")
    assert h.n == 1 and len(h.terms) == 1
    assert h.terms[0].coefficient == 0.5 and h.terms[0].factors == ((0, "Z"),)


def test_parse_two_terms_locality():
    h = parse_hamiltonian("n=2; 0.5 Z0; 0.25 X0 X1")
    assert len(h.terms) == 2 and h.k == 2


def test_parse_index_out_of_range():
    with pytest.raises(HamiltonianError, match="out of range"):
        parse_hamiltonian("n=2; 1.0 X0 X3")


def test_parse_reports_line_number():
    with pytest.raises(HamiltonianError) as err:
        parse_hamiltonian("n=2\n0.5 Z0\nabc X1\n")
    assert "line 3" in str(err.value)


def test_parse_conflicting_header():
    with pytest.raises(HamiltonianError, match="conflicting"):
        parse_hamiltonian("n=2; n=3; 1.0 Z0")


def test_parse_merges_identical_support():
    h = parse_hamiltonian("n=2; 0.5 X0 X1; 0.25 X0 X1; 1.0")
    assert len(h.terms) == 1 and h.terms[0].coefficient == 0.75
    assert h.energy_offset == 1.0


def test_term_invariants():
    with pytest.raises(Exception):
        PauliTerm(0.0, ((0, "Z"),))
    with pytest.raises(Exception):
        PauliTerm(1.0, ((1, "Z"), (0, "X")))
    with pytest.raises(HamiltonianError):
        LocalHamiltonian(1, (PauliTerm(1.0, ((3, "Z"),)),))


def test_energy_bound_examples():
    assert energy_upper_bound(make_hamiltonian(1, [(0.5, "Z0")])) == 0.5
    assert energy_upper_bound(make_hamiltonian(2, [(0.5, "Z0"), (0.25, "X0 X1")])) == 0.75


def test_two_term_spectrum_oracle():
    # 0.5 Z0 + 0.25 X0 X1: the two terms anticommute, so eigenvalues are +-sqrt(0.5^2 + 0.25^2)
    h = make_hamiltonian(2, [(0.5, "Z0"), (0.25, "X0 X1")])
    w = np.linalg.eigvalsh(to_dense_matrix(h))
    r = np.sqrt(0.5 ** 2 + 0.25 ** 2)
    assert np.allclose(w, [-r, -r, r, r], atol=1e-12)
    assert np.allclose(w, [-0.559017, -0.559017, 0.559017, 0.559017], atol=1e-6)
    shifted, off = shift_to_nonnegative(h)
    assert off == 0.75
    ws = np.linalg.eigvalsh(to_dense_matrix(shifted))
    assert np.allclose(ws, [0.190983, 0.190983, 1.309017, 1.309017], atol=1e-6)


def test_shift_examples():
    shifted, off = shift_to_nonnegative(make_hamiltonian(1, [(0.5, "Z0")]))
    assert off == 0.5
    assert np.allclose(np.linalg.eigvalsh(to_dense_matrix(shifted)), [0, 1])
    zero, off0 = shift_to_nonnegative(LocalHamiltonian(1))
    assert off0 == 0 and zero.terms == ()


def test_dense_examples():
    assert np.allclose(to_dense_matrix(make_hamiltonian(1, [(0.5, "Z0")])), [[0.5, 0], [0, -0.5]])
    assert np.allclose(to_dense_matrix(make_hamiltonian(1, [(1.0, "X0")])), X)
    xx = to_dense_matrix(make_hamiltonian(2, [(0.25, "X0 X1")]))
    assert np.allclose(xx, 0.25 * np.fliplr(np.eye(4)))


@settings(max_examples=60, deadline=None)
@given(hamiltonians())
def test_dense_matches_kron_oracle_and_is_hermitian(h):
    m = to_dense_matrix(h)
    assert np.abs(m - m.conj().T).max() <= 1e-12
    assert np.allclose(m, dense_oracle(h), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(hamiltonians(2, 3))
def test_shift_moves_spectrum_into_bound(h):
    shifted, off = shift_to_nonnegative(h)
    w0 = np.linalg.eigvalsh(dense_oracle(h))
    w1 = np.linalg.eigvalsh(dense_oracle(shifted))
    assert np.allclose(w1, w0 + off, atol=1e-10)
    e = energy_upper_bound(h)
    assert w1.min() >= -1e-10 and w1.max() <= 2 * e + 1e-10


@settings(max_examples=40, deadline=None)
@given(hamiltonians(1, 2))
def test_pauli_decompose_round_trip(h):
    back = make_hamiltonian(h.n, [(c.real, f) for c, f in pauli_decompose(to_dense_matrix(h), h.n)])
    assert np.allclose(to_dense_matrix(back), to_dense_matrix(h), atol=1e-12)


def test_qudit_d2_is_identity_map():
    h = QuditHamiltonian(1, 2, [((0,), np.diag([0.0, 1.0]))])
    out = qudit_to_qubit_encode(h, penalty=0.5)
    assert out.n == 1
    assert np.allclose(to_dense_matrix(out), np.diag([0.0, 1.0]))


def test_qudit_d3_oracle():
    h = QuditHamiltonian(1, 3, [((0,), np.diag([0.0, 1.0, 2.0]))])
    out = qudit_to_qubit_encode(h, penalty=10.0)
    assert out.n == 2
    assert np.allclose(np.linalg.eigvalsh(to_dense_matrix(out)), [0, 1, 2, 10], atol=1e-10)


def test_qudit_d4_has_no_penalty():
    h = QuditHamiltonian(1, 4, [((0,), np.diag([0.0, 1.0, 2.0, 3.0]))])
    out = qudit_to_qubit_encode(h, penalty=0.1)
    assert np.allclose(np.linalg.eigvalsh(to_dense_matrix(out)), [0, 1, 2, 3])


def test_qudit_penalty_too_small_rejected():
    h = QuditHamiltonian(1, 3, [((0,), np.diag([0.0, 1.0, 2.0]))])
    with pytest.raises(HamiltonianError):
        qudit_to_qubit_encode(h, penalty=1.0)


def test_qudit_low_spectrum_two_sites():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    term = (a + a.conj().T) / 4
    h = QuditHamiltonian(2, 3, [((0, 1), term)])
    pen = h.norm_bound() + 5
    out = np.linalg.eigvalsh(to_dense_matrix(qudit_to_qubit_encode(h, pen)))
    want = np.linalg.eigvalsh(h.dense())
    low = out[out < pen - h.norm_bound() - 1e-9]
    assert len(low) == 9
    assert np.allclose(low, want, atol=1e-10)
