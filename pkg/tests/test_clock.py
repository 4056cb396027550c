import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from artifact.circuit import Circuit, Gate
from artifact.clock import (ClockError, CouplingSchedule, assemble_circuit_hamiltonian, build_clock_term,
                            build_input_term, build_output_penalty, build_prop_term, build_sector_model,
                            clock_index, coo_dump, coupling_schedule, escalate_schedule, first_use_times,
                            h0_gap, history_state, sector_invariance_residual)

X = np.array([[0, 1], [1, 0]], dtype=complex)
CNOT = np.eye(4)[[0, 1, 3, 2]].astype(complex)


def legal_clocks(T):
    return {format(clock_index(t, T), f"0{T}b") for t in range(T + 1)}


def clock_oracle(T):
    """Diagonal of sum |01><01| built by counting '01' substrings of each bit string."""
    return np.array([format(i, f"0{T}b").count("01") for i in range(2 ** T)], dtype=float)


def ancilla_circuit(rng):
    """Qubit 1 is an ancilla first touched by the CNOT at t=2."""
    return Circuit(2, [Gate((0,), unitary_group.rvs(2, random_state=rng)), Gate((0, 1), CNOT),
                       Gate((0,), unitary_group.rvs(2, random_state=rng))])


def test_clock_kernel_t2():
    w = np.linalg.eigvalsh(build_clock_term(2).toarray())
    assert np.sum(np.abs(w) < 1e-12) == 3


def test_clock_kernel_t3_is_unary():
    d = build_clock_term(3).toarray()
    assert np.allclose(d, np.diag(np.diag(d)))
    kernel = {format(i, "03b") for i in range(8) if abs(d[i, i]) < 1e-12}
    assert kernel == {"000", "100", "110", "111"} == legal_clocks(3)


@pytest.mark.parametrize("T", range(1, 11))
def test_clock_term_matches_counting_oracle(T):
    d = build_clock_term(T)
    assert np.allclose(d.diagonal().real, clock_oracle(T))
    nz = clock_oracle(T)
    assert (nz[nz > 0].min() if (nz > 0).any() else 1.0) == 1.0


def test_clock_term_rejects_empty():
    with pytest.raises(ClockError):
        build_clock_term(0)


def test_prop_annihilates_single_x_history():
    c = Circuit(1, [Gate((0,), X)])
    eta = history_state(c, [1, 0]).vector
    assert np.allclose(eta, [1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2)])
    assert np.linalg.norm(build_prop_term(c) @ eta) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_prop_annihilates_random_history(seed):
    rng = np.random.default_rng(seed)
    c = Circuit(2, [Gate((0, 1), unitary_group.rvs(4, random_state=rng)),
                    Gate((1,), unitary_group.rvs(2, random_state=rng))])
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    eta = history_state(c, v / np.linalg.norm(v)).vector
    hp = build_prop_term(c)
    assert np.linalg.norm(hp @ eta) <= 1e-10
    assert np.linalg.eigvalsh(hp.toarray()).min() >= -1e-10


@pytest.mark.parametrize("T", range(2, 9))
def test_prop_gap_on_legal_clocks(T):
    rng = np.random.default_rng(T)
    c = Circuit(1, [Gate((0,), unitary_group.rvs(2, random_state=rng)) for _ in range(T)])
    hp = build_prop_term(c).toarray()
    legal = [x * 2 ** T + clock_index(t, T) for x in range(2) for t in range(T + 1)]
    w = np.linalg.eigvalsh(hp[np.ix_(legal, legal)])
    lam1 = w[w > 1e-10].min()
    assert lam1 == pytest.approx(2 - 2 * math.cos(math.pi / (T + 1)), abs=1e-10)
    assert lam1 * T ** 2 >= 1.0


def test_input_term_without_ancillas_is_zero():
    c = Circuit(1, [Gate((0,), X)])
    assert build_input_term(c, ()).nnz == 0


def test_input_term_expectations():
    c = Circuit(2, [Gate((0, 1), CNOT), Gate((0,), X)])
    assert first_use_times(c, (1,)) == {1: 1}
    hi = build_input_term(c, (1,))
    T = 2
    bad = history_state(c, [0, 1, 0, 0]).vector  # ancilla prepared in |1>
    good = history_state(c, [1, 0], ancillas=(1,)).vector
    assert np.vdot(bad, hi @ bad).real == pytest.approx(1 / (T + 1))
    assert abs(np.vdot(good, hi @ good)) <= 1e-14


def test_never_used_ancilla_penalized_at_all_times():
    c = Circuit(2, [Gate((0,), X)])
    assert first_use_times(c, (1,)) == {1: None}
    bad = history_state(c, [0, 1, 0, 0]).vector
    assert np.vdot(bad, build_input_term(c, (1,)) @ bad).real == pytest.approx(1.0)


def test_output_penalty_single_bit_weight():
    T, e_max = 3, 2.0
    ho = build_output_penalty(e_max, T, 1, 1, (0,), 1).toarray()
    assert ho.max() == pytest.approx((T + 1) * e_max / 2)


@pytest.mark.parametrize("s", [1, 2, 3])
def test_output_penalty_norm_bound(s):
    T, e_max = 4, 1.5
    ho = build_output_penalty(e_max, T, s, 0, tuple(range(s)), s).toarray()
    assert np.abs(np.linalg.eigvalsh(ho)).max() <= (T + 1) * e_max * (1 - 2.0 ** -s) + 1e-12


def test_output_penalty_rejects_overflow():
    with pytest.raises(ClockError):
        build_output_penalty(1.0, 2, 2, 1, (0, 1), 2)


def test_coupling_schedule_example():
    js = coupling_schedule(1.0, 3, 1)
    assert js.J_in == 4
    assert js.J_prop == 9 * 16
    assert js.J_clock == 9 * 144 ** 2
    with pytest.raises(ClockError):
        coupling_schedule(0.0, 3, 1)


def test_history_states_orthonormal():
    rng = np.random.default_rng(3)
    c = Circuit(2, [Gate((0, 1), unitary_group.rvs(4, random_state=rng))])
    etas = np.array([history_state(c, np.eye(4)[i]).vector for i in range(4)])
    assert np.allclose(etas.conj() @ etas.T, np.eye(4), atol=1e-12)


def test_history_state_of_empty_circuit():
    eta = history_state(Circuit(1), [0, 1]).vector
    assert np.allclose(eta, [0, 1])


def dense_h0_gap(c, schedule, ancillas):
    ham = assemble_circuit_hamiltonian(c, 1.0, schedule, ancillas=ancillas)
    w = np.linalg.eigvalsh(ham.H0.toarray())
    free = c.qubit_count - len(ancillas)
    assert np.all(np.abs(w[:2 ** free]) <= 1e-9)
    return w[2 ** free]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 4), st.floats(0.5, 4), st.floats(0.5, 4))
def test_gap_formula_matches_dense(seed, a, b, cl):
    c = ancilla_circuit(np.random.default_rng(seed))
    js = CouplingSchedule(a, b, cl)
    assert h0_gap(c, js, (1,)).gap == pytest.approx(dense_h0_gap(c, js, (1,)), rel=1e-9)


def test_escalation_reaches_target_gap():
    c = ancilla_circuit(np.random.default_rng(0))
    delta = 3.0
    js, rep = escalate_schedule(c, delta, (1,), CouplingSchedule(2 * delta, 2 * delta, 2 * delta))
    assert rep.gap >= 2 * delta
    assert dense_h0_gap(c, js, (1,)) >= 2 * delta * (1 - 1e-9)


def test_h0_annihilates_history_states():
    c = ancilla_circuit(np.random.default_rng(5))
    ham = assemble_circuit_hamiltonian(c, 1.0, ancillas=(1,))
    for i in range(2):
        eta = history_state(c, np.eye(2)[i], ancillas=(1,)).vector
        assert np.linalg.norm(ham.H0 @ eta) <= 1e-9 * ham.schedule.J_clock


def window_circuit(last):
    rng = np.random.default_rng(7)
    return Circuit(2, [Gate((0, 1), unitary_group.rvs(4, random_state=rng)), Gate((0, 1), CNOT),
                       Gate((1,), last)])


def sector_pair(c):
    js = CouplingSchedule(6.0, 8.0, 40.0)
    full = assemble_circuit_hamiltonian(c, 1.0, js, e_max=0.5, s=1, t0=2, bit_sites=(1,))
    return full, build_sector_model(c, js, 0.5, 1, 2, (1,), (0, 1), ())


def test_sector_model_matches_full_operator():
    full, model = sector_pair(window_circuit(np.eye(2)))
    assert sector_invariance_residual(model, full, ()) <= 1e-9
    w_full = np.linalg.eigvalsh(full.matrix.toarray())
    assert np.allclose(model.lowest(k=4), w_full[:4], atol=1e-9)


def test_sector_residual_flags_busy_readout_window():
    full, model = sector_pair(window_circuit(X))
    assert sector_invariance_residual(model, full, ()) > 1e-3


def test_coo_dump_is_sorted():
    text = coo_dump(build_clock_term(3))
    rows = [tuple(map(int, line.split()[:2])) for line in text.splitlines()]
    assert rows == sorted(rows) and len(rows) == 4
    assert coo_dump(build_clock_term(1)) == ""
