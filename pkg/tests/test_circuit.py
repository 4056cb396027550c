import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from artifact import circuit as cb
from artifact.hamiltonian import make_hamiltonian, shift_to_nonnegative, to_dense_matrix
from artifact.verify import pe_failure_rate

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def random_shifted(n, rng, terms=3):
    out = []
    for _ in range(terms):
        w = int(rng.integers(1, n + 1))
        sites = sorted(rng.choice(n, w, replace=False).tolist())
        out.append((float(rng.uniform(-1, 1)), tuple((s, "XYZ"[int(rng.integers(3))]) for s in sites)))
    h, _ = shift_to_nonnegative(make_hamiltonian(n, out))
    return h


def test_budget_formula_values():
    b = cb.precision_budget(1, 0.1, 1.5)
    assert b.s == 7 == math.ceil(math.log2(120))
    assert b.zeta == pytest.approx(0.1 / (16 * 7 * 1.5))
    assert b.zeta == pytest.approx(5.95e-4, rel=1e-3)
    assert b.p == 2 * 7 + math.ceil(math.log2(1 / b.zeta))
    assert b.finite_bit + b.trotter + b.synthesis <= b.zeta * (1 + 1e-12)


def test_budget_rejects_degenerate_precision():
    with pytest.raises(cb.CircuitError):
        cb.precision_budget(1, 8 * 1.0, 1.0)
    with pytest.raises(cb.CircuitError):
        cb.PrecisionBudget(s=3, p=3, zeta=0.1, finite_bit=0.1, trotter=0.0)


def test_window_bound_for_four_guard_bits():
    b = cb.precision_budget(1, 0.1, 1.0, s=3, p=7)
    assert b.window_miss_bound() == pytest.approx(1 / 28)


def test_gate_rejects_non_unitary():
    with pytest.raises(cb.CircuitError):
        cb.Gate((0,), np.array([[1, 1], [0, 1]]))
    with pytest.raises(cb.CircuitError):
        cb.Gate((1, 1), np.eye(4))


def product_formula_oracle(h, t, r):
    """Independent first-order product formula from per-term expm."""
    dim = 2 ** h.n
    step = np.eye(dim, dtype=complex)
    for term in h.terms:
        p = to_dense_matrix(make_hamiltonian(h.n, [(1.0, term.factors)]))
        step = sla.expm(-1j * term.coefficient * t / r * p) @ step
    return np.exp(-1j * h.energy_offset * t) * np.linalg.matrix_power(step, r)


def test_single_term_has_no_trotter_error():
    h = make_hamiltonian(1, [(0.7, "X0")])
    assert cb.trotter_constant(h) == 0
    assert cb.trotter_error(h, 1.3, 1) < 1e-12


def test_commuting_terms_have_no_trotter_error():
    h = make_hamiltonian(2, [(0.3, "Z0"), (0.4, "Z1")])
    for r in (1, 2, 5):
        assert cb.trotter_error(h, 2.0, r) < 1e-12


def test_trotter_halves_on_two_term_example():
    h = make_hamiltonian(2, [(0.5, "Z0"), (0.25, "X0 X1")])
    exact = sla.expm(-1j * to_dense_matrix(h))
    e1 = np.linalg.norm(product_formula_oracle(h, 1.0, 1) - exact, 2)
    e2 = np.linalg.norm(product_formula_oracle(h, 1.0, 2) - exact, 2)
    assert cb.trotter_error(h, 1.0, 1) == pytest.approx(e1, abs=1e-12)
    assert 1.5 <= e1 / e2 <= 4


def test_controlled_evolution_matches_product_formula():
    h = make_hamiltonian(2, [(0.5, "Z0"), (0.25, "X0 X1")], energy_offset=0.75)
    plan = cb.make_trotter_plan(h, 2, 2.0, reps=(3, 5))
    for j in (1, 2):
        c = cb.trotterized_controlled_evolution(h, plan, control=2, j=j, qubit_count=3)
        u = cb.circuit_unitary(c)
        # control is the least significant qubit here; pick the control=1 block
        idx1 = [i for i in range(8) if i & 1]
        idx0 = [i for i in range(8) if not i & 1]
        want = product_formula_oracle(h, plan.taus[j - 1], plan.reps[j - 1])
        assert np.allclose(u[np.ix_(idx1, idx1)], want, atol=1e-10)
        assert np.allclose(u[np.ix_(idx0, idx0)], np.eye(4), atol=1e-12)
        err = np.linalg.norm(want - sla.expm(-1j * plan.taus[j - 1] * to_dense_matrix(h)), 2)
        assert err <= plan.advertised_error()[j - 1] + 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_trotter_scaling_law(seed):
    rng = np.random.default_rng(seed)
    h = random_shifted(int(rng.integers(2, 4)), rng, terms=4)
    if cb.trotter_constant(h) == 0:
        return
    t = float(rng.uniform(0.05, 0.3))
    ratio = cb.trotter_error(h, t, 4) / cb.trotter_error(h, t, 8)
    assert 1.5 <= ratio <= 4


def test_pe_exact_phase_reads_zero_with_certainty():
    h = make_hamiltonian(1, [(-0.5, "Z0")], energy_offset=0.5)  # |1><1|
    budget = cb.precision_budget(1, 0.1, 1.0, s=3, p=5)
    pe = cb.build_phase_estimation(h, budget, scale=2.0)
    out = cb.apply_circuit(pe.circuit, np.kron([1, 0], np.eye(32)[:, 0]))
    probs = np.abs(out.reshape(2, 32)) ** 2
    assert probs[0, 0] == pytest.approx(1.0, abs=1e-12)
    out = cb.apply_circuit(pe.circuit, np.kron([0, 1], np.eye(32)[:, 0]))
    probs = np.abs(out.reshape(2, 32)) ** 2
    assert probs[1, 16] == pytest.approx(1.0, abs=1e-12)  # phi = 1/2 -> top bit set


def test_pe_readout_bits_on_shifted_z():
    h, _ = shift_to_nonnegative(make_hamiltonian(1, [(0.5, "Z0")]))
    budget = cb.precision_budget(1, 0.1, 1.0, s=3, p=8)
    pe = cb.build_phase_estimation(h, budget)
    rep = pe_failure_rate(pe, h)
    assert rep.passed
    w, v = np.linalg.eigh(to_dense_matrix(h))
    for mu in range(2):
        out = cb.apply_circuit(pe.circuit, np.kron(v[:, mu], np.eye(2 ** 8)[:, 0]))
        _, marg = cb.window_probabilities(pe, out, w[mu])
        top = int(math.floor(w[mu] / pe.scale * 8 + 1e-9))
        near = [top % 8, (top + 1) % 8, (top - 1) % 8]
        assert marg[near].sum() >= 1 - budget.window_miss_bound() - 2 * budget.zeta


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_pe_window_property(seed):
    rng = np.random.default_rng(seed)
    h = random_shifted(2, rng)
    scale = cb.pe_scale(h, 3)
    budget = cb.precision_budget(2, 0.1 * scale, scale, s=3, p=7)
    rep = pe_failure_rate(cb.build_phase_estimation(h, budget, scale=scale), h)
    assert rep.worst <= rep.bound + 2 * rep.zeta


def test_pe_uses_p_ancillas():
    h = random_shifted(2, np.random.default_rng(4))
    budget = cb.precision_budget(2, 0.3, 2.0, s=2, p=5)
    pe = cb.build_phase_estimation(h, budget)
    assert pe.circuit.qubit_count == 2 + 5
    assert pe.readout == pe.ancillas[:2]


def test_nearest_neighbor_far_gate():
    u = unitary_group.rvs(4, random_state=3)
    c = cb.Circuit(4, [cb.Gate((0, 3), u, "far")])
    nn = cb.make_nearest_neighbor(c)
    assert nn.is_nearest_neighbor()
    assert len(nn.gates) == 5
    assert sum(g.label == "swap" for g in nn.gates) == 4
    assert np.allclose(cb.circuit_unitary(nn), cb.circuit_unitary(c), atol=1e-12)


def test_nearest_neighbor_leaves_local_circuits_alone():
    c = cb.Circuit(3, [cb.Gate((0,), X), cb.Gate((1, 2), np.eye(4)[[0, 1, 3, 2]], "cnot"), cb.Gate((2,), Z)])
    nn = cb.make_nearest_neighbor(c)
    assert [g.label for g in nn.gates] == [g.label for g in c.gates]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_nearest_neighbor_preserves_action(seed):
    rng = np.random.default_rng(seed)
    n = 4
    gates = []
    for _ in range(5):
        a, b = rng.choice(n, 2, replace=False)
        gates.append(cb.Gate((int(a), int(b)), unitary_group.rvs(4, random_state=rng)))
    c = cb.Circuit(n, gates)
    nn = cb.make_nearest_neighbor(c)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi /= np.linalg.norm(psi)
    assert np.linalg.norm(cb.apply_circuit(nn, psi) - cb.apply_circuit(c, psi)) <= 1e-10


def test_lowering_preserves_pe_unitary():
    h = random_shifted(2, np.random.default_rng(6))
    budget = cb.precision_budget(2, 0.5, 2.0, s=2, p=3)
    pe = cb.build_phase_estimation(h, budget, evolution="trotter", reps=(2, 2, 2))
    low = cb.lower_to_two_qubit(pe.circuit)
    assert all(g.arity <= 2 for g in low.gates)
    assert cb.phase_distance(cb.circuit_unitary(low), cb.circuit_unitary(pe.circuit)) <= 1e-9


def test_apply_circuit_basics():
    psi = np.array([1, 0], dtype=complex)
    assert np.allclose(cb.apply_circuit(cb.Circuit(1), psi), psi)
    assert np.allclose(cb.apply_circuit(cb.Circuit(1, [cb.Gate((0,), X)]), psi), [0, 1])
    with pytest.raises(Exception):
        cb.apply_circuit(cb.Circuit(2, [cb.Gate((0,), X)]), psi)


def test_circuit_text_round_trip():
    rng = np.random.default_rng(8)
    c = cb.Circuit(3, [cb.Gate((0, 2), unitary_group.rvs(4, random_state=rng), "a"),
                       cb.Gate((1,), unitary_group.rvs(2, random_state=rng), "b")])
    back = cb.parse_circuit_text(c.text())
    assert back.text() == c.text()
    assert np.allclose(cb.circuit_unitary(back), cb.circuit_unitary(c), atol=1e-15)


def test_synthesis_of_base_and_identity_gates():
    c, rep = cb.synthesize_discrete(cb.Circuit(1, [cb.Gate((0,), cb.H_GATE)]), 1e-2)
    assert rep == [0.0] and len(c.gates) == 1
    c, rep = cb.synthesize_discrete(cb.Circuit(1, [cb.Gate((0,), np.eye(2))]), 1e-2)
    assert c.gates == [] and rep == [0.0]


def test_synthesis_of_random_two_qubit_gate():
    u = unitary_group.rvs(4, random_state=1)
    c, rep = cb.synthesize_discrete(cb.Circuit(2, [cb.Gate((0, 1), u)]), 1e-2)
    assert rep[0] <= 1e-2
    assert {g.label for g in c.gates} <= {"H", "T", "cnot"}
    assert cb.phase_distance(cb.circuit_unitary(c), u) <= 1e-2
