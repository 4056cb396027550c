import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from artifact.circuit import Circuit, Gate, apply_circuit, make_nearest_neighbor
from artifact.sparsify import (check_spatial_sparsity, idle_chi, idling_length, sparsify_to_grid,
                               uncompute_and_idle)

X = np.array([[0, 1], [1, 0]], dtype=complex)


def place(state, positions, total):
    """Embed an n-qubit state on the listed qubits of a `total`-qubit register, others |0>."""
    n = len(positions)
    out = np.zeros(2 ** total, dtype=complex)
    for i, a in enumerate(state):
        idx = 0
        for j, q in enumerate(positions):
            if (i >> (n - 1 - j)) & 1:
                idx |= 1 << (total - 1 - q)
        out[idx] = a
    return out


def random_nn_circuit(n, gates, rng):
    out = []
    for _ in range(gates):
        if n > 1 and rng.random() < 0.6:
            q = int(rng.integers(n - 1))
            out.append(Gate((q, q + 1), unitary_group.rvs(4, random_state=rng)))
        else:
            out.append(Gate((int(rng.integers(n)),), unitary_group.rvs(2, random_state=rng)))
    return Circuit(n, out)


def random_state(dim, rng):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def test_single_gate_grid_shape():
    c = Circuit(2, [Gate((0, 1), unitary_group.rvs(4, random_state=0))])
    g = sparsify_to_grid(c)
    assert (g.rows, g.cols) == (2, 1)
    assert not any(x.label == "swap" for x in g.gates)


def test_empty_circuit_grid():
    g = sparsify_to_grid(Circuit(3))
    assert g.cols == 0 and g.gates == []
    cert = check_spatial_sparsity(g)
    assert cert.passed and cert.max_gates_per_qubit == 0


def test_three_gate_grid_matches_line():
    rng = np.random.default_rng(1)
    c = Circuit(3, [Gate((0, 1), unitary_group.rvs(4, random_state=rng)),
                    Gate((1, 2), unitary_group.rvs(4, random_state=rng)),
                    Gate((2,), unitary_group.rvs(2, random_state=rng))])
    g = sparsify_to_grid(c)
    assert (g.rows, g.cols) == (3, 3)
    psi = random_state(8, rng)
    grid_out = apply_circuit(g.as_circuit(), place(psi, g.initial, g.qubit_count))
    want = place(apply_circuit(c, psi), g.final, g.qubit_count)
    assert np.linalg.norm(grid_out - want) <= 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_grid_action_and_sparsity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    c = make_nearest_neighbor(random_nn_circuit(n, int(rng.integers(1, 4)), rng))
    g = sparsify_to_grid(c)
    cert = check_spatial_sparsity(g)
    assert cert.passed and cert.max_gates_per_qubit <= 3 and cert.max_step_distance <= 2
    if g.qubit_count <= 12:
        psi = random_state(2 ** n, rng)
        out = apply_circuit(g.as_circuit(), place(psi, g.initial, g.qubit_count))
        assert np.linalg.norm(out - place(apply_circuit(c, psi), g.final, g.qubit_count)) <= 1e-10


def test_line_circuit_on_one_qubit_fails_sparsity():
    c = Circuit(1, [Gate((0,), X)] * 10)
    cert = check_spatial_sparsity(c)
    assert not cert.passed and cert.max_gates_per_qubit == 10


def test_grid_text_annotations():
    c = Circuit(2, [Gate((0, 1), np.eye(4), "a"), Gate((0,), X, "b")])
    text = sparsify_to_grid(c).text()
    assert text.startswith("GRID 2 2")
    assert "@(0,0) @(1,0) step=0" in text


@pytest.mark.parametrize("d,norm,eps,want", [(10, 1.0, 0.5, 29), (1, 1.0, 0.1, 98), (3, 0.5, 1.0, 0)])
def test_idling_length_examples(d, norm, eps, want):
    assert idling_length(d, norm, eps) == want


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.floats(0.01, 5), st.floats(0.01, 5))
def test_idling_length_is_smallest(d, norm, eps):
    ell = idling_length(d, norm, eps)
    assert idle_chi(d, ell) * norm <= eps * (1 + 1e-12)
    if ell > 0:
        assert idle_chi(d, ell - 1) * norm > eps


def test_uncompute_trivial():
    idled = uncompute_and_idle(Circuit(1), 1, 0)
    assert idled.T == 1 and idled.gates[0].is_identity()


def test_uncompute_self_inverse_gate():
    idled = uncompute_and_idle(Circuit(1, [Gate((0,), X, "x")]), 1, 2)
    mats = [g.matrix for g in idled.gates]
    assert len(mats) == 5
    for m, want in zip(mats, [X, np.eye(2), X, np.eye(2), np.eye(2)]):
        assert np.allclose(m, want)
    assert idled.window == (2,) and idled.computation_length == 3


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_uncompute_is_identity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    c = random_nn_circuit(n, 3, rng)
    s, ell = int(rng.integers(1, n + 1)), int(rng.integers(0, 4))
    idled = uncompute_and_idle(c, s, ell)
    assert idled.T == 2 * len(c.gates) + s + ell
    psi = random_state(2 ** n, rng)
    assert np.linalg.norm(apply_circuit(idled, psi) - psi) <= 1e-10


def test_uncompute_on_grid_reads_relocated_qubits():
    rng = np.random.default_rng(2)
    c = random_nn_circuit(2, 3, rng)
    g = sparsify_to_grid(make_nearest_neighbor(c))
    idled = uncompute_and_idle(g, 2, 1, readout=(0, 1))
    assert idled.readout == tuple(g.final[:2])
    assert math.isclose(idle_chi(idled.computation_length, 1),
                        math.sqrt(idled.computation_length / (idled.computation_length + 2)))
