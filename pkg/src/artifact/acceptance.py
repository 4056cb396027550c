"""Acceptance checks 1-8, shared by `artifact verify --acceptance` and tests/test_acceptance.py."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import circuit as cb
from .hamiltonian import LocalHamiltonian, make_hamiltonian, shift_to_nonnegative, to_dense_matrix

PAULIS = "XYZ"


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    unverifiable: bool = False
    data: dict = field(default_factory=dict)

    @property
    def status(self):
        if self.unverifiable:
            return "UNVERIFIABLE"
        return "PASS" if self.passed else "FAIL"

    def line(self):
        return f"criterion {self.number} [{self.status}] {self.title}: {self.detail} ({self.seconds:.1f}s)"


def random_pauli_hamiltonian(n, rng, terms=None, max_weight=2, real=False):
    """Random k-local Pauli sum on n qubits; real=True keeps only even-Y strings."""
    terms = terms or 2 * n + 1
    out = []
    while len(out) < terms:
        w = int(rng.integers(1, min(max_weight, n) + 1))
        sites = sorted(rng.choice(n, size=w, replace=False).tolist())
        labs = [PAULIS[int(rng.integers(3))] for _ in sites]
        if real and labs.count("Y") % 2:
            continue
        out.append((float(rng.uniform(-1, 1)), tuple(zip(sites, labs))))
    return make_hamiltonian(n, out)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ------------------------------------------------------------------ 1: phase estimation window

@_timed
def criterion_pe_bound(instances=10, s=3, p=7, seed=1):
    """Window miss probability per eigenstate against 1/(2(2^(p-s)-2)) + 2 zeta."""
    from .verify import pe_failure_rate
    rng = np.random.default_rng(seed)
    worst_ratio, slow, rows = 0.0, 0.0, []
    ok = True
    for i in range(instances):
        n = 1 + i % 2
        h, _ = shift_to_nonnegative(random_pauli_hamiltonian(n, rng))
        scale = cb.pe_scale(h, s)
        budget = cb.precision_budget(n, 0.1 * scale, scale, s=s, p=p)
        t = time.perf_counter()
        pe = cb.build_phase_estimation(h, budget, scale=scale)
        rep = pe_failure_rate(pe, h)
        dt = time.perf_counter() - t
        slow = max(slow, dt)
        limit = rep.bound + 2 * rep.zeta
        rows.append((n, rep.worst, limit, dt))
        worst_ratio = max(worst_ratio, rep.worst / limit)
        ok &= rep.passed and dt < 60
    return CriterionResult(1, "phase-estimation window bound", ok,
                           f"{instances} instances, worst miss/bound = {worst_ratio:.3f}, slowest {slow:.2f}s",
                           data={"rows": rows})


# ------------------------------------------------------------------ 2: Trotter scaling

@_timed
def criterion_trotter_law(instances=10, seed=2, lo=1.5, hi=4.0):
    """||u~_j - u_j|| ratio when r_j doubles, for noncommuting random instances."""
    rng = np.random.default_rng(seed)
    ratios = []
    while len(ratios) < instances:
        h = random_pauli_hamiltonian(2, rng, terms=4)
        if cb.trotter_constant(h) == 0:
            continue
        scale = cb.pe_scale(h, 3)
        plan = cb.make_trotter_plan(h, 4, scale, budget=1e-2)
        j = int(rng.integers(1, len(plan.taus) + 1))
        t, r = plan.taus[j - 1], plan.reps[j - 1]
        e1, e2 = cb.trotter_error(h, t, r), cb.trotter_error(h, t, 2 * r)
        ratios.append(e1 / e2)
    ok = all(lo <= x <= hi for x in ratios)
    return CriterionResult(2, "Trotter error halves when r doubles", ok,
                           f"ratios in [{min(ratios):.3f}, {max(ratios):.3f}]", data={"ratios": ratios})


# ------------------------------------------------------------------ 3: history-state groundspace

def random_circuit(n, T, rng):
    from scipy.stats import unitary_group
    gates = []
    for _ in range(T):
        if n >= 2 and rng.random() < 0.5:
            q = int(rng.integers(n - 1))
            qs = (q, q + 1)
        else:
            qs = (int(rng.integers(n)),)
        gates.append(cb.Gate(qs, unitary_group.rvs(1 << len(qs), random_state=rng), "random"))
    return cb.Circuit(n, gates)


@_timed
def criterion_history_groundspace(instances=8, seed=3, delta=1.0, tol=1e-10):
    from .clock import CouplingSchedule, assemble_circuit_hamiltonian, escalate_schedule, history_state
    from .verify import check_groundspace_history
    rng = np.random.default_rng(seed)
    worst_res, worst_gap, ok = 0.0, math.inf, True
    for i in range(instances):
        n = 1 + i % 3
        T = 1 + int(rng.integers(6))
        c = random_circuit(n, T, rng)
        ancillas = tuple(range(1, n)) if n > 1 and i % 2 else ()
        start = CouplingSchedule(2 * delta, 2 * delta, 2 * delta)
        sched, _ = escalate_schedule(c, delta, ancillas, start)
        ham = assemble_circuit_hamiltonian(c, delta, sched, ancillas=ancillas)
        free = n - len(ancillas)
        states = [history_state(c, np.eye(1 << free)[k], ancillas) for k in range(1 << free)]
        rep = check_groundspace_history(ham.H0, states, delta, tol)
        worst_res = max(worst_res, rep.residual)
        worst_gap = min(worst_gap, rep.gap / (2 * delta))
        ok &= rep.passed
    return CriterionResult(3, "history states span the groundspace", ok,
                           f"max residual {worst_res:.2e}, min gap/(2 delta) = {worst_gap:.3f}")


# ------------------------------------------------------------------ 4: end-to-end 2D simulation

CRITERION4_CONFIG = dict(delta=20.0, eta=0.3, eps=0.1, s_bits=3, p_bits=4, scale=2.0, idle_policy="eta",
                         schedule_start="minimal")


@_timed
def criterion_end_to_end(fractions=(0.25, 0.5, 1.0), e_max=1.0, config=None, time_limit=600.0):
    from .pipeline import MAX_REDUCED_DIM, compile_2d, diag_target
    cfg = dict(CRITERION4_CONFIG, **(config or {}))
    tol = 0.1 * e_max
    ok, parts, rows = True, [], []
    for f in fractions:
        energy = f * e_max
        t = time.perf_counter()
        pipe = compile_2d(diag_target(energy), e_max=e_max, **cfg)
        dt = time.perf_counter() - t
        low = pipe.low[:2] - pipe.report_offset
        err = float(np.abs(low - [0.0, energy]).max())
        dim = pipe.model.dimension
        good = err <= tol and pipe.check.passed and dim <= MAX_REDUCED_DIM and dt < time_limit
        ok &= good
        rows.append({"E": energy, "low": low.tolist(), "error": err, "dimension": dim, "T": pipe.T,
                     "eta": pipe.check.measured_eta, "eps": pipe.check.measured_eps, "seconds": dt})
        parts.append(f"E={energy:g}: err {err:.3g}, dim {dim}, {dt:.0f}s")
    return CriterionResult(4, "2D simulation of diag(0, E)", ok, "; ".join(parts), data={"rows": rows})


# ------------------------------------------------------------------ 5: idling

@_timed
def criterion_idling(seed=5, eps=0.2, instances=6):
    from .sparsify import idling_length
    from .verify import check_idling_bound, idling_effective_hamiltonian
    rng = np.random.default_rng(seed)
    eq_err, ok, detail = 0.0, True, []
    for i in range(instances):
        D, L = int(rng.integers(1, 6)), int(rng.integers(0, 8))
        if i % 2 == 0:
            h = np.diag(rng.uniform(-1, 1, size=2))
        else:
            h = to_dense_matrix(random_pauli_hamiltonian(1, rng, terms=3))
        rep = check_idling_bound(idling_effective_hamiltonian(h, D, L), h, D, L)
        ok &= rep.passed
        if i % 2 == 0:
            eq_err = max(eq_err, rep.equality_error)
    ok &= eq_err <= 1e-8
    detail.append(f"equality error {eq_err:.1e}")
    h = np.diag([-0.7, 0.4])
    norm = float(np.abs(np.linalg.eigvalsh(h)).max())
    D = 3
    L = idling_length(D, norm, eps / 4)
    rep = check_idling_bound(idling_effective_hamiltonian(h, D, L), h, D, L)
    ok &= rep.measured <= eps / 4 + 1e-12
    detail.append(f"L={L} gives {rep.measured:.4f} <= eps/4={eps / 4:g}")
    return CriterionResult(5, "idling error chi max|E|", ok, ", ".join(detail))


# ------------------------------------------------------------------ 6: 1D chain

@_timed
def criterion_1d_chain(lengths=(1, 2, 3), deltas=(1e2, 1e3, 1e4), e_max=1.0, tol=1e-10):
    from .chain import (block_spectrum, build_1d_output_penalty, build_history_hamiltonian, encoded_history_state,
                        escalate_chain, idling_split, label_components, output_sites)
    ok, parts = True, []
    n, R = 1, 1
    target = np.array([0.0, e_max / 2])  # one energy bit carried by the qubit itself: diag(0, E_max/2)
    for L in lengths:
        ham = build_history_hamiltonian(None, n, R, L)
        comps = label_components(ham)
        ham, _ = escalate_chain(ham, 1 << n, 1.0, components=comps)
        K = ham.K
        mat = ham.matrix()
        res, chi_err = 0.0, 0.0
        for x in range(1 << n):
            eta, cfgs = encoded_history_state(None, np.eye(1 << n)[x], n, R, L)
            res = max(res, float(np.linalg.norm(mat @ eta)))
            ok &= len(cfgs) == K + L + 1
            _, chi = idling_split(cfgs, L)
            chi_err = max(chi_err, abs(chi - math.sqrt((K + 1) / (K + L + 1))))
        hout = build_1d_output_penalty(e_max, K, L, 1, output_sites(n, 0, 1), ham.nsites)
        errs = []
        for d in deltas:
            low = block_spectrum(2 * d * mat + hout, comps, k=2)
            errs.append(float(np.abs(low - target).max()))
        ok &= res <= tol and K == 2 * n and chi_err <= 1e-12 and max(errs) <= 0.15 * e_max
        parts.append(f"L={L}: K={K}, residual {res:.1e}, chi err {chi_err:.1e}, low err {max(errs):.3f}")
    return CriterionResult(6, "1D chain history states and low sector", ok, "; ".join(parts))


# ------------------------------------------------------------------ 7: gadgets

def _monotone(errs, floor, slack=0.1):
    eff = [e if e > floor else 0.0 for e in errs]
    return all(b <= a * (1 + slack) for a, b in zip(eff, eff[1:]))


@_timed
def criterion_gadgets(deltas=(1e2, 1e3, 1e4), seed=7):
    from .gadgets import complex_to_real, map_to_S0, reduce_to_2local, remove_Y_terms
    rng = np.random.default_rng(seed)
    exact = 0.0
    for i in range(6):
        h = random_pauli_hamiltonian(1 + i % 2, rng)
        exact = max(exact, complex_to_real(h, 10 * max(1.0, h.norm_bound())).spectral_error())
    ok = exact <= 1e-10
    parts = [f"complex_to_real max error {exact:.1e}"]
    cases = [("remove_Y_terms", make_hamiltonian(2, [(1.0, "Y0 Y1")]), remove_Y_terms),
             ("reduce_to_2local", make_hamiltonian(3, [(1.0, "Z0 Z1 Z2")]), reduce_to_2local),
             ("map_to_S0", make_hamiltonian(1, [(0.5, "Z0")]), map_to_S0),
             ("map_to_S0 two-qubit", make_hamiltonian(2, [(0.3, "Z0"), (0.4, "X0 X1"), (-0.2, "Z0 Z1")]),
              map_to_S0)]
    series = {}
    for name, h, stage in cases:
        errs, floor = [], 0.0
        for d in deltas:
            st = stage(h, d)
            errs.append(st.spectral_error())
            # below this the error is eigensolver round-off on a norm-Delta matrix, not gadget physics
            floor = max(floor, 1e3 * np.finfo(float).eps * st.output.norm_bound())
        series[name] = errs
        mono = _monotone(errs, floor)
        ok &= mono
        parts.append(f"{name} " + "/".join(f"{e:.1e}" for e in errs) + ("" if mono else " (not monotone)"))
    return CriterionResult(7, "gadget stages", ok, "; ".join(parts), data=series)


# ------------------------------------------------------------------ 8: projection sandwich

@_timed
def criterion_projection_sandwich(instances=20, seed=8, tol=1e-10):
    from scipy.stats import unitary_group
    from .verify import projection_sandwich
    rng = np.random.default_rng(seed)
    ok, worst = True, math.inf
    for _ in range(instances):
        d = int(rng.integers(4, 13))
        k = int(rng.integers(1, d))
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h1 = (a + a.conj().T) / 4
        u = unitary_group.rvs(d, random_state=rng)
        n1 = np.linalg.norm(h1, 2)
        j = 2 * n1 + float(rng.uniform(0.5, 20))
        levels = np.concatenate([np.zeros(k), j + rng.uniform(0, 5, size=d - k)])
        h2 = u @ np.diag(levels) @ u.conj().T
        lower, lam, upper = projection_sandwich(h1, h2, u[:, :k])
        ok &= lower - tol <= lam <= upper + tol
        worst = min(worst, lam - lower, upper - lam)
    return CriterionResult(8, "projection sandwich", ok, f"{instances} instances, min slack {worst:.2e}")


ALL_CRITERIA = (criterion_pe_bound, criterion_trotter_law, criterion_history_groundspace, criterion_end_to_end,
                criterion_idling, criterion_1d_chain, criterion_gadgets, criterion_projection_sandwich)


def run_all(skip=(), stream=None):
    out = []
    for i, fn in enumerate(ALL_CRITERIA, start=1):
        if i in skip:
            continue
        try:
            res = fn()
        except Exception as exc:  # a crash is a failure, not a skipped line
            res = CriterionResult(i, fn.__name__, False, f"error: {exc!r}")
        out.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return out
