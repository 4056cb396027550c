"""End-to-end compilation stages shared by the CLI and the acceptance suite."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import circuit as cb
from .clock import CouplingSchedule, SectorModel, build_sector_model, coupling_schedule, escalate_schedule
from .hamiltonian import LocalHamiltonian, energy_upper_bound, shift_to_nonnegative, to_dense_matrix
from .sparsify import GridCircuit, IdledCircuit, idle_chi, idling_length, sparsify_to_grid, uncompute_and_idle
from .verify import Encoding, SimulationCheck, check_simulation

MAX_REDUCED_DIM = 1 << 18


class CapExceeded(RuntimeError):
    """The instance is too large to verify at desk scale."""


@dataclass
class Pipeline2D:
    target: LocalHamiltonian
    simulated: LocalHamiltonian  # Pauli part shifted to a nonnegative spectrum; what the clock encodes
    report_offset: float  # subtract from simulator energies to compare with the target
    scale: float
    budget: cb.PrecisionBudget
    pe: cb.PhaseEstimation
    line: cb.Circuit
    grid: GridCircuit
    idled: IdledCircuit
    system: tuple
    ancillas: tuple
    formula_schedule: CouplingSchedule
    schedule: CouplingSchedule
    delta: float
    eta: float
    eps: float
    model: SectorModel = None
    low: np.ndarray = None
    low_vectors: np.ndarray = None
    check: SimulationCheck = None
    timings: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.idled.T

    @property
    def D(self):
        return self.idled.computation_length

    @property
    def chi(self):
        return idle_chi(self.D, self.idled.idle)

    def encoding(self):
        """V|psi> = |psi>|alpha> with alpha = ancillas 0 and the clock uniform over the idle window."""
        n = self.target.n
        alpha_marker = np.ones((1, 1))
        mat = self.model.encoding(self.D)
        return Encoding([np.eye(2)] * n + [alpha_marker], matrix=mat, basis="reduced")

    def hout_on_history(self):
        """<eta_x| H_out |eta_y> for good inputs x, y (the operator H_out restricted to the history space)."""
        m = self.model
        na = len(m.active)
        sys_pos = [m.active.index(q) for q in m.system]
        n = len(m.system)
        idx = []
        for i in range(1 << n):
            x = 0
            for j, pos in enumerate(sys_pos):
                if (i >> (n - 1 - j)) & 1:
                    x |= 1 << (na - 1 - pos)
            idx.append(x)
        out = np.zeros((1 << n, 1 << n), dtype=complex)
        for b, mb in enumerate(m.out_blocks, start=1):
            out += m.e_max * 2.0 ** (-b) * mb[np.ix_(idx, idx)]
        return out


def split_target(h: LocalHamiltonian):
    """Pauli part shifted to [0, 2 E_bound] and the offset relating simulator energies to h."""
    pauli = LocalHamiltonian(h.n, h.terms, 0.0)
    shifted, shift = shift_to_nonnegative(pauli)
    return shifted, shift - h.energy_offset


def build_line_circuit(h: LocalHamiltonian, budget, scale, evolution="auto"):
    pe = cb.build_phase_estimation(h, budget, scale=scale, evolution=evolution)
    lowered = cb.lower_to_two_qubit(pe.circuit)
    lowered = cb.Circuit(lowered.qubit_count, [g for g in lowered.gates if not g.is_identity()])
    line = cb.make_nearest_neighbor(lowered)
    return pe, line


def compile_2d(target: LocalHamiltonian, delta, eta, eps, s_bits=None, p_bits=None, scale=None, e_max=None,
               idle=None, idle_policy="eps", evolution="auto", schedule_start="auto", K=1.0,
               max_dim=MAX_REDUCED_DIM, solve=True) -> Pipeline2D:
    """Compile a target into the spatially sparse clock Hamiltonian and (optionally) solve its low spectrum.

    idle_policy "eps" picks L with chi ||H|| <= eps/4; "eta" picks chi <= 0.9 eta."""
    timings = {}
    t_start = time.perf_counter()
    simulated, offset = split_target(target)
    bound = energy_upper_bound(simulated)
    if e_max is None:
        e_max = 2 * bound if bound > 0 else 1.0
    if scale is None:
        s_guess = s_bits or max(1, math.ceil(math.log2(8 * e_max / eps) - 1e-12))
        scale = e_max * (1 + 2.0 ** (1 - s_guess))
    budget = cb.precision_budget(target.n, eps, scale, s=s_bits, p=p_bits)
    pe, line = build_line_circuit(simulated, budget, scale, evolution)
    grid = sparsify_to_grid(line, prune_identities=True)
    readout = tuple(pe.readout)
    t0 = len(grid.gates)
    D = 2 * t0 + budget.s
    norm_h = float(np.abs(np.linalg.eigvalsh(to_dense_matrix(simulated))).max()) if target.n <= 12 else bound * 2
    if idle is None:
        if idle_policy == "eta":
            idle = idling_length(D, 1.0, 0.9 * eta)
        else:
            idle = idling_length(D, max(norm_h, 1e-300), eps / 4)
    idled = uncompute_and_idle(grid, budget.s, idle, readout)
    timings["compile"] = time.perf_counter() - t_start
    system = tuple(grid.initial[q] for q in range(target.n))
    ancillas = tuple(q for q in range(idled.qubit_count) if q not in set(system))
    formula = coupling_schedule(delta, idled.T, len(ancillas), K=K)
    if schedule_start == "auto":
        schedule_start = "formula" if formula.J_clock < 1e12 else "minimal"
    start = formula if schedule_start == "formula" else CouplingSchedule(2 * delta, 2 * delta, 2 * delta, (0, 0, 0), K)
    sched, _ = escalate_schedule(idled, delta, ancillas, start)
    pipe = Pipeline2D(target, simulated, offset, scale, budget, pe, line, grid, idled, system, ancillas, formula, sched,
                      delta, eta, eps, timings=timings)
    if solve:
        solve_2d(pipe, max_dim=max_dim)
    timings["total"] = time.perf_counter() - t_start
    return pipe


def strengthen_for_eps(pipe: Pipeline2D, factor=2.0, rounds=30):
    """Raise J_prop (keeping the gap certificate) until the simulation error meets eps."""
    for _ in range(rounds):
        if pipe.check is not None and pipe.check.measured_eps <= pipe.eps:
            return pipe
        pipe.schedule = pipe.schedule.scaled(factor, factor, 1.0)
        solve_2d(pipe)
    return pipe


def solve_2d(pipe: Pipeline2D, max_dim=MAX_REDUCED_DIM):
    t = time.perf_counter()
    model = build_sector_model(pipe.idled, pipe.schedule, pipe.scale, pipe.budget.s, pipe.idled.t0,
                               pipe.idled.readout, pipe.system, pipe.ancillas)
    if model.dimension > max_dim:
        raise CapExceeded(f"reduced dimension {model.dimension} exceeds {max_dim}")
    pipe.model = model
    k = (1 << pipe.target.n) + 2
    while True:
        vals, vecs = model.lowest(k, vectors=True)
        if vals[-1] > pipe.delta or k >= model.dimension:
            break
        k *= 2
    pipe.low, pipe.low_vectors = vals, vecs
    complete = min(model.threshold, model.gap.gap)
    pipe.check = check_simulation(pipe.simulated, None, pipe.delta, pipe.eta, pipe.eps, pipe.encoding(),
                                  spectrum=(vals, vecs), complete_below=complete)
    pipe.timings["solve"] = time.perf_counter() - t
    return pipe


def diag_target(energy):
    """1-qubit H = diag(0, E) = E/2 - E/2 Z."""
    from .hamiltonian import make_hamiltonian
    return make_hamiltonian(1, [(-energy / 2, "Z0")], energy_offset=energy / 2)
