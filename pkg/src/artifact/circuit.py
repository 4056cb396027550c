"""Gate-model circuits: phase estimation with Trotterized evolution, swap routing and simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .hamiltonian import PAULI, LocalHamiltonian, pauli_string_sparse

I2 = np.eye(2, dtype=complex)
H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S_GATE = np.diag([1, 1j]).astype(complex)
T_GATE = np.diag([1, np.exp(1j * math.pi / 4)]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


class CircuitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Gate:
    targets: tuple
    matrix: np.ndarray
    label: str = "gate"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        tg = tuple(int(t) for t in self.targets)
        m = np.asarray(self.matrix, dtype=complex)
        if len(set(tg)) != len(tg):
            raise CircuitError(f"gate targets must be distinct: {tg}")
        if m.shape != (2 ** len(tg),) * 2:
            raise CircuitError(f"matrix shape {m.shape} does not fit targets {tg}")
        if np.abs(m.conj().T @ m - np.eye(len(m))).max() > 1e-10:
            raise CircuitError(f"gate {self.label} is not unitary")
        object.__setattr__(self, "targets", tg)
        object.__setattr__(self, "matrix", m)

    @property
    def arity(self):
        return len(self.targets)

    def dagger(self, label=None):
        meta = dict(self.meta)
        if "angle" in meta:
            meta["angle"] = -meta["angle"]
        return Gate(self.targets, self.matrix.conj().T, label or self.label, meta)

    def relabel(self, mapping):
        return Gate(tuple(mapping[t] for t in self.targets), self.matrix, self.label, dict(self.meta))

    def is_identity(self, tol=1e-12):
        return np.abs(self.matrix - np.eye(len(self.matrix))).max() <= tol


@dataclass
class Circuit:
    qubit_count: int
    gates: list = field(default_factory=list)
    line_order: tuple = None

    def __post_init__(self):
        self.gates = list(self.gates)
        if self.line_order is None:
            self.line_order = tuple(range(self.qubit_count))
        self.line_order = tuple(self.line_order)
        if sorted(self.line_order) != list(range(self.qubit_count)):
            raise CircuitError("line_order must be a permutation")
        for g in self.gates:
            if max(g.targets) >= self.qubit_count:
                raise CircuitError(f"gate {g.label} targets {g.targets} outside {self.qubit_count} qubits")

    def __len__(self):
        return len(self.gates)

    def append(self, gate):
        if max(gate.targets) >= self.qubit_count:
            raise CircuitError(f"gate {gate.label} targets {gate.targets} outside {self.qubit_count} qubits")
        self.gates.append(gate)

    def extend(self, gates):
        for g in gates:
            self.append(g)

    def inverse(self):
        return Circuit(self.qubit_count, [g.dagger() for g in reversed(self.gates)], self.line_order)

    def is_nearest_neighbor(self):
        pos = self.line_order
        return all(g.arity == 1 or (g.arity == 2 and abs(pos[g.targets[0]] - pos[g.targets[1]]) == 1)
                   for g in self.gates)

    def text(self):
        lines = [f"QUBITS {self.qubit_count}", "ORDER " + " ".join(map(str, self.line_order))]
        lines += [gate_text(g) for g in self.gates]
        return "\n".join(lines) + "\n"


def _fmt_complex(z):
    return f"{z.real:.17g}{z.imag:+.17g}j"


def gate_text(g: Gate) -> str:
    qs = " ".join(f"q{t}" for t in g.targets)
    entries = " ".join(_fmt_complex(z) for z in g.matrix.ravel())
    return f"GATE {g.label} {qs} {entries}"


def parse_circuit_text(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    n = int(lines[0].split()[1])
    order = tuple(int(x) for x in lines[1].split()[1:])
    gates = []
    for ln in lines[2:]:
        parts = ln.split()
        label = parts[1]
        qs = []
        i = 2
        while i < len(parts) and parts[i].startswith("q"):
            qs.append(int(parts[i][1:]))
            i += 1
        vals = np.array([complex(x) for x in parts[i:]])
        dim = 2 ** len(qs)
        gates.append(Gate(tuple(qs), vals.reshape(dim, dim), label))
    return Circuit(n, gates, order)


# ------------------------------------------------------------------ simulation

def apply_gate(state, gate, n):
    """Apply a k-qubit gate to a dense n-qubit state (qubit 0 is the most significant)."""
    k = gate.arity
    psi = state.reshape([2] * n)
    psi = np.moveaxis(psi, gate.targets, range(k))
    shp = psi.shape
    psi = (gate.matrix @ psi.reshape(2 ** k, -1)).reshape(shp)
    return np.moveaxis(psi, range(k), gate.targets).reshape(-1)


def apply_circuit(c: Circuit, state):
    state = np.asarray(state, dtype=complex)
    if state.shape != (2 ** c.qubit_count,):
        raise CircuitError(f"state of size {state.size} does not match {c.qubit_count} qubits")
    for g in c.gates:
        state = apply_gate(state, g, c.qubit_count)
    return state


def circuit_unitary(c: Circuit):
    dim = 2 ** c.qubit_count
    cols = [apply_circuit(c, np.eye(dim, dtype=complex)[:, i]) for i in range(dim)]
    return np.array(cols).T


def apply_gate_dict(state, gate, n, tol=1e-14):
    """Apply a gate to a sparse state {basis_index: amplitude} on n qubits."""
    k = gate.arity
    shifts = [n - 1 - t for t in gate.targets]
    mask = sum(1 << s for s in shifts)
    groups = {}
    for idx, amp in state.items():
        local = 0
        for s in shifts:
            local = (local << 1) | ((idx >> s) & 1)
        groups.setdefault(idx & ~mask, np.zeros(2 ** k, dtype=complex))[local] += amp
    out = {}
    for base, vec in groups.items():
        new = gate.matrix @ vec
        for local in np.nonzero(np.abs(new) > tol)[0]:
            idx = base
            for j, s in enumerate(shifts):
                if (local >> (k - 1 - j)) & 1:
                    idx |= 1 << s
            out[idx] = out.get(idx, 0) + new[local]
    return out


# ------------------------------------------------------------------ precision

@dataclass(frozen=True)
class PrecisionBudget:
    s: int
    p: int
    zeta: float
    finite_bit: float
    trotter: float
    synthesis: float = 0.0

    def __post_init__(self):
        if not (self.p > self.s >= 1):
            raise CircuitError(f"need p > s >= 1, got s={self.s}, p={self.p}")
        if not (0 < self.zeta < 1):
            raise CircuitError(f"zeta must lie in (0,1), got {self.zeta}")
        if self.finite_bit + self.trotter + self.synthesis > self.zeta * (1 + 1e-12):
            raise CircuitError("stage errors exceed zeta")

    @property
    def guard_bits(self):
        return self.p - self.s

    def window_miss_bound(self):
        """Probability that the p-bit estimate lands more than e = 2^(p-s)-1 steps away."""
        e = 2 ** (self.p - self.s) - 1
        return 1.0 / (2 * (e - 1))


def precision_budget(n, eps, e_max, trotter_share=0.5, synthesis_share=0.0, s=None, p=None):
    """s = ceil(log2(8 E_max/eps)), zeta = eps/(16 s E_max), p = 2s + ceil(log2(1/zeta))."""
    if eps <= 0 or e_max <= 0:
        raise CircuitError("eps and E_max must be positive")
    if s is None:
        s = math.ceil(math.log2(8 * e_max / eps) - 1e-12)
    if s < 1:
        raise CircuitError(f"precision s={s} < 1; eps too large relative to E_max")
    zeta = eps / (16 * s * e_max)
    if p is None:
        p = 2 * s + math.ceil(math.log2(1 / zeta))
    trot = zeta * trotter_share
    synth = zeta * synthesis_share
    return PrecisionBudget(s=s, p=p, zeta=zeta, finite_bit=zeta - trot - synth, trotter=trot, synthesis=synth)


def pe_scale(h: LocalHamiltonian, s: int) -> float:
    """Energy scale for phase estimation: phases E/scale stay below 1 - 2^(1-s) so they never wrap."""
    bound = 2 * (h.norm_bound() + max(0.0, h.energy_offset - h.norm_bound()))
    bound = max(bound, 1e-12)
    return bound * (1 + 2.0 ** (1 - s))


# ------------------------------------------------------------------ Trotter

@dataclass(frozen=True)
class TrotterPlan:
    tau: float
    taus: tuple
    reps: tuple
    constant: float

    def __post_init__(self):
        if any(r < 1 for r in self.reps):
            raise CircuitError("every r_j must be >= 1")

    def advertised_error(self):
        return [self.constant * t * t / r for t, r in zip(self.taus, self.reps)]


def trotter_constant(h: LocalHamiltonian) -> float:
    """c in ||prod_a exp(-i H_a t) - exp(-i H t)|| <= c t^2, from pairwise Pauli commutators."""
    c = 0.0
    terms = h.terms
    for a in range(len(terms)):
        for b in range(a + 1, len(terms)):
            if _anticommute(terms[a].factors, terms[b].factors):
                c += abs(terms[a].coefficient * terms[b].coefficient)  # ||[A,B]||/2
    return c


def _anticommute(fa, fb):
    da = dict(fa)
    clashes = sum(1 for s, p in fb if s in da and da[s] != p)
    return clashes % 2 == 1


def make_trotter_plan(h: LocalHamiltonian, p: int, scale: float, budget: float = None, reps=None):
    """tau = 2 pi / scale, tau_j = 2^(j-1) tau, r_j smallest meeting budget/p per j."""
    tau = 2 * math.pi / scale
    taus = tuple(tau * 2 ** (j - 1) for j in range(1, p + 1))
    c = trotter_constant(h)
    if reps is None:
        if c == 0 or budget is None:
            reps = (1,) * p
        else:
            per = budget / p
            reps = tuple(max(1, math.ceil(c * t * t / per)) for t in taus)
    return TrotterPlan(tau, taus, tuple(int(r) for r in reps), c)


def controlled_pauli_rotation(control, factors, theta, label="trotter-step"):
    """|0><0| x 1 + |1><1| x exp(-i theta P) as one gate on (control, sites...)."""
    sites = tuple(s for s, _ in factors)
    pmat = np.array([[1.0]], dtype=complex)
    for _, op in factors:
        pmat = np.kron(pmat, PAULI[op])
    dim = len(pmat)
    u = math.cos(theta) * np.eye(dim) - 1j * math.sin(theta) * pmat
    mat = np.zeros((2 * dim, 2 * dim), dtype=complex)
    mat[:dim, :dim] = np.eye(dim)
    mat[dim:, dim:] = u
    meta = {"pauli": tuple(factors), "angle": theta, "control": control}
    return Gate((control,) + sites, mat, label, meta)


def controlled_phase_gate(control, phi, label="trotter-step"):
    """Controlled global phase exp(-i phi), i.e. diag(1, exp(-i phi)) on the control."""
    return Gate((control,), np.diag([1, np.exp(-1j * phi)]), label, {"angle": phi})


def trotterized_controlled_evolution(h: LocalHamiltonian, plan: TrotterPlan, control: int, j: int = None,
                                     qubit_count=None, system=None):
    """Controlled u~_j = (prod_a exp(-i H_a tau_j / r_j))^r_j for one j (1-based) or all j with controls list."""
    if system is None:
        system = list(range(h.n))
    if control in system:
        raise CircuitError("control must be distinct from system qubits")
    nq = qubit_count or max(list(system) + [control]) + 1
    js = [j] if j is not None else list(range(1, len(plan.taus) + 1))
    c = Circuit(nq)
    for jj in js:
        t, r = plan.taus[jj - 1], plan.reps[jj - 1]
        step = []
        if h.energy_offset:
            step.append(controlled_phase_gate(control, h.energy_offset * t / r))
        for term in h.terms:
            facs = tuple((system[s], p) for s, p in term.factors)
            step.append(controlled_pauli_rotation(control, facs, term.coefficient * t / r))
        for _ in range(r):
            c.extend(step)
    return c


def trotter_error(h: LocalHamiltonian, t: float, r: int) -> float:
    """Operator-norm distance between (prod_a exp(-i H_a t/r))^r and exp(-i H t), dense oracle."""
    n = h.n
    dim = 2 ** n
    exact = sla.expm(-1j * t * _dense(h))
    step = np.eye(dim, dtype=complex) * np.exp(-1j * h.energy_offset * t / r)
    for term in h.terms:
        p = pauli_string_sparse(n, term.factors).toarray()
        th = term.coefficient * t / r
        step = (math.cos(th) * np.eye(dim) - 1j * math.sin(th) * p) @ step
    approx = np.linalg.matrix_power(step, r)
    return float(np.linalg.norm(approx - exact, 2))


def _dense(h):
    from .hamiltonian import to_dense_matrix
    return to_dense_matrix(h)


# ------------------------------------------------------------------ phase estimation

def qft_gates(qubits, label="qft"):
    """QFT |y> -> 2^(-m/2) sum_k exp(2 pi i y k / 2^m) |k>, big-endian over the listed qubits."""
    m = len(qubits)
    gates = []
    for a in range(m):
        gates.append(Gate((qubits[a],), H_GATE, label))
        for b in range(a + 1, m):
            phase = 2 * math.pi / 2 ** (b - a + 1)
            gates.append(Gate((qubits[b], qubits[a]), np.diag([1, 1, 1, np.exp(1j * phase)]), label))
    for a in range(m // 2):
        gates.append(Gate((qubits[a], qubits[m - 1 - a]), SWAP, label))
    return gates


@dataclass
class PhaseEstimation:
    circuit: Circuit
    budget: PrecisionBudget
    scale: float
    plan: TrotterPlan
    system: tuple
    ancillas: tuple  # ancillas[0] carries the most significant bit

    @property
    def readout(self):
        return self.ancillas[: self.budget.s]


def build_phase_estimation(h: LocalHamiltonian, budget: PrecisionBudget, scale: float = None,
                           evolution: str = "auto", reps=None, max_gates=200000) -> PhaseEstimation:
    """PE circuit on n + p qubits: system 0..n-1, ancilla n holds phi_1.

    evolution="trotter" emits controlled Pauli rotations, "exact" emits one controlled exp(-i H tau_j)
    gate per j, "auto" uses Trotter when the terms commute (zero Trotter error) and exact otherwise.
    """
    n, p = h.n, budget.p
    if scale is None:
        scale = pe_scale(h, budget.s)
    if scale <= 0:
        raise CircuitError("scale must be positive")
    commuting = trotter_constant(h) == 0
    if evolution == "auto":
        evolution = "trotter" if commuting else "exact"
    plan = make_trotter_plan(h, p, scale, budget.trotter, reps)
    if evolution == "trotter" and sum(plan.reps) * (len(h.terms) + 1) > max_gates:
        raise CircuitError(f"Trotter plan needs r_j={plan.reps}; exceeds max_gates={max_gates}")
    system = tuple(range(n))
    anc = tuple(range(n, n + p))
    c = Circuit(n + p)
    for a in anc:
        c.append(Gate((a,), H_GATE, "pe-hadamard"))
    hd = _dense(h) if evolution == "exact" else None
    for j in range(1, p + 1):
        ctrl = anc[p - j]  # weight 2^(j-1) sits at big-endian position p-j
        if evolution == "trotter":
            c.extend(trotterized_controlled_evolution(h, plan, ctrl, j, n + p, system).gates)
        else:
            u = sla.expm(-1j * plan.taus[j - 1] * hd)
            dim = len(u)
            mat = np.eye(2 * dim, dtype=complex)
            mat[dim:, dim:] = u
            g = Gate((ctrl,) + system, mat, "controlled-evolution", {"tau": plan.taus[j - 1]})
            if not g.is_identity(1e-13):
                c.append(g)
    c.extend(qft_gates(list(anc)))
    return PhaseEstimation(c, budget, scale, plan, system, anc)


def window_probabilities(pe: PhaseEstimation, state_out, energy):
    """Return (miss probability over the p-bit register, s-bit marginal) for a known eigen-energy."""
    p, s = pe.budget.p, pe.budget.s
    n = len(pe.system)
    probs = np.abs(state_out.reshape(2 ** n, 2 ** p)) ** 2
    py = probs.sum(axis=0)
    target = energy / pe.scale * 2 ** p
    e = 2 ** (p - s) - 1
    y = np.arange(2 ** p)
    dist = np.abs(y - target)
    dist = np.minimum(dist, 2 ** p - dist)
    miss = float(py[dist > e].sum())
    marg = py.reshape(2 ** s, 2 ** (p - s)).sum(axis=1)
    return miss, marg


# ------------------------------------------------------------------ lowering and routing

def lower_to_two_qubit(c: Circuit) -> Circuit:
    """Rewrite controlled Pauli rotations into exact 1- and 2-qubit gates (basis change + CNOT ladder)."""
    out = Circuit(c.qubit_count, [], c.line_order)
    for g in c.gates:
        if g.arity <= 2:
            out.append(g)
            continue
        if "pauli" not in g.meta:
            raise CircuitError(f"cannot lower {g.arity}-qubit gate {g.label} without structure")
        facs, theta, ctrl = g.meta["pauli"], g.meta["angle"], g.meta["control"]
        sites = [s for s, _ in facs]
        pre, post = [], []
        for s, op in facs:
            if op == "X":
                pre.append(Gate((s,), H_GATE, g.label))
                post.append(Gate((s,), H_GATE, g.label))
            elif op == "Y":
                b = S_GATE @ H_GATE  # b Z b^dagger = Y
                pre.append(Gate((s,), b.conj().T, g.label))
                post.append(Gate((s,), b, g.label))
        ladder = [Gate((a, b), CNOT, g.label) for a, b in zip(sites, sites[1:])]
        rot = Gate((ctrl, sites[-1]), np.diag([1, 1, np.exp(-1j * theta), np.exp(1j * theta)]), g.label)
        for x in pre + ladder + [rot] + ladder[::-1] + post:
            if not x.is_identity():
                out.append(x)
    return out


def make_nearest_neighbor(c: Circuit) -> Circuit:
    """Conjugate each long-range 2-qubit gate by a swap chain S_t so it acts on adjacent line positions.

    The output indexes qubits by line position (its line_order is the identity).
    """
    pos = c.line_order
    out = Circuit(c.qubit_count)
    for g in c.gates:
        if g.arity == 1:
            out.append(g.relabel(pos))
            continue
        if g.arity != 2:
            raise CircuitError("make_nearest_neighbor needs 1- and 2-qubit gates; lower first")
        a, b = pos[g.targets[0]], pos[g.targets[1]]
        swaps = []
        if abs(a - b) > 1:
            step = 1 if b > a else -1
            # move b toward a, one line position at a time
            cur = b
            while abs(cur - a) > 1:
                swaps.append(Gate((cur - step, cur), SWAP, "swap"))
                cur -= step
            b = cur
        out.extend(swaps)
        out.append(Gate((a, b), g.matrix, g.label, dict(g.meta)))
        out.extend(swaps[::-1])
    return out


# ------------------------------------------------------------------ discrete synthesis (reduced strength)

def phase_distance(u, v):
    """min over global phase of the operator-norm distance ||u - e^{i phi} v||."""
    tr = np.trace(v.conj().T @ u)
    ph = tr / abs(tr) if abs(tr) > 1e-15 else 1.0
    return float(np.linalg.norm(u - ph * v, 2))


def _su2(u):
    return u / np.sqrt(np.linalg.det(u))


class _Net:
    """Words over {H, T} up to a given length, deduplicated up to global phase."""

    def __init__(self, depth=24):
        base = {"H": H_GATE, "T": T_GATE}
        seen = {}
        frontier = [("", np.eye(2, dtype=complex))]
        words, mats = [("", np.eye(2, dtype=complex))], []
        seen[self._key(np.eye(2))] = ""
        for _ in range(depth):
            nxt = []
            for w, m in frontier:
                for sym, g in base.items():
                    if w.endswith("H") and sym == "H":
                        continue
                    mm = g @ m
                    k = self._key(mm)
                    if k in seen:
                        continue
                    seen[k] = w + sym
                    nxt.append((w + sym, mm))
            words += nxt
            frontier = nxt
        self.words = [w for w, _ in words]
        self.mats = np.array([_su2(m) for _, m in words])
        # quaternion-like coordinates for fast nearest search (sign ambiguity handled by +/-)
        self.vecs = np.array([_su2_vec(m) for m in self.mats])

    @staticmethod
    def _key(m):
        m = _su2(np.asarray(m))
        i = np.argmax(np.abs(m.ravel()) > 1e-9)
        m = m * (abs(m.ravel()[i]) / m.ravel()[i])
        return tuple(np.round(np.concatenate([m.real.ravel(), m.imag.ravel()]), 9))

    def nearest(self, u):
        v = _su2_vec(_su2(u))
        score = np.abs(self.vecs @ v)
        i = int(np.argmax(score))
        return self.words[i], self.mats[i]


def _su2_vec(m):
    # m = a I + i(b X + c Y + d Z) up to phase
    a = np.trace(m) / 2
    b = np.trace(m @ PAULI["X"]) / 2j
    c = np.trace(m @ PAULI["Y"]) / 2j
    d = np.trace(m @ PAULI["Z"]) / 2j
    return np.real(np.array([a, b, c, d]))


_NET = None


def _net():
    global _NET
    if _NET is None:
        _NET = _Net()
    return _NET


def _word_matrix(word):
    m = np.eye(2, dtype=complex)
    for ch in word:
        m = (H_GATE if ch == "H" else T_GATE) @ m
    return m


def _inverse_word(word):
    # H^-1 = H, T^-1 = T^7
    return "".join("H" if ch == "H" else "TTTTTTT" for ch in reversed(word))


def simplify_word(word):
    """Cancel HH pairs and reduce runs of T modulo 8."""
    out = []
    for ch in word:
        out.append(ch)
        while True:
            if len(out) >= 2 and out[-1] == out[-2] == "H":
                del out[-2:]
                continue
            if len(out) >= 8 and all(c == "T" for c in out[-8:]):
                del out[-8:]
                continue
            break
    return "".join(out)


def _gc_decompose(u):
    """Balanced group commutator u = v w v^dag w^dag for u close to identity."""
    u = _su2(u)
    vec = _su2_vec(u)
    if vec[0] < 0:
        vec = -vec
    theta = 2 * math.acos(min(1.0, vec[0]))
    phi = 2 * math.asin(math.sqrt(math.sqrt(max(0.0, (1 - math.cos(theta / 2)) / 2))))
    axis = vec[1:] / (np.linalg.norm(vec[1:]) or 1.0)
    vx = sla.expm(-0.5j * phi * PAULI["X"])
    wy = sla.expm(-0.5j * phi * PAULI["Y"])
    g = vx @ wy @ vx.conj().T @ wy.conj().T
    gvec = _su2_vec(_su2(g))
    if gvec[0] < 0:
        gvec = -gvec
    gaxis = gvec[1:] / (np.linalg.norm(gvec[1:]) or 1.0)
    s = _rotation_between(gaxis, axis)
    return s @ vx @ s.conj().T, s @ wy @ s.conj().T


def _rotation_between(a, b):
    """SU(2) element whose adjoint action rotates Bloch axis a onto b."""
    cross = np.cross(a, b)
    dot = float(np.clip(np.dot(a, b), -1, 1))
    if np.linalg.norm(cross) < 1e-12:
        if dot > 0:
            return np.eye(2, dtype=complex)
        perp = np.cross(a, [1, 0, 0]) if abs(a[0]) < 0.9 else np.cross(a, [0, 1, 0])
        cross = perp / np.linalg.norm(perp)
        ang = math.pi
    else:
        ang = math.acos(dot)
        cross = cross / np.linalg.norm(cross)
    gen = cross[0] * PAULI["X"] + cross[1] * PAULI["Y"] + cross[2] * PAULI["Z"]
    return sla.expm(-0.5j * ang * gen)


def _sk(u, depth):
    if depth == 0:
        w, _ = _net().nearest(u)
        return w
    w_prev = _sk(u, depth - 1)
    m_prev = _word_matrix(w_prev)
    v, w = _gc_decompose(u @ m_prev.conj().T)
    wv = _sk(v, depth - 1)
    ww = _sk(w, depth - 1)
    # u ~ v w v^dag w^dag m_prev; words apply left to right in time
    return simplify_word(w_prev + _inverse_word(ww) + _inverse_word(wv) + ww + wv)


def synthesize_single(u, eps0, max_depth=4):
    """Approximate a 1-qubit unitary by an {H, T} word; returns (word, achieved distance)."""
    if phase_distance(u, I2) <= 1e-12:
        return "", 0.0
    best = None
    for depth in range(max_depth + 1):
        word = _sk(u, depth)
        d = phase_distance(u, _word_matrix(word))
        if best is None or d < best[1]:
            best = (word, d)
        if d <= eps0:
            break
    return best


def _demultiplex(a1, a2):
    """a1 (+) a2 = (1 x v)(d (+) d^dag)(1 x w) with d diagonal."""
    evals, vmat = sla.schur(a1 @ a2.conj().T, output="complex")
    dd = np.sqrt(np.diag(evals))
    wmat = np.diag(dd) @ vmat.conj().T @ a2
    return vmat, dd, wmat


def _two_qubit_to_basic(u, q0, q1, label):
    """Exact cosine-sine decomposition of a 4x4 unitary into 1-qubit gates and CNOTs."""
    (u1, u2), theta, (v1, v2) = sla.cossin(u, p=2, q=2, separate=True)
    gates = []

    def mux(a1, a2):
        v, dd, w = _demultiplex(a1, a2)
        phi = np.angle(dd)
        a, b = (phi[0] + phi[1]) / 2, (phi[0] - phi[1]) / 2
        seq = [Gate((q1,), w, label),
               Gate((q0, q1), CNOT, label),
               Gate((q1,), np.diag([np.exp(1j * b), np.exp(-1j * b)]), label),
               Gate((q0, q1), CNOT, label),
               Gate((q0,), np.diag([np.exp(1j * a), np.exp(-1j * a)]), label),
               Gate((q1,), v, label)]
        return seq

    def ry(t):
        return np.array([[math.cos(t / 2), -math.sin(t / 2)], [math.sin(t / 2), math.cos(t / 2)]], dtype=complex)

    cnot10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
    t0, t1 = theta
    gates += mux(v1, v2)
    # multiplexed Ry(2 theta_k) on q0 selected by q1
    gates += [Gate((q0, q1), cnot10, label), Gate((q0,), ry(t0 - t1), label),
              Gate((q0, q1), cnot10, label), Gate((q0,), ry(t0 + t1), label)]
    gates += mux(u1, u2)
    return gates


def synthesize_discrete(c: Circuit, eps0: float, max_depth=4):
    """Replace every gate with H, T, CNOT sequences; returns (circuit, per-gate achieved distances)."""
    if eps0 <= 0:
        raise CircuitError("eps0 must be positive")
    out = Circuit(c.qubit_count, [], c.line_order)
    report = []
    basis = {"H": H_GATE, "T": T_GATE}
    for g in c.gates:
        if g.arity == 1:
            pieces = [g]
        elif g.arity == 2:
            if phase_distance(g.matrix, CNOT) < 1e-12:
                out.append(Gate(g.targets, CNOT, "cnot"))
                report.append(0.0)
                continue
            pieces = _two_qubit_to_basic(g.matrix, g.targets[0], g.targets[1], g.label)
        else:
            raise CircuitError("synthesize_discrete needs 1- and 2-qubit gates; lower first")
        n1 = sum(1 for x in pieces if x.arity == 1) or 1
        emitted = []
        for x in pieces:
            if x.arity == 2:
                emitted.append(Gate(x.targets, x.matrix, "cnot"))
                continue
            word, _ = synthesize_single(x.matrix, eps0 / n1, max_depth)
            emitted += [Gate(x.targets, basis[ch], ch) for ch in word]
        sub = Circuit(c.qubit_count, emitted)
        local = Circuit(g.arity, [e.relabel({t: i for i, t in enumerate(g.targets)}) for e in emitted])
        dist = phase_distance(g.matrix, circuit_unitary(local)) if emitted else phase_distance(g.matrix, np.eye(len(g.matrix)))
        out.extend(sub.gates)
        report.append(dist)
    return out, report
