"""Circuit-to-Hamiltonian mapping with a unary clock: H_clock, H_prop, H_in, H_out and the couplings.

Two independent evaluation routes are provided:

* explicit sparse operators over computational (x) clock qubits, for small registers;
* an exact reduced model on the legal clock sector in the rotated frame
  W = sum_t U_t...U_1 (x) |t><t|, where H_prop becomes a path Laplacian and H_in is diagonal
  in the input basis.  It handles grid circuits with hundreds of qubits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal

from .circuit import Circuit, Gate, apply_circuit, apply_gate_dict

DEFAULT_CAP_QUBITS = 20


class ClockError(ValueError):
    pass


# ------------------------------------------------------------------ index helpers

def _outer_on_bits(bits, a, b, nbits):
    """|a><b| on the listed bits (bit 1 is the most significant of nbits) times identity elsewhere."""
    dim = 1 << nbits
    cols = np.arange(dim, dtype=np.int64)
    shifts = [nbits - q for q in bits]
    keep = np.ones(dim, dtype=bool)
    rows = cols.copy()
    k = len(bits)
    for j, sh in enumerate(shifts):
        bb = (b >> (k - 1 - j)) & 1
        aa = (a >> (k - 1 - j)) & 1
        keep &= ((cols >> sh) & 1) == bb
        rows = np.where(aa, rows | (1 << sh), rows & ~(1 << sh))
    cols, rows = cols[keep], rows[keep]
    return sp.csr_matrix((np.ones(len(cols), dtype=complex), (rows, cols)), shape=(dim, dim))


def embed_gate(gate: Gate, n: int):
    """Sparse 2^n matrix of a gate acting on its targets (qubit 0 most significant)."""
    dim = 1 << n
    k = gate.arity
    cols = np.arange(dim, dtype=np.int64)
    shifts = [n - 1 - t for t in gate.targets]
    local = np.zeros(dim, dtype=np.int64)
    base = cols.copy()
    for sh in shifts:
        local = (local << 1) | ((cols >> sh) & 1)
        base &= ~(1 << sh)
    rows_all, cols_all, vals_all = [], [], []
    for lp in range(1 << k):
        r = base.copy()
        for j, sh in enumerate(shifts):
            if (lp >> (k - 1 - j)) & 1:
                r |= 1 << sh
        v = gate.matrix[lp, local]
        nz = v != 0
        rows_all.append(r[nz])
        cols_all.append(cols[nz])
        vals_all.append(v[nz])
    return sp.csr_matrix((np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
                         shape=(dim, dim))


def clock_index(t, T):
    """Integer of the unary clock string 1^t 0^(T-t) with bit 1 most significant."""
    return ((1 << t) - 1) << (T - t)


def acts_nontrivially(gate: Gate, qubit: int, tol=1e-12) -> bool:
    if qubit not in gate.targets:
        return False
    k = gate.arity
    j = gate.targets.index(qubit)
    m = gate.matrix.reshape([2] * (2 * k))
    m = np.moveaxis(m, [j, k + j], [0, k])
    m = m.reshape(2, 2 ** (k - 1), 2, 2 ** (k - 1))
    off = max(np.abs(m[0, :, 1, :]).max(), np.abs(m[1, :, 0, :]).max())
    diff = np.abs(m[0, :, 0, :] - m[1, :, 1, :]).max()
    return off > tol or diff > tol


def first_use_times(c: Circuit, qubits):
    """t_min(i) = 1-based index of the first gate acting nontrivially on qubit i (None if never)."""
    out = {q: None for q in qubits}
    pending = set(qubits)
    for t, g in enumerate(c.gates, start=1):
        for q in g.targets:
            if q in pending and acts_nontrivially(g, q):
                out[q] = t
                pending.discard(q)
        if not pending:
            break
    return out


def clock_projector_bits(t, T):
    """Bits and pattern selecting clock time t on legal states, with the boundary forms."""
    if T == 1:
        return (1,), t
    if t == 0:
        return (1,), 0
    if t == T:
        return (T - 1, T), 0b11
    if t == 1:
        return (1, 2), 0b10
    return (t - 1, t, t + 1), 0b110


# ------------------------------------------------------------------ components

def build_clock_term(T: int):
    """sum_{t=1}^{T-1} |01><01|_{t,t+1} on the T-bit clock register."""
    if T < 1:
        raise ClockError("T must be >= 1")
    dim = 1 << T
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for t in range(1, T):
        out = out + _outer_on_bits((t, t + 1), 0b01, 0b01, T)
    return out.tocsr()


def _prop_clock_parts(t, T):
    """(bits, before-pattern, after-pattern) for the propagation term of gate t."""
    if T == 1:
        return (1,), 0b0, 0b1
    if t == 1:
        return (1, 2), 0b00, 0b10
    if t == T:
        return (T - 1, T), 0b10, 0b11
    return (t - 1, t, t + 1), 0b100, 0b110


def build_prop_term(c: Circuit, cap_qubits=DEFAULT_CAP_QUBITS):
    """sum_t H_prop,t over computational (x) clock, boundary forms at t=1 and t=T."""
    T, n = len(c.gates), c.qubit_count
    if T < 1:
        raise ClockError("circuit needs at least one gate")
    _check_cap(n + T, cap_qubits)
    eye = sp.identity(1 << n, dtype=complex, format="csr")
    out = sp.csr_matrix(((1 << (n + T)),) * 2, dtype=complex)
    for t, g in enumerate(c.gates, start=1):
        bits, before, after = _prop_clock_parts(t, T)
        u = embed_gate(g, n)
        out = out + sp.kron(eye, _outer_on_bits(bits, before, before, T))
        out = out + sp.kron(eye, _outer_on_bits(bits, after, after, T))
        out = out - sp.kron(u, _outer_on_bits(bits, after, before, T))
        out = out - sp.kron(u.conj().T, _outer_on_bits(bits, before, after, T))
    return out.tocsr()


def _number_op(q, n):
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    return sp.diags(((idx >> (n - 1 - q)) & 1).astype(complex), format="csr")


def build_input_term(c: Circuit, ancillas=(), cap_qubits=DEFAULT_CAP_QUBITS):
    """sum_i (1 - |0><0|)_i (x) |0><0|_clock bit t_min(i); never-used ancillas are penalized at all times."""
    T, n = len(c.gates), c.qubit_count
    _check_cap(n + T, cap_qubits)
    dim = 1 << (n + T)
    out = sp.csr_matrix((dim, dim), dtype=complex)
    tmin = first_use_times(c, ancillas)
    for q in ancillas:
        nq = _number_op(q, n)
        if tmin[q] is None:
            clock = sp.identity(1 << T, dtype=complex, format="csr")
        else:
            clock = _outer_on_bits((tmin[q],), 0, 0, T)
        out = out + sp.kron(nq, clock)
    return out.tocsr()


def build_output_penalty(e_max, T, s, t0, bit_sites, n, cap_qubits=DEFAULT_CAP_QUBITS):
    """(T+1) E_max sum_b 2^-b |1><1|_{bit b} (x) P^clock(t0+b)."""
    if len(bit_sites) != s:
        raise ClockError("bit_sites must have s entries")
    if t0 + s > T or t0 < 0:
        raise ClockError(f"readout window {t0 + 1}..{t0 + s} overflows clock of length {T}")
    _check_cap(n + T, cap_qubits)
    dim = 1 << (n + T)
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for b, q in enumerate(bit_sites, start=1):
        bits, pat = clock_projector_bits(t0 + b, T)
        out = out + (T + 1) * e_max * 2.0 ** (-b) * sp.kron(_number_op(q, n), _outer_on_bits(bits, pat, pat, T))
    return out.tocsr()


def _check_cap(total, cap):
    if total > cap:
        raise ClockError(f"{total} qubits exceeds the dense/sparse cap of {cap}")


# ------------------------------------------------------------------ couplings

@dataclass(frozen=True)
class CouplingSchedule:
    J_in: float
    J_prop: float
    J_clock: float
    constants: tuple = (1.0, 1.0, 1.0)
    K: float = 1.0
    escalations: int = 0

    def scaled(self, f_in=1.0, f_prop=1.0, f_clock=1.0):
        return CouplingSchedule(self.J_in * f_in, self.J_prop * f_prop, self.J_clock * f_clock,
                                self.constants, self.K, self.escalations + 1)


def coupling_schedule(delta, T, m, K=1.0, constants=(1.0, 1.0, 1.0)) -> CouplingSchedule:
    """J_in = c1 D (T+1), J_prop = c2 K T^2 m^2 J_in^2 / D, J_clock = c3 K T^2 J_prop^2 / D.

    The division by D keeps every J an energy; at D = 1 this is the bare asymptotic form."""
    if delta <= 0:
        raise ClockError("gap target must be positive")
    c1, c2, c3 = constants
    j_in = c1 * delta * (T + 1)
    j_prop = c2 * K * T ** 2 * max(m, 1) ** 2 * j_in ** 2 / delta
    j_clock = c3 * K * T ** 2 * j_prop ** 2 / delta
    return CouplingSchedule(j_in, j_prop, j_clock, tuple(constants), K)


# ------------------------------------------------------------------ history states

@dataclass
class HistoryState:
    vector: np.ndarray
    label: object = None


def _full_input(c: Circuit, vec, ancillas):
    n = c.qubit_count
    vec = np.asarray(vec, dtype=complex)
    if vec.size == 1 << n:
        return vec
    free = [q for q in range(n) if q not in set(ancillas)]
    if vec.size != 1 << len(free):
        raise ClockError(f"input of size {vec.size} matches neither {n} nor {len(free)} qubits")
    out = np.zeros(1 << n, dtype=complex)
    for i, a in enumerate(vec):
        idx = 0
        for j, q in enumerate(free):
            if (i >> (len(free) - 1 - j)) & 1:
                idx |= 1 << (n - 1 - q)
        out[idx] = a
    return out


def history_state(c: Circuit, vec, ancillas=(), label=None) -> HistoryState:
    """(T+1)^-1/2 sum_t (U_t...U_1 |input, 0^m>) |1^t 0^(T-t)>."""
    T, n = len(c.gates), c.qubit_count
    psi = _full_input(c, vec, ancillas)
    out = np.zeros((1 << n, 1 << T), dtype=complex)
    out[:, clock_index(0, T)] = psi
    for t, g in enumerate(c.gates, start=1):
        psi = apply_circuit(Circuit(n, [g]), psi)
        out[:, clock_index(t, T)] = psi
    return HistoryState(out.reshape(-1) / math.sqrt(T + 1), label)


# ------------------------------------------------------------------ assembly

@dataclass
class ClockHamiltonian:
    circuit: Circuit
    schedule: CouplingSchedule
    delta: float
    H_clock: object
    H_prop: object
    H_in: object
    H_out: object
    ancillas: tuple = ()

    @property
    def T(self):
        return len(self.circuit.gates)

    @property
    def H0(self):
        s = self.schedule
        return (s.J_clock * self.H_clock + s.J_prop * self.H_prop + s.J_in * self.H_in).tocsr()

    @property
    def matrix(self):
        return (self.H0 + self.H_out).tocsr()

    @property
    def dimension(self):
        return self.H_prop.shape[0]


def assemble_circuit_hamiltonian(c: Circuit, delta, schedule: CouplingSchedule = None, e_max=1.0, s=0, t0=0,
                                 bit_sites=(), ancillas=(), cap_qubits=DEFAULT_CAP_QUBITS) -> ClockHamiltonian:
    """H_circuit = J_clock H_clock + J_prop H_prop + J_in H_in + H_out as a sparse operator."""
    T, n = len(c.gates), c.qubit_count
    _check_cap(n + max(T, 0), cap_qubits)
    if schedule is None:
        schedule = coupling_schedule(delta, T, len(ancillas))
    if T == 0:
        zero = sp.csr_matrix((1 << n, 1 << n), dtype=complex)
        return ClockHamiltonian(c, schedule, delta, zero, zero, zero, zero, tuple(ancillas))
    hc = sp.kron(sp.identity(1 << n, dtype=complex), build_clock_term(T)).tocsr()
    hp = build_prop_term(c, cap_qubits)
    hi = build_input_term(c, ancillas, cap_qubits)
    if s:
        ho = build_output_penalty(e_max, T, s, t0, bit_sites, n, cap_qubits)
    else:
        ho = sp.csr_matrix(hp.shape, dtype=complex)
    return ClockHamiltonian(c, schedule, delta, hc, hp, hi, ho, tuple(ancillas))


def coo_dump(op) -> str:
    """Sorted 'row col re im' lines of the nonzero entries."""
    m = sp.coo_matrix(op)
    order = np.lexsort((m.col, m.row))
    lines = [f"{m.row[i]} {m.col[i]} {m.data[i].real:.17g} {m.data[i].imag:.17g}"
             for i in order if m.data[i] != 0]
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------------ exact reduced model

def path_laplacian(T):
    """Diagonal and off-diagonal of the (T+1)-node path Laplacian (H_prop in the rotated frame)."""
    d = np.full(T + 1, 2.0)
    d[0] = d[-1] = 1.0
    if T == 0:
        d[:] = 0.0
    return d, -np.ones(T)


def _tridiag_min(diag, off, k=1):
    if len(diag) == 1:
        return np.array([diag[0]])
    return eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1), eigvals_only=True)


@dataclass
class GapReport:
    gap: float
    clock: float
    prop: float
    input: float
    worst_ancilla: object = None
    tmin: dict = field(default_factory=dict)


def h0_gap(c: Circuit, schedule: CouplingSchedule, ancillas, tmin=None) -> GapReport:
    """Exact lambda_1(H_0 restricted off the history space), from the rotated-frame block structure.

    Illegal clock strings cost at least J_clock; the good input sector is J_prop times a path
    Laplacian; an input with ancilla i set adds J_in on clock times t < t_min(i)."""
    T = len(c.gates)
    if tmin is None:
        tmin = first_use_times(c, ancillas)
    d, e = path_laplacian(T)
    js = schedule
    prop = js.J_prop * (2 - 2 * math.cos(math.pi / (T + 1))) if T >= 1 else math.inf
    worst, worst_q = math.inf, None
    cache = {}
    for q in ancillas:
        tm = tmin[q]
        key = tm
        if key not in cache:
            pen = np.ones(T + 1) if tm is None else (np.arange(T + 1) < tm).astype(float)
            cache[key] = float(_tridiag_min(js.J_prop * d + js.J_in * pen, js.J_prop * e)[0])
        if cache[key] < worst:
            worst, worst_q = cache[key], q
    clock = js.J_clock if T >= 2 else math.inf
    return GapReport(min(clock, prop, worst), clock, prop, worst, worst_q, tmin)


def dirichlet_limit(T, tm):
    """Lowest eigenvalue of the path Laplacian with nodes t < tm removed (J_in -> infinity)."""
    d, e = path_laplacian(T)
    if tm is None or tm > T:
        return math.inf
    return float(_tridiag_min(d[tm:].copy(), e[tm:].copy())[0]) if tm > 0 else 0.0


def escalate_schedule(c: Circuit, delta, ancillas, start: CouplingSchedule, max_rounds=200):
    """Double couplings until the exact H_0 gap reaches 2 Delta."""
    sched = start
    tmin = first_use_times(c, ancillas)
    T = len(c.gates)
    for _ in range(max_rounds):
        rep = h0_gap(c, sched, ancillas, tmin)
        if rep.gap >= 2 * delta:
            return sched, rep
        f_in = f_prop = f_clock = 1.0
        if rep.clock < 2 * delta:
            f_clock = 2.0
        if rep.prop < 2 * delta:
            f_prop = 2.0
        if rep.input < 2 * delta:
            tm = tmin[rep.worst_ancilla]
            if sched.J_prop * dirichlet_limit(T, tm) < 2 * delta * 1.05:
                f_prop = 2.0
            f_in = 2.0
        sched = sched.scaled(f_in, f_prop, f_clock)
    raise ClockError("coupling escalation did not reach the requested gap")


@dataclass
class SectorModel:
    """H_circuit restricted to span{W |x, t>: x supported on `active` qubits}, in the rotated frame.

    Exact whenever that span is invariant, which `closure_residual` certifies.  Everything outside
    it has energy >= `threshold` (the H_0 bound for the complement)."""

    circuit: Circuit
    schedule: CouplingSchedule
    e_max: float
    s: int
    t0: int
    readout: tuple
    system: tuple
    active: tuple
    tmin: dict
    out_blocks: list  # M_b = V^dag n_b V on the active space, b = 1..s
    closure_residual: float
    threshold: float
    gap: GapReport

    @property
    def T(self):
        return len(self.circuit.gates)

    @property
    def dimension(self):
        return (1 << len(self.active)) * (self.T + 1)

    @property
    def physical_qubits(self):
        return self.circuit.qubit_count + self.T

    def matrix(self):
        """Sparse reduced operator; index = x * (T+1) + t."""
        T, na = self.T, len(self.active)
        nx = 1 << na
        js = self.schedule
        d, e = path_laplacian(T)
        diag = np.tile(js.J_prop * d, nx)
        anc_pos = [j for j, q in enumerate(self.active) if q not in self.system]
        for x in range(nx):
            for j in anc_pos:
                if (x >> (na - 1 - j)) & 1:
                    tm = self.tmin[self.active[j]]
                    pen = np.ones(T + 1) if tm is None else (np.arange(T + 1) < tm).astype(float)
                    diag[x * (T + 1):(x + 1) * (T + 1)] += js.J_in * pen
        offd = np.tile(np.append(js.J_prop * e, 0.0), nx)[:-1]
        mat = sp.diags([diag.astype(complex), offd.astype(complex), offd.astype(complex)], [0, 1, -1],
                       shape=(nx * (T + 1),) * 2, format="lil")
        for b, mb in enumerate(self.out_blocks, start=1):
            t = self.t0 + b
            w = (T + 1) * self.e_max * 2.0 ** (-b)
            rows, cols = np.nonzero(np.abs(mb) > 1e-15)
            for r, cc in zip(rows, cols):
                mat[r * (T + 1) + t, cc * (T + 1) + t] += w * mb[r, cc]
        return mat.tocsr()

    def out_is_diagonal(self):
        return all(np.abs(mb - np.diag(np.diag(mb))).max() < 1e-13 for mb in self.out_blocks)

    def lowest(self, k=4, vectors=False):
        """Lowest k eigenpairs of the reduced operator."""
        T, na = self.T, len(self.active)
        nx = 1 << na
        dim = nx * (T + 1)
        k = min(k, dim)
        if self.out_is_diagonal():
            js = self.schedule
            d, e = path_laplacian(T)
            mat_diag = self.matrix().diagonal().real
            vals, vecs = [], []
            for x in range(nx):
                dd = mat_diag[x * (T + 1):(x + 1) * (T + 1)]
                kk = min(k, T + 1)
                if T == 0:
                    w, v = np.array([dd[0]]), np.ones((1, 1))
                else:
                    w, v = eigh_tridiagonal(dd, js.J_prop * e, select="i", select_range=(0, kk - 1))
                for j in range(len(w)):
                    vals.append(w[j])
                    if vectors:
                        full = np.zeros(dim, dtype=complex)
                        full[x * (T + 1):(x + 1) * (T + 1)] = v[:, j]
                        vecs.append(full)
            order = np.argsort(vals)[:k]
            vals = np.array(vals)[order]
            if vectors:
                return vals, np.array([vecs[i] for i in order]).T
            return vals
        mat = self.matrix()
        if dim <= 2048:
            w, v = np.linalg.eigh(mat.toarray())
            return (w[:k], v[:, :k]) if vectors else w[:k]
        w, v = spla.eigsh(mat, k=k, sigma=-1e-3 * self.e_max, which="LM")
        order = np.argsort(w)
        return (w[order], v[:, order]) if vectors else w[order]

    def encoding(self, start):
        """Columns V|x_sys> = |x_sys, 0> (x) (L+1)^-1/2 sum_{t >= start} |t>, in the reduced basis."""
        T, na = self.T, len(self.active)
        sys_pos = [self.active.index(q) for q in self.system]
        ncols = 1 << len(self.system)
        out = np.zeros(((1 << na) * (T + 1), ncols), dtype=complex)
        for i in range(ncols):
            x = 0
            for j, pos in enumerate(sys_pos):
                if (i >> (len(sys_pos) - 1 - j)) & 1:
                    x |= 1 << (na - 1 - pos)
            out[x * (T + 1) + start: (x + 1) * (T + 1), i] = 1.0 / math.sqrt(T + 1 - start)
        return out


def _basis_dict(x, active, n):
    idx = 0
    na = len(active)
    for j, q in enumerate(active):
        if (x >> (na - 1 - j)) & 1:
            idx |= 1 << (n - 1 - q)
    return {idx: 1.0 + 0j}


def build_sector_model(c, schedule: CouplingSchedule, e_max, s, t0, readout, system, ancillas,
                       active=None, max_active=14, tol=1e-10) -> SectorModel:
    """Build the reduced model, growing the active qubit set until V^dag n_b V closes on it."""
    n = c.qubit_count
    tmin = first_use_times(c, ancillas)
    gap = h0_gap(c, schedule, ancillas, tmin)
    prefix = c.gates[:t0]
    active = tuple(system) if active is None else tuple(active)
    while True:
        na = len(active)
        if na > max_active:
            raise ClockError(f"active set grew beyond {max_active} qubits; reduced model unavailable")
        blocks = [np.zeros((1 << na, 1 << na), dtype=complex) for _ in range(s)]
        escaped = {}
        aset = set(active)
        for x in range(1 << na):
            st = _basis_dict(x, active, n)
            for g in prefix:
                st = apply_gate_dict(st, g, n)
            for b, q in enumerate(readout):
                sh = n - 1 - q
                proj = {k: v for k, v in st.items() if (k >> sh) & 1}
                for g in reversed(prefix):
                    proj = apply_gate_dict(proj, g.dagger(), n)
                for k, v in proj.items():
                    if abs(v) <= tol:
                        continue
                    bits = [qq for qq in range(n) if (k >> (n - 1 - qq)) & 1]
                    outside = [qq for qq in bits if qq not in aset]
                    if outside:
                        for qq in outside:
                            escaped[qq] = max(escaped.get(qq, 0.0), abs(v))
                        continue
                    y = 0
                    for j, qq in enumerate(active):
                        if (k >> (n - 1 - qq)) & 1:
                            y |= 1 << (na - 1 - j)
                    blocks[b][y, x] += v
        if not escaped:
            break
        active = tuple(sorted(aset | set(escaped)))
    complement = [q for q in ancillas if q not in set(active)]
    thr = schedule.J_clock if len(c.gates) >= 2 else math.inf
    if complement:
        sub = h0_gap(c, schedule, complement, tmin)
        thr = min(thr, sub.input)
    return SectorModel(c, schedule, e_max, s, t0, tuple(readout), tuple(system), active, tmin, blocks, 0.0, thr, gap)


def sector_invariance_residual(model: SectorModel, full: ClockHamiltonian, ancillas) -> float:
    """Cross-check on small instances: || H_full W B - W B H_red || for the reduced basis B."""
    c = model.circuit
    n, T = c.qubit_count, model.T
    na = len(model.active)
    cols = []
    for x in range(1 << na):
        psi = np.zeros(1 << n, dtype=complex)
        (idx, _), = _basis_dict(x, model.active, n).items()
        psi[idx] = 1.0
        for t in range(T + 1):
            if t > 0:
                psi = apply_circuit(Circuit(n, [c.gates[t - 1]]), psi)
            v = np.zeros((1 << n, 1 << T), dtype=complex)
            v[:, clock_index(t, T)] = psi
            cols.append(v.reshape(-1))
    B = np.array(cols).T
    red = model.matrix().toarray()
    return float(np.linalg.norm(full.matrix @ B - B @ red, 2))
