"""Locality and interaction-set reductions: complex to real, Y removal, 2-local gadgets, S0 groups, 2D layout."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .hamiltonian import PAULI, LocalHamiltonian, PauliTerm, make_hamiltonian, to_dense_matrix

DENSE_QUBITS = 12
S0_FAMILIES = {"heisenberg": "XX+YY+ZZ", "xy": "XX+YY"}


class GadgetError(ValueError):
    pass


@dataclass
class GadgetStage:
    name: str
    input: LocalHamiltonian
    output: LocalHamiltonian
    ancillas: tuple  # qubits added by this stage
    delta: float
    target: np.ndarray  # spectrum the low-energy sector should reproduce
    mediators: dict = field(default_factory=dict)  # "stage:term" -> ancilla qubit
    claimed: tuple = None  # (delta, eta, eps) when the stage is exact

    @property
    def low_count(self):
        return len(self.target)

    def low_spectrum(self):
        if self.output.n > DENSE_QUBITS:
            raise GadgetError(f"{self.output.n} qubits is beyond dense verification")
        return np.linalg.eigvalsh(to_dense_matrix(self.output))[:self.low_count]

    def spectral_error(self):
        return float(np.abs(self.low_spectrum() - self.target).max())

    def report(self):
        return {"stage": self.name, "delta": self.delta, "qubits_in": self.input.n, "qubits_out": self.output.n,
                "ancillas": len(self.ancillas),
                "max_coupling": max((abs(t.coefficient) for t in self.output.terms), default=0.0),
                "spectral_error": self.spectral_error() if self.output.n <= DENSE_QUBITS else None}


def spectrum(h: LocalHamiltonian):
    return np.linalg.eigvalsh(to_dense_matrix(h))


def _identity_stage(name, h, delta):
    return GadgetStage(name, h, h, (), delta, spectrum(h), {}, (delta, 0.0, 0.0))


def y_count(term: PauliTerm):
    return sum(p == "Y" for _, p in term.factors)


def has_y(h: LocalHamiltonian):
    return any(y_count(t) for t in h.terms)


def is_real(h: LocalHamiltonian, tol=1e-12):
    return bool(np.abs(to_dense_matrix(h).imag).max() <= tol) if h.n <= DENSE_QUBITS else \
        all(y_count(t) % 2 == 0 for t in h.terms)


# ------------------------------------------------------------------ complex -> real

def complex_to_real(h: LocalHamiltonian, delta: float, penalty=None) -> GadgetStage:
    """Logical qubit i keeps X/Z; Y_i becomes Y_i Y_{n+i}. Partners n+i are tied by -Y Y couplings so
    the low sector is span{|+i>^n, |-i>^n} (x) C^{2^n}, carrying H on one branch and conj(H) on the other."""
    if delta < 2 * h.norm_bound():
        raise GadgetError(f"delta={delta} below 2||H|| bound {2 * h.norm_bound()}")
    n = h.n
    pen = 1.5 * delta if penalty is None else penalty
    if pen <= delta:
        raise GadgetError("partner penalty must exceed delta")
    terms = []
    for t in h.terms:
        facs = list(t.factors) + [(n + s, "Y") for s, p in t.factors if p == "Y"]
        terms.append((t.coefficient, tuple(facs)))
    offset = h.energy_offset
    for i in range(n - 1):
        terms.append((-pen, ((n + i, "Y"), (n + i + 1, "Y"))))
        offset += pen
    out = make_hamiltonian(2 * n, terms, offset)
    target = np.sort(np.concatenate([spectrum(h)] * 2)) if n <= DENSE_QUBITS else np.array([])
    return GadgetStage("complex_to_real", h, out, tuple(range(n, 2 * n)), delta, target, {}, (delta, 0.0, 0.0))


def real_encoding_isometry(n):
    """V|psi>|r> = |psi> (x) |+i>^n (r=0) or |-i>^n (r=1), in the qubit order of complex_to_real."""
    plus = np.array([1, 1j]) / math.sqrt(2)
    minus = plus.conj()
    ghz = np.stack([_kron_power(plus, n), _kron_power(minus, n)], axis=1)
    return np.kron(np.eye(1 << n), ghz)


def _kron_power(v, n):
    out = np.ones(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, v)
    return out


# ------------------------------------------------------------------ Y removal

def remove_Y_terms(h: LocalHamiltonian, delta: float) -> GadgetStage:
    """c Y^{2m} A -> Delta|0><0|_a + sqrt(Delta|c|/2) X_a (X^{2m} + (-1)^{m+1} sgn(c) Z^{2m} A) + |c|."""
    if not has_y(h):
        return _identity_stage("remove_Y_terms", h, delta)
    terms, offset, n = [], h.energy_offset, h.n
    mediators = {}
    for idx, t in enumerate(h.terms):
        ny = y_count(t)
        if ny == 0:
            terms.append((t.coefficient, t.factors))
            continue
        if ny % 2:
            raise GadgetError(f"term {t.text()} has an odd number of Y factors; make the input real first")
        m = ny // 2
        a = n + len(mediators)
        mediators[f"remove_Y:{idx}"] = a
        ys = [s for s, p in t.factors if p == "Y"]
        rest = [(s, p) for s, p in t.factors if p != "Y"]
        c = t.coefficient
        lam = math.sqrt(delta * abs(c) / 2)
        sign = (-1) ** (m + 1) * (1 if c > 0 else -1)
        terms.append((lam, tuple([(s, "X") for s in ys] + [(a, "X")])))
        terms.append((lam * sign, tuple([(s, "Z") for s in ys] + rest + [(a, "X")])))
        terms.append((delta / 2, ((a, "Z"),)))
        offset += delta / 2 + abs(c)
    out = make_hamiltonian(n + len(mediators), terms, offset)
    return GadgetStage("remove_Y_terms", h, out, tuple(mediators.values()), delta, spectrum(h), mediators)


# ------------------------------------------------------------------ locality reduction

def _subdivide(c, facs, w, delta):
    """c A B -> Delta|1><1|_w + sqrt(|c| Delta/2)(-sgn(c) A + B) X_w + |c|."""
    k = len(facs)
    A, B = facs[:(k + 1) // 2], facs[(k + 1) // 2:]
    lam = math.sqrt(abs(c) * delta / 2)
    sgn = 1 if c > 0 else -1
    terms = [(-sgn * lam, tuple(A) + ((w, "X"),)), (lam, tuple(B) + ((w, "X"),)), (-delta / 2, ((w, "Z"),))]
    return terms, delta / 2 + abs(c)


def _three_to_two(c, facs, w, delta):
    """c A B C with single-site A, B, C -> 2-local terms in (A-B)X_w, C|1><1|_w, AB, C.

    Second order of V1 = kappa (-A+B) X_w / sqrt2 is cancelled by +kappa^2/Delta (1 - AB); third order with
    V2 = mu C|1><1|_w gives kappa^2 mu/Delta^2 C(1 - AB), and mu = -c Delta^2/kappa^2 leaves c ABC after adding c C."""
    A, B, C = facs
    kappa = delta ** (2 / 3) * abs(c) ** (1 / 3)
    mu = -c * delta ** 2 / kappa ** 2
    k2 = kappa / math.sqrt(2)
    comp = kappa ** 2 / delta
    terms = [(-k2, (A, (w, "X"))), (k2, (B, (w, "X"))), (-delta / 2, ((w, "Z"),)),
             (mu / 2, (C,)), (-mu / 2, (C, (w, "Z"))),
             (-comp, (A, B)), (c, (C,))]
    return terms, delta / 2 + comp


def reduce_to_2local(h: LocalHamiltonian, delta: float, max_rounds=8) -> GadgetStage:
    if has_y(h):
        raise GadgetError("locality reduction expects a Y-free input")
    if h.k <= 2:
        return _identity_stage("reduce_to_2local", h, delta)
    cur = [(t.coefficient, t.factors) for t in h.terms]
    offset, nq, mediators = h.energy_offset, h.n, {}
    for rnd in range(max_rounds):
        if all(len(f) <= 2 for _, f in cur):
            break
        # the 3-to-2 error goes like (c^4/gap)^(1/3), so strong inputs (e.g. earlier mediators) get a larger gap
        c_max = max(abs(c) for c, f in cur if len(f) > 2)
        gap = delta * max(1.0, c_max) ** 4
        nxt = []
        for idx, (c, facs) in enumerate(cur):
            if len(facs) <= 2 or (len(facs) == 3 and any(len(f) > 3 for _, f in cur)):
                nxt.append((c, facs))
                continue
            w = nq
            nq += 1
            if len(facs) == 3:
                mediators[f"three_to_two:{rnd}:{idx}"] = w
                new, off = _three_to_two(c, facs, w, gap)
            else:
                mediators[f"subdivide:{rnd}:{idx}"] = w
                new, off = _subdivide(c, facs, w, gap)
            nxt += new
            offset += off
        cur = nxt
    else:
        raise GadgetError("locality reduction did not terminate")
    out = make_hamiltonian(nq, cur, offset)
    return GadgetStage("reduce_to_2local", h, out, tuple(mediators.values()), delta, spectrum(h), mediators)


# ------------------------------------------------------------------ S0 interaction set

GROUP = 4  # physical spins per logical qubit
_PAIRS = [(i, j) for i in range(GROUP) for j in range(i + 1, GROUP)]
_CROSS = [(i, GROUP + j) for i in range(GROUP) for j in range(GROUP)]


def _family_labels(family):
    if family not in S0_FAMILIES:
        raise GadgetError(f"unknown interaction family {family!r}")
    return ("X", "Y", "Z") if family == "heisenberg" else ("X", "Y")


def _pair_operator(i, j, n, family):
    out = 0
    for lab in _family_labels(family):
        ops = [np.eye(2)] * n
        ops[i] = ops[j] = PAULI[lab]
        m = ops[0]
        for o in ops[1:]:
            m = np.kron(m, o)
        out = out + m
    return np.real(out)


@dataclass(frozen=True)
class S0Group:
    family: str
    basis: np.ndarray  # 16 x 2 logical basis inside the group ground space
    ground_energy: float
    gap: float
    intra: np.ndarray  # 6 x 3: (identity, Z, X) components of each intra-pair coupling on the logical qubit
    second: np.ndarray  # 16 x 16 x 4 x 4 second-order kernel for cross-group couplings, unit group gap scale


_GROUP_CACHE = {}


def s0_group(family="heisenberg") -> S0Group:
    """Ground space of the all-to-all coupled 4-spin group: two singlet-sector states, the logical qubit."""
    if family in _GROUP_CACHE:
        return _GROUP_CACHE[family]
    hg = sum(_pair_operator(i, j, GROUP, family) for i, j in _PAIRS)
    w, v = np.linalg.eigh(hg)
    e0, gap = w[0], w[2] - w[0]
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    b0 = np.kron(singlet, singlet)
    ground = v[:, :2]
    rest = ground - np.outer(b0, b0 @ ground)
    b1 = np.linalg.svd(rest)[0][:, 0]
    b1 = b1 * np.sign(b1[np.flatnonzero(np.abs(b1) > 1e-9)[0]])
    B = np.stack([b0, b1], axis=1)
    Z, X = PAULI["Z"].real, PAULI["X"].real
    intra = []
    for i, j in _PAIRS:
        m = B.T @ _pair_operator(i, j, GROUP, family) @ B
        intra.append([np.trace(m) / 2, np.trace(m @ Z) / 2, np.trace(m @ X) / 2])
    dim = 1 << GROUP
    h0 = np.kron(hg - e0 * np.eye(dim), np.eye(dim)) + np.kron(np.eye(dim), hg - e0 * np.eye(dim))
    B2 = np.kron(B, B)
    q = np.eye(dim * dim) - B2 @ B2.T
    resolvent = np.linalg.pinv(q @ h0 @ q, hermitian=True)
    hs = [_pair_operator(i, j, 2 * GROUP, family) for i, j in _CROSS]
    left = [B2.T @ a @ resolvent for a in hs]
    second = np.array([[la @ b @ B2 for b in hs] for la in left])
    second = (second + second.transpose(1, 0, 3, 2)) / 2
    grp = S0Group(family, B, float(e0), float(gap), np.array(intra), second)
    _GROUP_CACHE[family] = grp
    return grp


_TWO_BODY = ("XX", "XZ", "ZX", "ZZ", "YY")


def _two_qubit_coords(m):
    """Components of a real symmetric 4x4 logical operator on the real Pauli products."""
    out = {}
    for a in "IXYZ":
        for b in "IXYZ":
            out[a + b] = float(np.real(np.trace(m @ np.kron(PAULI[a], PAULI[b])))) / 4
    return out


def fit_cross_couplings(target, family="heisenberg", restarts=24, seed=0, tol=1e-18):
    """Weights g on the 16 cross pairs with -g^T K g matching target {XX, XZ, ZX, ZZ} (and zero YY)."""
    grp = s0_group(family)
    want = np.array([target.get(k, 0.0) for k in _TWO_BODY])
    norm = float(np.linalg.norm(want))
    if norm == 0:
        return np.zeros(len(_CROSS)), np.zeros((4, 4))
    # the effective term is quadratic in g, so fit the unit target and rescale by sqrt(norm)
    want = want / norm

    def effective(g):
        return -np.einsum("a,b,abij->ij", g, g, grp.second)

    def resid(g):
        c = _two_qubit_coords(effective(g))
        return np.array([c[k] for k in _TWO_BODY]) - want

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        r = least_squares(resid, rng.normal(size=len(_CROSS)), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or r.cost < best.cost:
            best = r
        if best.cost < tol:
            break
    if best.cost >= tol:
        raise GadgetError(f"no cross-coupling weights reproduce {target} (residual {best.cost:.2e})")
    g = best.x * math.sqrt(norm)
    return g, effective(g)


def map_to_S0(h: LocalHamiltonian, delta: float, family="heisenberg") -> GadgetStage:
    """Encode each logical qubit in four spins coupled all-to-all by the family's two-body interaction.

    Intra-group weights give logical X and Z at first order; cross-group weights of order sqrt(delta)
    give logical two-body terms at second order, with the local and constant leftovers compensated."""
    if has_y(h):
        raise GadgetError("S0 encoding expects a Y-free input")
    if h.k > 2:
        raise GadgetError("S0 encoding expects a 2-local input")
    grp = s0_group(family)
    labels = _family_labels(family)
    n = h.n
    # second-order terms need the group gap to dominate the squared logical couplings
    delta = delta * max(1.0, max((abs(t.coefficient) for t in h.terms), default=0.0)) ** 2
    local = np.zeros((n, 2))  # logical (Z, X) fields still to realise
    offset = h.energy_offset
    pairs = {}
    for t in h.terms:
        if len(t.factors) == 1:
            (s, p), = t.factors
            local[s, 0 if p == "Z" else 1] += t.coefficient
        else:
            (a, pa), (b, pb) = t.factors
            pairs.setdefault((a, b), {})
            pairs[(a, b)][pa + pb] = pairs[(a, b)].get(pa + pb, 0.0) + t.coefficient
    terms = []
    scale = math.sqrt(delta)
    for (a, b), want in sorted(pairs.items()):
        g, eff = fit_cross_couplings(want, family)
        c = _two_qubit_coords(eff)
        local[a] -= [c["ZI"], c["XI"]]
        local[b] -= [c["IZ"], c["IX"]]
        offset -= c["II"]
        for (i, j), gij in zip(_CROSS, g):
            if gij:
                for lab in labels:
                    terms.append((gij * scale, ((GROUP * a + i, lab), (GROUP * b + j - GROUP, lab))))
    A = grp.intra[:, 1:].T  # 2 x 6
    for q in range(n):
        w = np.linalg.lstsq(A, local[q], rcond=None)[0]
        offset -= float(grp.intra[:, 0] @ w)
        for (i, j), wij in zip(_PAIRS, w):
            for lab in labels:
                terms.append((delta + wij, ((GROUP * q + i, lab), (GROUP * q + j, lab))))
        offset -= delta * grp.ground_energy
    out = make_hamiltonian(GROUP * n, terms, offset)
    target = spectrum(h)
    return GadgetStage(f"map_to_S0[{family}]", h, out, tuple(q for q in range(GROUP * n) if q % GROUP), delta,
                       target, {f"map_to_S0:group{q}": tuple(range(GROUP * q, GROUP * q + GROUP)) for q in range(n)})


def s0_census(h: LocalHamiltonian, family="heisenberg", tol=1e-12):
    """True when every term is a weighted copy of the family interaction on some pair (no fields)."""
    labels = set(_family_labels(family))
    per_pair = {}
    for t in h.terms:
        if len(t.factors) != 2 or t.factors[0][1] != t.factors[1][1]:
            return False
        key = (t.factors[0][0], t.factors[1][0])
        per_pair.setdefault(key, {})[t.factors[0][1]] = t.coefficient
    for coeffs in per_pair.values():
        if set(coeffs) != labels:
            return False
        vals = list(coeffs.values())
        if max(vals) - min(vals) > tol * max(1.0, abs(vals[0])):
            return False
    return True


# ------------------------------------------------------------------ composition and layout

def gadget_ladder(h: LocalHamiltonian, delta: float, family="heisenberg", through="S0"):
    """Run the reductions in order; each stage is checked against its own input.

    Stages: complex_to_real (only for inputs with odd-Y terms), remove_Y_terms, reduce_to_2local, map_to_S0."""
    order = ["complex_to_real", "remove_Y_terms", "reduce_to_2local", "S0"]
    if through not in order:
        raise GadgetError(f"unknown stage {through!r}")
    stop = order.index(through)
    stages, cur = [], h
    if not all(y_count(t) % 2 == 0 for t in h.terms):
        stages.append(complex_to_real(cur, max(delta, 2 * cur.norm_bound())))
        cur = stages[-1].output
    steps = [lambda x: remove_Y_terms(x, delta), lambda x: reduce_to_2local(x, delta),
             lambda x: map_to_S0(x, delta, family)]
    for i, step in enumerate(steps[:stop]):
        stages.append(step(cur))
        cur = stages[-1].output
    return stages


def interaction_graph(h: LocalHamiltonian):
    edges = set()
    for t in h.terms:
        sites = [s for s, _ in t.factors]
        for i in range(len(sites)):
            for j in range(i + 1, len(sites)):
                edges.add((sites[i], sites[j]))
    return sorted(edges)


@dataclass
class Layout:
    positions: dict  # qubit -> (row, col)
    edges: list

    @property
    def max_edge_length(self):
        return max((_manhattan(self.positions[a], self.positions[b]) for a, b in self.edges), default=0)

    def is_nearest_neighbor(self):
        return self.max_edge_length <= 1

    def degree(self):
        deg = {}
        for a, b in self.edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        return max(deg.values(), default=0)


def _is_path(nbrs, edges):
    touched = [q for q in nbrs if nbrs[q]]
    if not edges or any(len(nbrs[q]) > 2 for q in touched) or len(edges) != len(touched) - 1:
        return False
    seen, stack = set(), [touched[0]]
    while stack:
        q = stack.pop()
        if q not in seen:
            seen.add(q)
            stack += nbrs[q]
    return len(seen) == len(touched)


def _manhattan(p, q):
    return abs(p[0] - q[0]) + abs(p[1] - q[1])


def layout_2d(h: LocalHamiltonian) -> Layout:
    """Greedy square-lattice placement: paths go on one row; otherwise breadth-first, each qubit at the free
    site closest to its placed neighbours."""
    edges = interaction_graph(h)
    nbrs = {q: set() for q in range(h.n)}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    degs = [len(nbrs[q]) for q in range(h.n)]
    if _is_path(nbrs, edges):
        start = next((q for q in range(h.n) if degs[q] == 1), 0)
        order, seen = [start], {start}
        while len(order) < h.n:
            nxt = [b for b in nbrs[order[-1]] if b not in seen]
            q = nxt[0] if nxt else next(x for x in range(h.n) if x not in seen)
            order.append(q)
            seen.add(q)
        return Layout({q: (0, i) for i, q in enumerate(order)}, edges)
    pos, used = {}, set()
    for root in range(h.n):
        if root in pos:
            continue
        queue = [root]
        while queue:
            q = queue.pop(0)
            if q in pos:
                continue
            placed = [pos[b] for b in nbrs[q] if b in pos]
            if placed:
                cr = sum(p[0] for p in placed) / len(placed)
                cc = sum(p[1] for p in placed) / len(placed)
            else:
                cr, cc = 0.0, float(max((p[1] for p in used), default=-2) + 2)
            best = None
            for rad in range(1, 4 * h.n + 2):
                cands = [(r, c) for r in range(int(cr) - rad, int(cr) + rad + 1)
                         for c in range(int(cc) - rad, int(cc) + rad + 1) if (r, c) not in used]
                if cands:
                    best = min(cands, key=lambda p: (sum(_manhattan(p, x) for x in placed),
                                                     abs(p[0] - cr) + abs(p[1] - cc), p))
                    break
            pos[q] = best
            used.add(best)
            queue += sorted(b for b in nbrs[q] if b not in pos)
    return Layout(pos, edges)
