"""Line of 8-dimensional particles: configuration rules, history Hamiltonian and 1D output penalty."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .circuit import Circuit

LABELS = ("blank", "lmove", "inside", "dead", "qubit", "gate")
GLYPH = {"blank": "_", "lmove": "<", "inside": "i", "dead": "x", "qubit": "q", "gate": "g"}
CARRIES = ("qubit", "gate")
D_SITE = 8
MAX_SITES = 7


class ChainError(ValueError):
    pass


def site_index(label, bit=0):
    base = {"blank": 0, "lmove": 1, "inside": 2, "dead": 3, "qubit": 4, "gate": 6}[label]
    return base + (bit if label in CARRIES else 0)


@dataclass(frozen=True)
class QuditSite:
    label: str
    bit: int | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ChainError(f"unknown label {self.label}")
        if (self.label in CARRIES) != (self.bit is not None):
            raise ChainError("qubit and gate sites carry exactly one bit")

    @property
    def index(self):
        return site_index(self.label, self.bit or 0)

    def glyph(self):
        return GLYPH[self.label] + ("" if self.bit is None else str(self.bit))


@dataclass
class ChainConfiguration:
    """Site labels plus the joint amplitude of the carried qubits (left-to-right order)."""

    labels: tuple
    n: int
    R: int
    L: int
    amplitudes: np.ndarray = None

    @property
    def length(self):
        return len(self.labels)

    def qubit_sites(self):
        return [i for i, lab in enumerate(self.labels) if lab in CARRIES]

    def text(self):
        return render(self.labels, self.n, self.R)

    def vector(self):
        """Expansion in the (C^8)^N basis, site 0 most significant."""
        sites = self.qubit_sites()
        out = np.zeros(D_SITE ** self.length, dtype=complex)
        base = [site_index(lab) for lab in self.labels]
        for bits in range(1 << len(sites)):
            idx = list(base)
            for j, s in enumerate(sites):
                idx[s] += (bits >> (len(sites) - 1 - j)) & 1
            out[_flat(idx)] += self.amplitudes[bits]
        return out


def _flat(digits):
    v = 0
    for d in digits:
        v = v * D_SITE + d
    return v


def render(labels, n, R):
    """Glyph string: '|' block boundary, ':' pair boundary, ']' special boundary."""
    out = []
    for i, lab in enumerate(labels):
        if i == 2 * n * R:
            out.append("]")
        elif i < 2 * n * R and i % (2 * n) == 0:
            out.append("|")
        elif i < 2 * n * R and i % 2 == 0:
            out.append(":")
        out.append(GLYPH[lab])
    return "".join(out)


@dataclass(frozen=True)
class TransitionRule:
    left: tuple  # labels on (i, i+1) before
    right: tuple  # labels after
    sites: tuple  # left site indices where the rule applies
    gate: np.ndarray = field(default=None, compare=False)  # acts on the carried qubits of the pair
    name: str = ""

    @property
    def carried(self):
        return sum(lab in CARRIES for lab in self.left)

    def matrix(self):
        g = self.gate if self.gate is not None else np.eye(1 << self.carried)
        return np.asarray(g, dtype=complex)


def step_count(n, R):
    """K = (R-1)(3n^2+2n-1)+2n, the number of computational steps."""
    return (R - 1) * (3 * n * n + 2 * n - 1) + 2 * n


def pack_rounds(c: Circuit, n: int, R: int | None = None):
    """Pack a line circuit into rounds of slots: slot k < n-1 is a 4x4 gate on (k, k+1), slot n-1 a 2x2 on
    qubit n-1. Slots run in increasing order within a round."""
    rounds, cursor = [], n  # cursor = last slot used in the current round
    for g in (c.gates if c is not None else []):
        t = tuple(g.targets)
        if g.arity == 2:
            a, b = sorted(t)
            if b != a + 1:
                raise ChainError(f"gate on {t} is not nearest-neighbor")
            m = g.matrix if t == (a, b) else _swap_conj(g.matrix)
            cands = [(a, m)]
        elif g.arity == 1:
            q = t[0]
            cands = []
            if q >= 1:
                cands.append((q - 1, np.kron(np.eye(2), g.matrix)))
            if q <= n - 2:
                cands.append((q, np.kron(g.matrix, np.eye(2))))
            if q == n - 1:
                cands.append((n - 1, g.matrix))
        else:
            raise ChainError("only 1- and 2-qubit gates fit the chain")
        choice = next(((k, m) for k, m in sorted(cands, key=lambda x: x[0]) if k >= cursor and rounds), None)
        if choice is None:
            rounds.append({})
            k, m = min(cands, key=lambda x: x[0])
        else:
            k, m = choice
        cur = rounds[-1]
        cur[k] = m @ cur[k] if k in cur else m
        cursor = k
    if R is not None:
        if len(rounds) > R:
            raise ChainError(f"circuit needs {len(rounds)} rounds, R={R}")
        rounds += [{} for _ in range(R - len(rounds))]
    return rounds


def _swap_conj(m):
    s = np.eye(4)[[0, 2, 1, 3]]
    return s @ m @ s


def _program(n, R, L, rounds, idling="head"):
    """The history as a list of steps (left site, lhs, rhs, gate, name)."""
    if n < 1 or R < 1 or L < 0:
        raise ChainError("need n >= 1, R >= 1, L >= 0")
    if R > 1 and n > 1:
        raise ChainError("block transfer between rounds is implemented for a single carried qubit")
    steps = []
    for r in range(R):
        a = 2 * n * r
        slots = rounds[r] if r < len(rounds) else {}
        if n == 1:
            steps.append((a, ("gate", "blank"), ("qubit", "lmove"), slots.get(0), "settle"))
            steps.append((a, ("qubit", "lmove"), ("dead", "gate"), None, "mark"))
        else:
            # the extra step sits on the first pair; settling the last pair in two steps would leave a
            # qubit.qubit.blank dead end that no 2-site penalty detects
            steps.append((a, ("gate", "inside"), ("qubit", "lmove"), None, "settle"))
            steps.append((a, ("qubit", "lmove"), ("dead", "gate"), None, "mark"))
            for k in range(n - 1):
                if k:
                    steps.append((a + 2 * k, ("gate", "inside"), ("inside", "gate"), None, "move"))
                steps.append((a + 2 * k + 1, ("gate", "qubit"), ("qubit", "gate"), slots.get(k), "handoff"))
            last = a + 2 * n - 2
            steps.append((last, ("gate", "blank"), ("inside", "gate"), slots.get(n - 1), "move"))
        if r < R - 1:
            steps.append((a + 1, ("gate", "blank"), ("qubit", "lmove"), None, "transfer"))
            steps.append((a + 1, ("qubit", "lmove"), ("dead", "gate"), None, "transfer"))
    edge = 2 * n * R - 1
    if L:
        if idling == "head":
            steps.append((edge, ("gate", "blank"), ("qubit", "lmove"), None, "alpha"))
            for j in range(L - 1):
                steps.append((edge + 1 + j, ("lmove", "blank"), ("dead", "lmove"), None, "beta"))
        elif idling == "two_state":
            steps.append((edge, ("gate", "blank"), ("qubit", "dead"), None, "alpha"))
            for j in range(L - 1):
                steps.append((edge + 1 + j, ("dead", "blank"), ("dead", "dead"), None, "beta"))
        else:
            raise ChainError(f"unknown idling counter {idling}")
    return steps


def initial_labels(n, R, L):
    labs = ["blank"] * (2 * n * R + L)
    for k in range(n):
        labs[2 * k] = "gate" if k == 0 else "qubit"
        labs[2 * k + 1] = "inside" if k < n - 1 else "blank"
    return tuple(labs)


def encode_initial_configuration(vec, n, R, L) -> ChainConfiguration:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    if vec.size != 1 << n:
        raise ChainError(f"input has dimension {vec.size}, expected {1 << n}")
    return ChainConfiguration(initial_labels(n, R, L), n, R, L, vec.copy())


def transition_rules(c: Circuit, n, R, L, idling="head"):
    rounds = pack_rounds(c, n, R)
    merged = {}
    for pos, lhs, rhs, gate, name in _program(n, R, L, rounds, idling):
        key = (lhs, rhs, name) if gate is None else (lhs, rhs, name, pos)
        merged.setdefault(key, [lhs, rhs, [], gate, name])[2].append(pos)
    return [TransitionRule(lhs, rhs, tuple(sorted(ps)), gate, name) for lhs, rhs, ps, gate, name in merged.values()]


def _matches(labels, rules, forward=True):
    out = []
    for rule in rules:
        pat = rule.left if forward else rule.right
        for i in rule.sites:
            if i + 1 < len(labels) and (labels[i], labels[i + 1]) == pat:
                out.append((rule, i))
    return out


def _apply(cfg: ChainConfiguration, rule, i, forward=True):
    labs = list(cfg.labels)
    before = rule.left if forward else rule.right
    after = rule.right if forward else rule.left
    labs[i], labs[i + 1] = after
    carried = sum(lab in CARRIES for lab in cfg.labels[:i])
    nc = sum(lab in CARRIES for lab in before)
    amp = cfg.amplitudes
    if nc:
        g = rule.matrix() if forward else rule.matrix().conj().T
        full = np.kron(np.kron(np.eye(1 << carried), g), np.eye(1 << (cfg.n - carried - nc)))
        amp = full @ amp
    return ChainConfiguration(tuple(labs), cfg.n, cfg.R, cfg.L, amp)


def evolve_configuration(cfg, rules, backward=False):
    """Unique successor (or predecessor); None at the end of the orbit."""
    hits = _matches(cfg.labels, rules, forward=not backward)
    if not hits:
        return None
    if len(hits) > 1:
        raise ChainError(f"{len(hits)} rules apply to {render(cfg.labels, cfg.n, cfg.R)}")
    return _apply(cfg, *hits[0], forward=not backward)


def orbit(cfg, rules, limit=100000):
    out = [cfg]
    while len(out) <= limit:
        nxt = evolve_configuration(out[-1], rules)
        if nxt is None:
            return out
        out.append(nxt)
    raise ChainError("orbit did not halt")


def orbit_diagnostics(configs, rules):
    """Counts of forward/backward rule matches along an orbit (1 each except at the ends)."""
    bad = []
    for t, cfg in enumerate(configs):
        f = len(_matches(cfg.labels, rules, True))
        b = len(_matches(cfg.labels, rules, False))
        if f != (0 if t == len(configs) - 1 else 1) or b != (0 if t == 0 else 1):
            bad.append((t, f, b))
    return bad


# ------------------------------------------------------------------ Hamiltonian

def _pair_basis(pair):
    """Basis indices of a 2-site label pair, ordered by the carried bits."""
    nc = sum(lab in CARRIES for lab in pair)
    out = []
    for bits in range(1 << nc):
        j, idx = nc - 1, []
        for lab in pair:
            if lab in CARRIES:
                idx.append(site_index(lab, (bits >> j) & 1))
                j -= 1
            else:
                idx.append(site_index(lab))
        out.append(idx[0] * D_SITE + idx[1])
    return out


def rule_term(rule):
    """64x64 block: |l><l| + |r><r| - (|r> g <l| + h.c.)."""
    a, b = _pair_basis(rule.left), _pair_basis(rule.right)
    g = rule.matrix()
    h = np.zeros((D_SITE ** 2, D_SITE ** 2), dtype=complex)
    h[a, a] += 1
    h[b, b] += 1
    hop = np.zeros_like(h)
    hop[np.ix_(b, a)] = g
    return h - hop - hop.conj().T


def pair_projector(pair):
    p = np.zeros((D_SITE ** 2, D_SITE ** 2))
    idx = _pair_basis(pair)
    p[idx, idx] = 1
    return p


def embed_local(op, site, nsites):
    """Sparse op acting on sites site..site+k-1 of the chain."""
    k = int(round(math.log(op.shape[0], D_SITE)))
    left = sp.identity(D_SITE ** site, format="csr")
    right = sp.identity(D_SITE ** (nsites - site - k), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


@dataclass
class ChainHamiltonian:
    n: int
    R: int
    L: int
    rules: list
    configs: list  # label configurations of the orbit
    H_in: sp.csr_matrix
    H_prop: sp.csr_matrix
    H_pen: sp.csr_matrix
    J_in: float = 1.0
    J_prop: float = 1.0
    J_pen: float = 1.0

    @property
    def nsites(self):
        return 2 * self.n * self.R + self.L

    @property
    def K(self):
        return len(self.configs) - 1 - self.L

    @property
    def dimension(self):
        return D_SITE ** self.nsites

    def matrix(self):
        return (self.J_in * self.H_in + self.J_prop * self.H_prop + self.J_pen * self.H_pen).tocsr()

    def scaled(self, f):
        return ChainHamiltonian(self.n, self.R, self.L, self.rules, self.configs, self.H_in, self.H_prop,
                                self.H_pen, self.J_in * f, self.J_prop * f, self.J_pen * f)


def legal_pairs(configs):
    """Label pairs seen at each position along the orbit."""
    seen = {}
    for labs in configs:
        for i in range(len(labs) - 1):
            seen.setdefault(i, set()).add((labs[i], labs[i + 1]))
    return seen


def build_history_hamiltonian(c: Circuit, n, R, L, ancillas=(), idling="head", max_sites=MAX_SITES):
    nsites = 2 * n * R + L
    if nsites > max_sites:
        raise ChainError(f"{nsites} sites exceeds the cap of {max_sites} (dimension 8^{nsites})")
    rules = transition_rules(c, n, R, L, idling)
    start = encode_initial_configuration(np.eye(1 << n)[0], n, R, L)
    configs = [cfg.labels for cfg in orbit(start, rules)]
    dim = D_SITE ** nsites
    hprop = sp.csr_matrix((dim, dim), dtype=complex)
    for rule in rules:
        term = rule_term(rule)
        for i in rule.sites:
            hprop = hprop + embed_local(term, i, nsites)
    hpen = sp.csr_matrix((dim, dim))
    legal = legal_pairs(configs)
    for i in range(nsites - 1):
        bad = sum(pair_projector((x, y)) for x in LABELS for y in LABELS if (x, y) not in legal[i])
        hpen = hpen + embed_local(bad, i, nsites)
    hin = sp.csr_matrix((dim, dim))
    for k in ancillas:
        if k == 0:
            p = np.zeros((D_SITE, D_SITE))
            p[site_index("gate", 1), site_index("gate", 1)] = 1
            hin = hin + embed_local(p, 0, nsites)
        else:
            p = np.zeros((D_SITE ** 2, D_SITE ** 2))
            j = site_index("inside") * D_SITE + site_index("qubit", 1)
            p[j, j] = 1
            hin = hin + embed_local(p, 2 * k - 1, nsites)
    return ChainHamiltonian(n, R, L, rules, configs, hin.tocsr(), hprop.tocsr(), hpen.tocsr())


def build_1d_output_penalty(e_max, K, L, s, positions, nsites):
    """(K+L+1) E_max sum_b 2^-b |gate,1><gate,1| at the listed sites (one per energy bit)."""
    positions = list(positions)
    if len(positions) != s:
        raise ChainError("need one site per energy bit")
    if any(p < 0 or p >= nsites for p in positions):
        raise ChainError("output site outside the chain")
    dim = D_SITE ** nsites
    out = sp.csr_matrix((dim, dim))
    g1 = np.zeros((D_SITE, D_SITE))
    g1[site_index("gate", 1), site_index("gate", 1)] = 1
    for b, p in enumerate(positions, start=1):
        out = out + embed_local((K + L + 1) * e_max * 2.0 ** (-b) * g1, p, nsites)
    return out.tocsr()


def output_sites(n, R_pe, s):
    """0-based sites 2 n R_pe + 2b - 2 holding energy bit b."""
    return [2 * n * R_pe + 2 * b - 2 for b in range(1, s + 1)]


def encoded_history_state(c: Circuit, vec, n, R, L, idling="head", max_sites=MAX_SITES):
    if 2 * n * R + L > max_sites:
        raise ChainError("dimension cap exceeded")
    rules = transition_rules(c, n, R, L, idling)
    cfgs = orbit(encode_initial_configuration(vec, n, R, L), rules)
    return sum(cfg.vector() for cfg in cfgs) / math.sqrt(len(cfgs)), cfgs


def idling_split(cfgs, L):
    """(eta overlap with alpha, chi) where alpha is the uniform superposition of the L idling configurations."""
    total = len(cfgs)
    if L == 0:
        return 0.0, 1.0
    eta = sum(c.vector() for c in cfgs) / math.sqrt(total)
    alpha = sum(c.vector() for c in cfgs[-L:]) / math.sqrt(L)
    ov = abs(np.vdot(alpha, eta))
    return ov, math.sqrt(max(0.0, 1 - ov * ov))


# ------------------------------------------------------------------ spectra

def label_components(ham: ChainHamiltonian):
    """Connected components of the label-configuration graph under the rules (invariant subspaces)."""
    import itertools
    nsites = ham.nsites
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for labs in itertools.product(LABELS, repeat=nsites):
        find(labs)
        for rule in ham.rules:
            for i in rule.sites:
                if i + 1 < nsites and (labs[i], labs[i + 1]) == rule.left:
                    nxt = list(labs)
                    nxt[i], nxt[i + 1] = rule.right
                    parent[find(labs)] = find(tuple(nxt))
    comps = {}
    for labs in parent:
        comps.setdefault(find(labs), []).append(labs)
    return list(comps.values())


def _indices(labs):
    sites = [i for i, lab in enumerate(labs) if lab in CARRIES]
    base = [site_index(lab) for lab in labs]
    out = []
    for bits in range(1 << len(sites)):
        idx = list(base)
        for j, s in enumerate(sites):
            idx[s] += (bits >> (len(sites) - 1 - j)) & 1
        out.append(_flat(idx))
    return out


def block_spectrum(op: sp.csr_matrix, components, k=None):
    """Eigenvalues of an operator that is block diagonal over the label components."""
    op = op.tocsr()
    diag = op.diagonal().real
    vals = []
    for comp in components:
        idx = [j for labs in comp for j in _indices(labs)]
        if len(idx) == 1:
            vals.append(diag[idx[0]])
            continue
        sub = op[idx][:, idx].toarray()
        vals.extend(np.linalg.eigvalsh((sub + sub.conj().T) / 2))
    vals = np.sort(np.asarray(vals))
    return vals if k is None else vals[:k]


def history_gap(ham: ChainHamiltonian, zero_modes, components=None):
    comps = components or label_components(ham)
    vals = block_spectrum(ham.matrix(), comps, k=zero_modes + 1)
    return float(vals[zero_modes]), vals


def escalate_chain(ham: ChainHamiltonian, zero_modes, target=1.0, rounds=40, components=None):
    """Double all couplings until the history gap reaches `target`."""
    comps = components or label_components(ham)
    for _ in range(rounds):
        gap, _ = history_gap(ham, zero_modes, comps)
        if gap >= target:
            return ham, gap
        ham = ham.scaled(2.0)
    raise ChainError("coupling escalation did not reach the target gap")
