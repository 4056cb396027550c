"""Target Hamiltonians: Pauli-term representation, parsing, bounds and qudit lowering."""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

DEFAULT_CAP_QUBITS = 20


class HamiltonianError(ValueError):
    """Raised for malformed Hamiltonian input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionCapError(RuntimeError):
    """Raised when a requested dense object exceeds the desk-scale cap."""


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    factors: tuple  # ((site, label), ...) with increasing sites, no identities

    def __post_init__(self):
        facs = tuple((int(s), str(p)) for s, p in self.factors)
        sites = [s for s, _ in facs]
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise HamiltonianError(f"sites must be strictly increasing: {sites}")
        if any(p not in "XYZ" or len(p) != 1 for _, p in facs):
            raise HamiltonianError(f"bad Pauli labels in {facs}")
        if not math.isfinite(self.coefficient) or self.coefficient == 0:
            raise HamiltonianError(f"coefficient must be finite and nonzero, got {self.coefficient}")
        object.__setattr__(self, "factors", facs)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @property
    def support(self):
        return tuple(s for s, _ in self.factors)

    @property
    def label(self):
        return "".join(p for _, p in self.factors)

    def text(self):
        ops = " ".join(f"{p}{s}" for s, p in self.factors)
        return f"{self.coefficient!r} {ops}"


@dataclass(frozen=True)
class LocalHamiltonian:
    n: int
    terms: tuple = ()
    energy_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if t.factors and t.factors[-1][0] >= self.n:
                raise HamiltonianError(f"site index {t.factors[-1][0]} out of range for n={self.n}")

    @property
    def k(self):
        return max((len(t.factors) for t in self.terms), default=0)

    def norm_bound(self):
        return float(sum(abs(t.coefficient) for t in self.terms))

    def text(self):
        lines = [f"n={self.n}"]
        if self.energy_offset:
            lines.append(repr(self.energy_offset))
        lines += [t.text() for t in self.terms]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class QuditHamiltonian:
    """Hamiltonian on n qudits of dimension d, terms are (sites, matrix) pairs."""

    n: int
    d: int
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        clean = []
        for sites, mat in self.terms:
            sites = tuple(int(s) for s in sites)
            mat = np.asarray(mat, dtype=complex)
            if mat.shape != (self.d ** len(sites),) * 2:
                raise HamiltonianError(f"term on {sites} has shape {mat.shape}")
            if not np.allclose(mat, mat.conj().T, atol=1e-12):
                raise HamiltonianError(f"term on {sites} is not Hermitian")
            if len(set(sites)) != len(sites) or any(s >= self.n or s < 0 for s in sites):
                raise HamiltonianError(f"bad sites {sites}")
            clean.append((sites, mat))
        object.__setattr__(self, "terms", tuple(clean))

    def norm_bound(self):
        return float(sum(np.linalg.norm(m, 2) for _, m in self.terms))

    def dense(self):
        dim = self.d ** self.n
        out = np.zeros((dim, dim), dtype=complex)
        for sites, mat in self.terms:
            out += embed_operator(mat, sites, self.n, self.d)
        return out


def embed_operator(mat, sites, n, d=2):
    """Place a k-site operator on the given sites of an n-site register (site 0 most significant)."""
    k = len(sites)
    rest = [s for s in range(n) if s not in sites]
    full = np.kron(mat, np.eye(d ** len(rest)))
    order = list(sites) + rest
    perm = np.argsort(order)
    full = full.reshape([d] * (2 * n))
    full = full.transpose(list(perm) + [n + p for p in perm])
    return full.reshape(d ** n, d ** n)


def make_hamiltonian(n, terms, energy_offset=0.0):
    """Build a LocalHamiltonian from (coeff, "X0 Z1") or (coeff, ((0,'X'),...)) pairs, merging duplicates."""
    merged = {}
    offset = float(energy_offset)
    for coeff, ops in terms:
        if isinstance(ops, str):
            ops = _parse_ops(ops)
        facs = tuple(sorted((int(s), p) for s, p in ops if p != "I"))
        if len({s for s, _ in facs}) != len(facs):
            raise HamiltonianError(f"repeated site in term {ops}")
        if not facs:
            offset += float(coeff)
            continue
        merged[facs] = merged.get(facs, 0.0) + float(coeff)
    out = [PauliTerm(c, f) for f, c in merged.items() if c != 0.0]
    return LocalHamiltonian(n, tuple(out), offset)


_OP_RE = re.compile(r"^([IXYZ])(\d+)$")


def _parse_ops(text, line=None):
    ops = []
    for tok in text.split():
        m = _OP_RE.match(tok)
        if not m:
            raise HamiltonianError(f"bad operator token {tok!r}", line)
        ops.append((int(m.group(2)), m.group(1)))
    return ops


def parse_hamiltonian(text):
    """Parse 'n=<int>[; d=<int>]' followed by ';' or newline separated '<coeff> P<i> ...' terms.

    A term with no operators is an identity term and lands in energy_offset.
    """
    pieces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        raw = raw.split("#", 1)[0]
        for chunk in raw.split(";"):
            if chunk.strip():
                pieces.append((lineno, chunk.strip()))
    if not pieces:
        raise HamiltonianError("empty input", 1)

    n = d = None
    body = []
    for lineno, chunk in pieces:
        m = re.match(r"^([nd])\s*=\s*(\S+)$", chunk)
        if m:
            key, val = m.groups()
            try:
                ival = int(val)
            except ValueError:
                raise HamiltonianError(f"bad integer {val!r} for {key}", lineno) from None
            if ival < 1:
                raise HamiltonianError(f"{key} must be positive", lineno)
            old = n if key == "n" else d
            if old is not None and old != ival:
                raise HamiltonianError(f"conflicting declarations {key}={old} and {key}={ival}", lineno)
            if key == "n":
                n = ival
            else:
                d = ival
            continue
        if n is None:
            raise HamiltonianError("header 'n=<int>' must come first", lineno)
        body.append((lineno, chunk))
    if n is None:
        raise HamiltonianError("missing header 'n=<int>'", 1)
    if d not in (None, 2):
        raise HamiltonianError(f"Pauli-term grammar needs d=2, got d={d}; use QuditHamiltonian", 1)

    terms = []
    for lineno, chunk in body:
        head, _, rest = chunk.partition(" ")
        try:
            coeff = float(head)
        except ValueError:
            raise HamiltonianError(f"bad coefficient {head!r}", lineno) from None
        if not math.isfinite(coeff):
            raise HamiltonianError("coefficient must be finite", lineno)
        ops = _parse_ops(rest, lineno)
        for s, _ in ops:
            if s >= n:
                raise HamiltonianError(f"index {s} out of range for n={n}", lineno)
        if len({s for s, _ in ops}) != len(ops):
            raise HamiltonianError("repeated site inside a term", lineno)
        terms.append((coeff, ops))
    return make_hamiltonian(n, terms)


def energy_upper_bound(h: LocalHamiltonian) -> float:
    """Sum of term norms, which bounds the spectral radius of the non-identity part."""
    return h.norm_bound()


def shift_to_nonnegative(h: LocalHamiltonian):
    """Add E_max times identity so the spectrum of the Pauli part lands in [0, 2 E_max]."""
    offset = energy_upper_bound(h)
    return LocalHamiltonian(h.n, h.terms, h.energy_offset + offset), offset


def pauli_string_sparse(n, factors):
    """Sparse matrix of a Pauli string; site 0 is the most significant bit."""
    dim = 1 << n
    xmask = zmask = 0
    ny = 0
    for s, p in factors:
        bit = 1 << (n - 1 - s)
        if p in "XY":
            xmask |= bit
        if p in "ZY":
            zmask |= bit
        ny += p == "Y"
    cols = np.arange(dim, dtype=np.int64)
    rows = cols ^ xmask
    parity = np.zeros(dim, dtype=np.int64)
    z = cols & zmask
    while np.any(z):
        parity ^= z & 1
        z >>= 1
    # Y = i X Z acting on the column state
    vals = (1j ** ny) * (1 - 2 * parity)
    return sp.csr_matrix((vals.astype(complex), (rows, cols)), shape=(dim, dim))


def to_sparse_matrix(h: LocalHamiltonian, cap_qubits=DEFAULT_CAP_QUBITS):
    if h.n > cap_qubits:
        raise DimensionCapError(f"{h.n} qubits exceeds cap {cap_qubits}")
    dim = 1 << h.n
    out = sp.identity(dim, dtype=complex, format="csr") * h.energy_offset
    for t in h.terms:
        out = out + t.coefficient * pauli_string_sparse(h.n, t.factors)
    return out.tocsr()


def to_dense_matrix(h: LocalHamiltonian, cap_qubits=DEFAULT_CAP_QUBITS):
    """Dense matrix of sum of terms plus energy_offset times identity."""
    return to_sparse_matrix(h, cap_qubits).toarray()


def pauli_decompose(mat, n, tol=1e-12):
    """Expand a 2^n x 2^n matrix in the Pauli basis, returning [(coeff, factors)]."""
    mat = np.asarray(mat, dtype=complex)
    out = []
    for labels in itertools.product("IXYZ", repeat=n):
        op = np.array([[1.0]], dtype=complex)
        for p in labels:
            op = np.kron(op, PAULI[p])
        c = np.trace(op.conj().T @ mat) / 2 ** n
        if abs(c) > tol:
            out.append((c, tuple((i, p) for i, p in enumerate(labels) if p != "I")))
    return out


def default_isometry(d):
    """First-d-basis-states embedding of a qudit into ceil(log2 d) qubits."""
    q = max(1, math.ceil(math.log2(d))) if d > 1 else 1
    w = np.zeros((2 ** q, d))
    w[np.arange(d), np.arange(d)] = 1.0
    return w, q


def qudit_to_qubit_encode(h: QuditHamiltonian, penalty: float, isometry=None) -> LocalHamiltonian:
    """Map each qudit to qubits via W, penalizing states outside the image of W."""
    bound = h.norm_bound()
    w, q = (isometry, int(round(math.log2(isometry.shape[0])))) if isometry is not None else default_isometry(h.d)
    redundant = 2 ** q > h.d
    if redundant and penalty <= bound:
        raise HamiltonianError(f"penalty {penalty} must exceed the norm bound {bound}")
    terms = []
    for sites, mat in h.terms:
        wk = np.array([[1.0]])
        for _ in sites:
            wk = np.kron(wk, w)
        lifted = wk @ mat @ wk.conj().T
        qsites = [s * q + j for s in sites for j in range(q)]
        for c, facs in pauli_decompose(lifted, len(qsites)):
            if abs(c.imag) > 1e-10:
                raise HamiltonianError("lifted term is not Hermitian")
            terms.append((c.real, tuple((qsites[i], p) for i, p in facs)))
    proj = np.eye(2 ** q) - w @ w.conj().T
    if redundant:
        for s in range(h.n):
            for c, facs in pauli_decompose(penalty * proj, q):
                terms.append((c.real, tuple((s * q + i, p) for i, p in facs)))
    return make_hamiltonian(h.n * q, terms)
