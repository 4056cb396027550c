"""Numeric certificates: spectra, simulation checks, groundspace, idling and reduction bounds."""
from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .circuit import apply_circuit, window_probabilities
from .hamiltonian import LocalHamiltonian, to_dense_matrix

DENSE_CAP = 1 << 13


class VerifyError(ValueError):
    pass


def _dense(m):
    if sp.issparse(m):
        return m.toarray()
    return np.asarray(m, dtype=complex)


def dense_spectrum(m, cap=DENSE_CAP, check=True):
    """Ascending eigenvalues and eigenvectors with a residual check."""
    a = _dense(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise VerifyError("matrix must be square")
    if a.shape[0] > cap:
        raise VerifyError(f"dimension {a.shape[0]} exceeds dense cap {cap}")
    scale = max(np.abs(a).max(), 1e-300)
    if np.abs(a - a.conj().T).max() > 1e-10 * scale:
        raise VerifyError("matrix is not Hermitian")
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    if check and len(w):
        res = np.linalg.norm(a @ v - v * w, axis=0).max()
        if res > 1e-8 * max(np.linalg.norm(a, 2), 1e-300):
            raise VerifyError(f"eigen residual {res} too large")
    return w, v


def lowest_eigenpairs(m, k, cap=DENSE_CAP):
    """k lowest eigenpairs: dense below the cap, shift-invert Lanczos above."""
    n = m.shape[0]
    if n <= cap:
        w, v = dense_spectrum(m, cap=cap, check=False)
        return w[:k], v[:, :k]
    m = sp.csr_matrix(m)
    lo = -spla.norm(m, 1)
    w, v = spla.eigsh(m, k=k, sigma=lo, which="LM")
    order = np.argsort(w)
    return w[order], v[:, order]


# ------------------------------------------------------------------ encodings

@dataclass
class Encoding:
    """E(H) = V (H (x) P + conj(H) (x) Q) V^dag with V built from site factors.

    `factors` are per-site isometries (one per original qudit) and optional ancilla states
    (input dimension 1).  `matrix` is V expressed in whatever basis the simulator uses; when it
    is None it is the Kronecker product of the factors in order."""

    factors: list
    P: np.ndarray = None
    Q: np.ndarray = None
    matrix: np.ndarray = None
    basis: str = "physical"

    def __post_init__(self):
        fs = []
        for f in self.factors:
            f = np.asarray(f, dtype=complex)
            fs.append(f.reshape(-1, 1) if f.ndim == 1 else f)
        self.factors = fs
        if self.P is None:
            self.P = np.eye(1, dtype=complex)
        if self.Q is None:
            self.Q = np.zeros_like(self.P)
        self.P = np.asarray(self.P, dtype=complex)
        self.Q = np.asarray(self.Q, dtype=complex)
        if self.matrix is None:
            self.matrix = self.product()
        self.matrix = np.asarray(self.matrix, dtype=complex)

    def product(self):
        v = np.eye(1, dtype=complex)
        for f in self.factors:
            v = np.kron(v, f)
        return v

    def locality_violations(self, tol=1e-10):
        out = []
        for i, f in enumerate(self.factors):
            if np.abs(f.conj().T @ f - np.eye(f.shape[1])).max() > tol:
                out.append(f"factor {i} is not an isometry")
        if np.abs(self.P @ self.Q).max() > tol:
            out.append("P Q != 0")
        for name, m in (("P", self.P), ("Q", self.Q)):
            if np.abs(m @ m - m).max() > tol or np.abs(m - m.conj().T).max() > tol:
                out.append(f"{name} is not a projector")
        if np.abs(self.matrix.conj().T @ self.matrix - np.eye(self.matrix.shape[1])).max() > 1e-8:
            out.append("V is not an isometry")
        if self.basis == "physical":
            prod = self.product()
            if prod.shape != self.matrix.shape or np.abs(prod - self.matrix).max() > 1e-10:
                out.append("V does not factorize into the declared site isometries")
        return out

    def encode(self, h):
        """V (h (x) P + conj(h) (x) Q) V^dag, with V acting on target (x) P/Q register."""
        h = np.asarray(h, dtype=complex)
        inner = np.kron(h, self.P) + np.kron(h.conj(), self.Q)
        return self.matrix @ inner @ self.matrix.conj().T


def trivial_encoding(dim):
    return Encoding([np.eye(dim)])


@dataclass
class SimulationCheck:
    delta: float
    eta: float
    eps: float
    measured_eta: float
    measured_eps: float
    rank_expected: int
    rank_found: int
    low_spectrum: np.ndarray
    target_spectrum: np.ndarray
    diagnostics: list = field(default_factory=list)

    @property
    def passed(self):
        return (not self.diagnostics and self.rank_found == self.rank_expected
                and self.measured_eta <= self.eta and self.measured_eps <= self.eps)

    def report(self):
        return SpectralReport("simulation", {
            "delta": self.delta, "eta": self.eta, "eps": self.eps,
            "measured_eta": self.measured_eta, "measured_eps": self.measured_eps,
            "rank_expected": self.rank_expected, "rank_found": self.rank_found,
            "pass": self.passed, "diagnostics": "; ".join(self.diagnostics) or "none"},
            {"low_spectrum": self.low_spectrum, "target_spectrum": self.target_spectrum})


def check_simulation(target, sim, delta, eta, eps, encoding: Encoding = None, spectrum=None,
                     complete_below=None) -> SimulationCheck:
    """Simulation check: isometry V~ onto the <= Delta eigenspace within eta of V, and
    ||H'_<=Delta - V~ (H (x) P + conj(H) (x) Q) V~^dag|| <= eps.

    `target` is a LocalHamiltonian or matrix.  `sim` is a matrix, or None when `spectrum`
    = (eigenvalues, eigenvectors) holds every eigenpair below `complete_below` >= Delta."""
    h = to_dense_matrix(target) if isinstance(target, LocalHamiltonian) else _dense(target)
    if encoding is None:
        encoding = trivial_encoding(h.shape[0])
    diags = list(encoding.locality_violations())
    r = encoding.P.shape[0]
    vmat = encoding.matrix
    if vmat.shape[1] != h.shape[0] * r:
        raise VerifyError(f"encoding maps {vmat.shape[1]} dims, target needs {h.shape[0] * r}")
    # restrict V to the support of P + Q
    pq = encoding.P + encoding.Q
    wpq, upq = np.linalg.eigh(pq)
    supp = upq[:, wpq > 0.5]
    restrict = np.kron(np.eye(h.shape[0]), supp)
    v = vmat @ restrict
    inner = restrict.conj().T @ (np.kron(h, encoding.P) + np.kron(h.conj(), encoding.Q)) @ restrict
    expected = v.shape[1]
    if spectrum is None:
        if isinstance(sim, LocalHamiltonian):
            sim = to_dense_matrix(sim)
        if sim.shape[0] != vmat.shape[0]:
            raise VerifyError("simulator and encoding dimensions differ")
        w, q = dense_spectrum(sim, cap=max(DENSE_CAP, sim.shape[0]))
    else:
        w, q = spectrum
        w = np.asarray(w)
        if complete_below is None or complete_below < delta:
            diags.append("supplied spectrum is not certified complete below Delta")
    sel = w <= delta
    lam, qq = w[sel], q[:, sel]
    found = int(sel.sum())
    tw = np.linalg.eigvalsh(inner)
    if found != expected:
        diags.append(f"eigenspace below Delta has dimension {found}, expected {expected}")
        return SimulationCheck(delta, eta, eps, math.inf, math.inf, expected, found, lam, tw, diags)
    a = qq.conj().T @ v  # coordinates of P_<=Delta V in the eigenbasis
    x, sv, yh = np.linalg.svd(a, full_matrices=False)
    if sv.min() < 1e-12:
        diags.append("P_<=Delta V is rank deficient")
        return SimulationCheck(delta, eta, eps, math.inf, math.inf, expected, found, lam, tw, diags)
    coords = x @ yh  # V~ in eigenbasis coordinates
    vt = qq @ coords
    meas_eta = float(np.linalg.norm(vt - v, 2))
    diff = np.diag(lam) - coords @ inner @ coords.conj().T
    meas_eps = float(np.linalg.norm(diff, 2))
    return SimulationCheck(delta, eta, eps, meas_eta, meas_eps, expected, found, lam, tw, diags)


# ------------------------------------------------------------------ groundspace, idling, reduction

@dataclass
class GroundspaceReport:
    residual: float
    gap: float
    delta: float
    tol: float
    gap_rtol: float = 1e-9  # eigensolver round-off when the gap sits exactly on 2 Delta

    @property
    def passed(self):
        return self.residual <= self.tol and self.gap >= 2 * self.delta * (1 - self.gap_rtol)


def check_groundspace_history(h0, states, delta, tol=1e-10, gap=None) -> GroundspaceReport:
    """Max ||H0 eta|| over the states and lambda_1 of H0 on their orthogonal complement."""
    vecs = np.array([getattr(s, "vector", s) for s in states]).T
    res = max(float(np.linalg.norm(h0 @ vecs[:, i])) for i in range(vecs.shape[1]))
    if gap is None:
        a = _dense(h0)
        basis, _ = np.linalg.qr(vecs)
        comp = sla.null_space(basis.conj().T)
        gap = float(np.linalg.eigvalsh(comp.conj().T @ a @ comp)[0]) if comp.shape[1] else math.inf
    return GroundspaceReport(res, gap, delta, tol)


def alpha_state(n_sys, m, D, L):
    """|0^m> (x) (L+1)^-1/2 sum_{t=D}^{D+L} |t> in the (ancilla, clock-index) space."""
    T = D + L
    a = np.zeros((1 << m) * (T + 1), dtype=complex)
    a[D:T + 1] = 1 / math.sqrt(L + 1)
    return a


def idling_effective_hamiltonian(h, D, L, circuit_prefix=None):
    """H_eff = sum_mu E_mu |eta_mu><eta_mu| over system (x) clock index, for an uncomputed length-D circuit
    followed by L identities.  `circuit_prefix(t, psi)` returns U_t...U_1 psi; default is trivial."""
    h = _dense(h)
    T = D + L
    w, v = np.linalg.eigh(h)
    dim = h.shape[0]
    heff = np.zeros((dim * (T + 1),) * 2, dtype=complex)
    for mu in range(dim):
        hist = np.zeros((dim, T + 1), dtype=complex)
        for t in range(T + 1):
            psi = v[:, mu] if circuit_prefix is None or t >= D else circuit_prefix(t, v[:, mu])
            hist[:, t] = psi
        eta = hist.reshape(-1) / math.sqrt(T + 1)
        heff += w[mu] * np.outer(eta, eta.conj())
    return heff


@dataclass
class IdlingReport:
    measured: float
    chi: float
    chi_max_e: float
    chi_norm: float

    @property
    def equality_error(self):
        return abs(self.measured - self.chi_max_e)

    @property
    def passed(self):
        return self.measured <= self.chi_norm + 1e-12


def check_idling_bound(h_eff, h, D, L) -> IdlingReport:
    """||H_eff - H (x) |alpha><alpha||| versus chi max|E| and chi ||H||, chi = sqrt(D/(D+L+1))."""
    h = _dense(h)
    T = D + L
    a = np.zeros(T + 1, dtype=complex)
    a[D:] = 1 / math.sqrt(L + 1)
    target = np.kron(h, np.outer(a, a.conj()))
    measured = float(np.linalg.norm(_dense(h_eff) - target, 2))
    chi = math.sqrt(D / (D + L + 1))
    e = np.linalg.eigvalsh(h) if h.size else np.zeros(1)
    return IdlingReport(measured, chi, chi * float(np.abs(e).max()), chi * float(np.linalg.norm(h, 2)))


@dataclass
class PEFailure:
    miss: list
    bound: float
    zeta: float

    @property
    def worst(self):
        return max(self.miss) if self.miss else 0.0

    @property
    def passed(self):
        return self.worst <= self.bound + 2 * self.zeta


def pe_failure_rate(pe, h: LocalHamiltonian) -> PEFailure:
    """Simulate the PE circuit on every eigenstate of h and measure the p-bit window miss probability."""
    hd = to_dense_matrix(h)
    w, v = np.linalg.eigh(hd)
    n, p = h.n, pe.budget.p
    misses = []
    for mu in range(len(w)):
        st = np.kron(v[:, mu], np.eye(1 << p)[:, 0])
        out = apply_circuit(pe.circuit, st)
        miss, _ = window_probabilities(pe, out, w[mu])
        misses.append(miss)
    return PEFailure(misses, pe.budget.window_miss_bound(), pe.budget.zeta)


@dataclass
class ReductionReport:
    premise_error: float
    gap: float
    conclusion_eta: float
    conclusion_eps: float
    delta: float
    eta: float
    eps: float

    @property
    def premise_ok(self):
        return self.premise_error <= self.eps / 2 and self.gap >= 2 * self.delta

    @property
    def conclusion_ok(self):
        return self.conclusion_eps <= self.eps and self.conclusion_eta <= self.eta

    @property
    def status(self):
        if not self.premise_ok:
            return "premise-fail"
        return "pass" if self.conclusion_ok else "conclusion-fail"


def first_order_reduction_check(h0, h1, h, v, delta, eta, eps, zero_tol=1e-9) -> ReductionReport:
    """Measure the premise ||V H V^dag - H1|_L|| <= eps/2 with gap(H0) >= 2 Delta, and the conclusion."""
    h0d, h1d, hd = _dense(h0), _dense(h1), _dense(h)
    v = np.asarray(v, dtype=complex)
    w0, q0 = np.linalg.eigh(h0d)
    scale = max(1.0, np.abs(w0).max())
    kern = q0[:, np.abs(w0) <= zero_tol * scale]
    rest = w0[np.abs(w0) > zero_tol * scale]
    gap = float(rest.min()) if rest.size else math.inf
    pl = kern @ kern.conj().T
    premise = float(np.linalg.norm(v @ hd @ v.conj().T - pl @ h1d @ pl, 2))
    chk = check_simulation(hd, h0d + h1d, delta, eta, eps, Encoding([v], basis="reduced"))
    return ReductionReport(premise, gap, chk.measured_eta, chk.measured_eps, delta, eta, eps)


def projection_sandwich(h1, h2, subspace):
    """Return (lower, lambda_1(H), upper) for H = H1 + H2 with H2 zero on `subspace` columns."""
    h1d, h2d = _dense(h1), _dense(h2)
    s = np.asarray(subspace, dtype=complex)
    s, _ = np.linalg.qr(s)
    comp = sla.null_space(s.conj().T)
    j = float(np.linalg.eigvalsh(comp.conj().T @ h2d @ comp)[0]) if comp.shape[1] else math.inf
    n1 = float(np.linalg.norm(h1d, 2))
    if not j > 2 * n1:
        raise VerifyError(f"premise J > 2||H1|| fails: J={j}, ||H1||={n1}")
    upper = float(np.linalg.eigvalsh(s.conj().T @ h1d @ s)[0])
    lam = float(np.linalg.eigvalsh(h1d + h2d)[0])
    lower = upper - n1 ** 2 / (j - 2 * n1)
    return lower, lam, upper


# ------------------------------------------------------------------ reports

@dataclass
class SpectralReport:
    name: str
    values: dict
    spectra: dict = field(default_factory=dict)
    runtime: float = 0.0

    def text(self):
        lines = [f"[{self.name}]"]
        for k, v in self.values.items():
            lines.append(f"{k}={_fmt(v)}")
        if self.runtime:
            lines.append(f"runtime_s={self.runtime:.3f}")
        return "\n".join(lines) + "\n"

    def csv(self):
        buf = io.StringIO()
        buf.write("series,index,value\n")
        for name, vals in self.spectra.items():
            for i, x in enumerate(np.asarray(vals).ravel()):
                buf.write(f"{name},{i},{float(np.real(x)):.12g}\n")
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
