"""Grid layout of a line circuit, uncompute-and-idle wrapping and spatial sparsity certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import SWAP, Circuit, CircuitError, Gate, gate_text

I2 = np.eye(2, dtype=complex)


@dataclass
class GridCircuit:
    rows: int  # N, the line length
    cols: int  # R0, one column per line gate
    gates: list = field(default_factory=list)  # Gate objects on grid indices, in execution order
    initial: tuple = ()  # logical qubit -> grid index before the circuit
    final: tuple = ()  # logical qubit -> grid index after the circuit

    @property
    def qubit_count(self):
        return self.rows * self.cols

    def index(self, row, col):
        return col * self.rows + row

    def position(self, idx):
        return idx % self.rows, idx // self.rows

    def as_circuit(self):
        return Circuit(self.qubit_count, list(self.gates))

    def text(self):
        lines = [f"GRID {self.rows} {self.cols}",
                 "INITIAL " + " ".join(map(str, self.initial)),
                 "FINAL " + " ".join(map(str, self.final))]
        for step, g in enumerate(self.gates):
            at = " ".join("@({},{})".format(*self.position(t)) for t in g.targets)
            lines.append(f"{gate_text(g)} {at} step={step}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SparsityCertificate:
    max_gates_per_qubit: int
    max_step_distance: int
    count_limit: int = 3
    distance_limit: int = 2

    @property
    def passed(self):
        return self.max_gates_per_qubit <= self.count_limit and self.max_step_distance <= self.distance_limit


def sparsify_to_grid(c: Circuit, prune_identities=False) -> GridCircuit:
    """Column i runs line gate i (identities on the other rows, top to bottom), then swaps the column right
    (bottom to top). Data ends in the last column; the relocation is recorded in `final`."""
    if not c.is_nearest_neighbor():
        raise CircuitError("sparsify_to_grid needs a nearest-neighbor circuit")
    pos = c.line_order
    line_gates = [g for g in c.gates if not (prune_identities and g.is_identity())]
    n, r0 = c.qubit_count, len(line_gates)
    grid = GridCircuit(n, r0, [], tuple(pos[q] for q in range(n)), ())
    if r0 == 0:
        grid.final = grid.initial
        return grid
    for col, g in enumerate(line_gates):
        rows = sorted(pos[t] for t in g.targets)
        # line position -> grid index in this column; gate matrix keeps its target order
        tg = tuple(grid.index(pos[t], col) for t in g.targets)
        row = 0
        while row < n:
            if row == rows[0]:
                grid.gates.append(Gate(tg, g.matrix, g.label, dict(g.meta)))
                row = rows[-1] + 1
            else:
                grid.gates.append(Gate((grid.index(row, col),), I2, "identity"))
                row += 1
        if col + 1 < r0:
            for row in reversed(range(n)):
                grid.gates.append(Gate((grid.index(row, col), grid.index(row, col + 1)), SWAP, "swap"))
    grid.final = tuple(grid.index(pos[q], r0 - 1) for q in range(n))
    return grid


def _positions(g, t):
    if isinstance(g, GridCircuit):
        return [g.position(t)]
    return [(t, 0)]


def check_spatial_sparsity(g, count_limit=3, distance_limit=2) -> SparsityCertificate:
    """Per-qubit gate counts and the Manhattan diameter of consecutive gate supports.

    Accepts a GridCircuit or a plain Circuit (placed as a single column)."""
    gates = g.gates
    counts = {}
    for gate in gates:
        for t in gate.targets:
            counts[t] = counts.get(t, 0) + 1
    dist = 0
    for a, b in zip(gates, gates[1:]):
        pts = [p for t in a.targets + b.targets for p in _positions(g, t)]
        d = max(abs(p[0] - q[0]) + abs(p[1] - q[1]) for p in pts for q in pts)
        dist = max(dist, d)
    return SparsityCertificate(max(counts.values(), default=0), dist, count_limit, distance_limit)


def idling_length(d: int, norm_h: float, eps: float) -> int:
    """Smallest L >= 0 with sqrt(D/(D+L+1)) * ||H|| <= eps."""
    if d < 1 or eps <= 0:
        raise ValueError("need D >= 1 and eps > 0")
    if norm_h == 0:
        return 0
    raw = d * norm_h ** 2 / eps ** 2 - d - 1
    ell = max(0, math.ceil(raw - 1e-9))
    while math.sqrt(d / (d + ell + 1)) * norm_h > eps * (1 + 1e-12):
        ell += 1
    return ell


def idle_chi(d: int, ell: int) -> float:
    return math.sqrt(d / (d + ell + 1))


@dataclass
class IdledCircuit(Circuit):
    """U_circuit = 1^L U^dagger 1^s U with the readout window bookkeeping."""

    t0: int = 0
    s: int = 0
    idle: int = 0
    readout: tuple = ()  # qubit carrying energy bit b (b = 1..s)

    @property
    def T(self):
        return len(self.gates)

    @property
    def window(self):
        """1-based clock times t0+1 .. t0+s at which bit b is read."""
        return tuple(range(self.t0 + 1, self.t0 + self.s + 1))

    @property
    def computation_length(self):
        """D = 2 t0 + s, the part of the history before idling."""
        return 2 * self.t0 + self.s


def _snake(grid_or_n):
    if isinstance(grid_or_n, GridCircuit):
        g = grid_or_n
        order = []
        for col in range(max(g.cols, 1)):
            rows = range(g.rows) if col % 2 == 0 else reversed(range(g.rows))
            order += [g.index(r, col) for r in rows]
        return order
    return list(range(grid_or_n))


def uncompute_and_idle(g, s: int, ell: int, readout=None) -> IdledCircuit:
    """Append s identities on the readout qubits, then the inverse circuit, then L idle identities.

    `g` may be a GridCircuit or a plain Circuit. `readout` lists the logical qubits holding
    energy bits 1..s (default: qubits 0..s-1). Idle identities walk a snake path from the grid origin."""
    if s < 1 or ell < 0:
        raise ValueError("need s >= 1 and L >= 0")
    if isinstance(g, GridCircuit):
        nq, forward, final = g.qubit_count, list(g.gates), g.final
    else:
        nq, forward, final = g.qubit_count, list(g.gates), tuple(range(g.qubit_count))
    nq = max(nq, 1)
    readout = tuple(range(s)) if readout is None else tuple(readout)
    if len(readout) != s:
        raise ValueError("readout must list s qubits")
    if not final:
        final = tuple(range(nq))
    rq = tuple(final[q] if q < len(final) else q for q in readout)
    gates = list(forward)
    gates += [Gate((q,), I2, "identity") for q in rq]
    gates += [x.dagger("uncompute") for x in reversed(forward)]
    path = _snake(g if isinstance(g, GridCircuit) and g.cols else nq)
    gates += [Gate((path[i % len(path)],), I2, "idle") for i in range(ell)]
    return IdledCircuit(nq, gates, None, t0=len(forward), s=s, idle=ell, readout=rq)
