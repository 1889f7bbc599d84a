"""Maximally-mixed register preparation by a depth-3 measure-and-feedback tree.

Each layer measures the ancilla in z, flips it back to |g> when it reads e, and
applies an adaptive joint unitary chosen by the measurement record. Branch
paths are strings over {"0", "1"} (0 = g, 1 = e), root first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .matqm import (
    SX,
    DensityMatrix,
    HilbertSpec,
    QuantumChannel,
    canonical_space,
    fidelity,
    hermitize,
    ket,
    partial_trace,
    projector,
)

SPACE = canonical_space(8)
REGISTER = HilbertSpec((("register", 8),))
DEPTH = 3

MEASUREMENT_PHASES = (0.0, 0.31, 0.65, 1.03, 1.43, 1.85, 2.30, 2.78)


class InvalidMap(ValueError):
    pass


class ZeroProbabilityBranch(ValueError):
    pass


def joint_ket(terms: Mapping[tuple[str, int], complex]) -> np.ndarray:
    """Normalized joint vector from ``{(ancilla, fock): amplitude}``."""
    v = np.zeros(SPACE.dim, dtype=complex)
    for (a, k), amp in terms.items():
        v[{"g": 0, "e": 1}[a] * 8 + k] += amp
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidMap("zero vector")
    return v / norm


def _sup(*pairs: tuple[str, int]) -> np.ndarray:
    return joint_ket({p: 1.0 for p in pairs})


# Tree states keyed by (depth, node index); node index = int(path, 2).
TABLE_STATES = {
    (0, 0): _sup(("g", 0), ("e", 0)),
    (1, 0): _sup(("g", 0), ("g", 7), ("e", 2), ("e", 5)),
    (1, 1): _sup(("g", 1), ("g", 6), ("e", 3), ("e", 4)),
    (2, 0): _sup(("g", 7), ("e", 0)),
    (2, 1): _sup(("g", 5), ("e", 2)),
    (2, 2): _sup(("g", 6), ("e", 1)),
    (2, 3): _sup(("g", 4), ("e", 3)),
    (3, 0): _sup(("g", 7)),
    (3, 1): _sup(("g", 0)),
    (3, 2): _sup(("g", 5)),
    (3, 3): _sup(("g", 2)),
    (3, 4): _sup(("g", 6)),
    (3, 5): _sup(("g", 1)),
    (3, 6): _sup(("g", 4)),
    (3, 7): _sup(("g", 3)),
}

# Adaptive gates keyed by the measurement path that selects them.
TABLE_GATES = {
    "0": (_sup(("g", 0)), TABLE_STATES[(1, 0)]),
    "1": (_sup(("g", 0)), TABLE_STATES[(1, 1)]),
    "00": (_sup(("g", 0), ("g", 7)), TABLE_STATES[(2, 0)]),
    "01": (_sup(("g", 2), ("g", 5)), TABLE_STATES[(2, 1)]),
    "10": (_sup(("g", 1), ("g", 6)), TABLE_STATES[(2, 2)]),
    "11": (_sup(("g", 3), ("g", 4)), TABLE_STATES[(2, 3)]),
}

LEAF_FOCK = {format(j, "03b"): int(np.argmax(np.abs(TABLE_STATES[(3, j)]))) for j in range(8)}


def table_state(path: str) -> np.ndarray:
    return TABLE_STATES[(len(path), int(path, 2) if path else 0)]


def _gram_schmidt_complete(cols: Sequence[np.ndarray], dim: int) -> np.ndarray:
    basis = [np.asarray(c, dtype=complex) for c in cols]
    for i in range(dim):
        if len(basis) == dim:
            break
        v = ket(dim, i)
        for b in basis:
            v = v - b * np.vdot(b, v)
        # second pass for numerical orthogonality
        for b in basis:
            v = v - b * np.vdot(b, v)
        n = np.linalg.norm(v)
        if n > 1e-8:
            basis.append(v / n)
    return np.column_stack(basis)


def complete_unitary(target_map: Sequence[tuple[np.ndarray, np.ndarray]], dim: int | None = None) -> np.ndarray:
    """Unitary sending each input vector to its output vector.

    Inputs and outputs are normalized here; both lists must share one Gram
    matrix. The complements are filled by Gram-Schmidt over the computational
    basis in index order.
    """
    pairs = [(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)) for a, b in target_map]
    if not pairs:
        return np.eye(dim or 1, dtype=complex)
    dim = dim or len(pairs[0][0])
    ins, outs = [], []
    for a, b in pairs:
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < 1e-12 or nb < 1e-12 or len(a) != dim or len(b) != dim:
            raise InvalidMap("target vectors must be non-zero and of matching dimension")
        ins.append(a / na)
        outs.append(b / nb)
    gi = np.array([[np.vdot(x, y) for y in ins] for x in ins])
    go = np.array([[np.vdot(x, y) for y in outs] for x in outs])
    if np.abs(gi - go).max() > 1e-9 or np.abs(gi - np.eye(len(ins))).max() > 1e-9:
        raise InvalidMap("inputs and outputs must each be orthonormal")
    q_in = _gram_schmidt_complete(ins, dim)
    q_out = _gram_schmidt_complete(outs, dim)
    return q_out @ q_in.conj().T


@dataclass(frozen=True)
class AdaptiveStep:
    branch_label: str
    target_map: tuple[np.ndarray, np.ndarray]
    completed_unitary: np.ndarray


def adaptive_steps() -> dict[str, AdaptiveStep]:
    return {path: AdaptiveStep(path, pair, complete_unitary([pair]))
            for path, pair in TABLE_GATES.items()}


_STEPS = adaptive_steps()


def unconditional_rotation() -> np.ndarray:
    c = s = 1 / np.sqrt(2)
    return np.kron(np.array([[c, -s], [s, c]]), np.eye(8))


def measurement_phase_channel() -> QuantumChannel:
    return QuantumChannel(REGISTER, (np.diag(np.exp(1j * np.array(MEASUREMENT_PHASES))),))


_PROJ = {"g": np.kron(np.diag([1.0, 0.0]), np.eye(8)), "e": np.kron(np.diag([0.0, 1.0]), np.eye(8))}
_FLIP = np.kron(SX, np.eye(8))


def _ancilla_projector(space: HilbertSpec, outcome: str) -> np.ndarray:
    d = space.dim_of("register")
    return np.kron(np.diag([1.0, 0.0] if outcome == "g" else [0.0, 1.0]), np.eye(d))


def measure_ancilla(rho: DensityMatrix, outcome: str | None = None,
                    rng: np.random.Generator | None = None) -> tuple[str, DensityMatrix, float]:
    """Projective z measurement of the ancilla.

    With ``outcome`` given, that branch is returned; otherwise one is drawn
    from ``rng``.
    """
    probs = {o: float(np.real(np.trace(_ancilla_projector(rho.space, o) @ rho.elements))) for o in "ge"}
    if outcome is None:
        if rng is None:
            raise ValueError("either an outcome or an rng is required")
        outcome = "g" if rng.random() < probs["g"] else "e"
    if outcome not in probs:
        raise ValueError("outcome must be 'g' or 'e'")
    p = probs[outcome]
    if p <= 1e-15:
        raise ZeroProbabilityBranch(f"outcome {outcome} has probability {p:.3e}")
    proj = _ancilla_projector(rho.space, outcome)
    post = proj @ rho.elements @ proj / p
    return outcome, DensityMatrix(rho.space, hermitize(post), check=False), p


def reset_ancilla(rho: DensityMatrix, outcome: str) -> DensityMatrix:
    if outcome == "g":
        return rho
    d = rho.space.dim_of("register")
    flip = np.kron(SX, np.eye(d))
    return DensityMatrix(rho.space, hermitize(flip @ rho.elements @ flip), check=False)


def layer_channel(path: str, phase_model: QuantumChannel | None = None,
                  compensate: bool = False) -> QuantumChannel:
    """Kraus form of the layer applied at tree node ``path`` (measure, reset, gate).

    ``compensate`` folds the inverse measurement phase into the adaptive gate,
    as a pulse calibrated against the phase model would.
    """
    layer = len(path) + 1
    phase = np.eye(SPACE.dim) if phase_model is None else np.kron(np.eye(2), phase_model.kraus[0])
    kraus = []
    for bit, outcome in (("0", "g"), ("1", "e")):
        k = phase @ _PROJ[outcome]
        if outcome == "e":
            k = _FLIP @ k
        if layer < DEPTH:
            gate = _STEPS[path + bit].completed_unitary
            if compensate:
                gate = gate @ phase.conj().T
            k = gate @ k
        kraus.append(k)
    return QuantumChannel(SPACE, tuple(kraus))


@dataclass
class ChannelTrace:
    """Branch probabilities (every node, keyed by path) and leaf register states."""

    probabilities: dict[str, float]
    leaf_states: dict[str, DensityMatrix]
    node_fidelity: dict[str, float] = field(default_factory=dict)
    seed: int | None = None
    counts: dict[str, int] | None = None

    def leaf_probabilities(self) -> dict[str, float]:
        return {p: v for p, v in sorted(self.probabilities.items()) if len(p) == DEPTH}


def _branch_tree(phase_model: QuantumChannel | None, noise=None,
                 compensate: bool = False) -> tuple[dict, dict]:
    """Unnormalized joint state at every node, plus node probabilities."""
    from .noise import dissipate

    def settle(mat: np.ndarray, duration_key: str) -> np.ndarray:
        if noise is None:
            return mat
        w = np.trace(mat).real
        if w <= 0:
            return mat
        rho = DensityMatrix(SPACE, hermitize(mat / w), check=False)
        return w * dissipate(rho, noise, noise.gate_durations[duration_key]).elements

    root = unconditional_rotation() @ projector(ket(16, 0)) @ unconditional_rotation().conj().T
    nodes = {"": root}
    probs = {"": 1.0}
    frontier = [""]
    for layer in range(1, DEPTH + 1):
        nxt = []
        for path in frontier:
            chan = layer_channel(path, phase_model, compensate)
            for bit, k in zip("01", chan.kraus):
                child = k @ nodes[path] @ k.conj().T
                w = float(np.trace(child).real)
                if w <= 1e-15:
                    continue
                if layer < DEPTH:
                    child = settle(child, "adaptive")
                nodes[path + bit] = hermitize(child)
                probs[path + bit] = w
                nxt.append(path + bit)
        frontier = nxt
    return nodes, probs


def run_binary_tree(phase_model: QuantumChannel | None = None, sampled: bool = False,
                    seed: int | None = None, runs: int = 10_000, noise=None,
                    compensate: bool = False) -> tuple[DensityMatrix, ChannelTrace]:
    """Register state produced by the tree and the record of its branches.

    Deterministic mode sums all branches exactly. Sampled mode draws ``runs``
    measurement records with a seeded generator and returns the empirical
    mixture of the visited leaves. ``noise`` (a ``NoiseParams``) inserts a
    dissipation segment after every adaptive gate.
    """
    nodes, probs = _branch_tree(phase_model, noise, compensate)
    leaves = sorted(p for p in nodes if len(p) == DEPTH)
    leaf_states = {}
    for p in leaves:
        red = partial_trace(DensityMatrix(SPACE, nodes[p] / probs[p], check=False), ["register"])
        leaf_states[p] = red
    node_fid = {}
    for p, mat in nodes.items():
        ideal = projector(table_state(p))
        node_fid[p] = fidelity(mat / probs[p], ideal)

    if not sampled:
        reg = sum(probs[p] * leaf_states[p].elements for p in leaves)
        out = DensityMatrix(REGISTER, hermitize(reg / np.trace(reg).real), check=False)
        return out, ChannelTrace(probs, leaf_states, node_fid, seed=None)

    rng = np.random.default_rng(seed)
    draws = rng.random((runs, DEPTH))
    counts = {p: 0 for p in leaves}
    for row in draws:
        path = ""
        for u in row:
            p_g = probs.get(path + "0", 0.0) / probs[path]
            path += "0" if u < p_g else "1"
        counts[path] += 1
    reg = sum(counts[p] * leaf_states[p].elements for p in leaves) / runs
    freq = {p: counts[p] / runs for p in leaves}
    out = DensityMatrix(REGISTER, hermitize(reg), check=False)
    return out, ChannelTrace(freq, leaf_states, node_fid, seed=seed, counts=counts)


def maximally_mixed_register() -> DensityMatrix:
    return DensityMatrix(REGISTER, np.eye(8) / 8)
