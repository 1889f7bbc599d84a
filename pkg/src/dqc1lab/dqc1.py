"""The one-clean-qubit circuit: Hadamard-equivalent rotation, conditional cavity
phase gate, normalized-trace readout, and the phase sweep."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .matqm import (
    DensityMatrix,
    HilbertSpec,
    Operator,
    SX,
    SY,
    canonical_space,
    conjugate,
    fidelity,
    kron_states,
    partial_trace,
)
from .resources import (
    DiscordConfig,
    DiscordResult,
    coherence,
    global_discord,
)

ANCILLA = HilbertSpec((("ancilla", 2),))


def default_phi_grid(points: int = 65) -> tuple[float, ...]:
    if points < 2:
        raise ValueError("a phase grid needs at least two points")
    return tuple(float(x) for x in np.linspace(0.0, 2 * np.pi, points))


def ground_ancilla() -> DensityMatrix:
    return DensityMatrix(ANCILLA, np.diag([1.0, 0.0]))


@dataclass(frozen=True)
class Dqc1Config:
    register_dim: int = 8
    phi_grid: tuple[float, ...] = field(default_factory=default_phi_grid)
    initial_ancilla: DensityMatrix = field(default_factory=ground_ancilla)
    noise: "NoiseParams | None" = None
    discord_mode: str = "fock-fixed"
    discord: DiscordConfig = field(default_factory=DiscordConfig)

    def __post_init__(self):
        if self.register_dim < 2:
            raise ValueError("register_dim must be >= 2")
        grid = tuple(float(p) for p in self.phi_grid)
        if not all(math.isfinite(p) for p in grid):
            raise ValueError("phase grid values must be finite")
        object.__setattr__(self, "phi_grid", grid)
        if self.initial_ancilla.space != ANCILLA:
            raise ValueError("initial_ancilla must live on the ancilla factor")
        if self.discord.mode != self.discord_mode:
            object.__setattr__(self, "discord",
                               DiscordConfig(**{**self.discord.to_dict(), "mode": self.discord_mode}))

    @property
    def space(self) -> HilbertSpec:
        return canonical_space(self.register_dim)


def hadamard_equiv() -> Operator:
    """pi/2 rotation about y; sends |g> to (|g> + |e>)/sqrt(2)."""
    c = s = 1 / math.sqrt(2)
    return Operator(ANCILLA, np.array([[c, -s], [s, c]]), "unitary")


def phase_unitary(phi: float, d: int) -> np.ndarray:
    return np.diag(np.exp(1j * phi * np.arange(d)))


def controlled_phase(phi: float, d: int) -> Operator:
    """|g><g| (x) 1 + |e><e| (x) exp(i phi a^dag a) on the first d Fock levels."""
    if d < 2:
        raise ValueError("register dimension must be >= 2")
    diag = np.concatenate([np.ones(d), np.exp(1j * phi * np.arange(d))])
    return Operator(canonical_space(d), np.diag(diag), "unitary")


def normalized_trace(phi: float, d: int) -> complex:
    return complex(np.mean(np.exp(1j * phi * np.arange(d))))


def initial_state(config: Dqc1Config) -> DensityMatrix:
    reg = DensityMatrix(HilbertSpec((("register", config.register_dim),)),
                        np.eye(config.register_dim) / config.register_dim)
    return kron_states(config.initial_ancilla, reg)


def pre_gate_state(config: Dqc1Config) -> DensityMatrix:
    rot = np.kron(hadamard_equiv().elements, np.eye(config.register_dim))
    return conjugate(rot, initial_state(config))


def run_circuit(config: Dqc1Config, phi: float) -> DensityMatrix:
    """Ideal post-gate joint state for phase ``phi``."""
    gate = controlled_phase(phi, config.register_dim).elements
    return conjugate(gate, pre_gate_state(config))


def ideal_state(phi: float, d: int = 8) -> DensityMatrix:
    return run_circuit(Dqc1Config(register_dim=d, phi_grid=(phi,)), phi)


def trace_estimate(rho: DensityMatrix) -> tuple[float, float]:
    """(<sigma_x>, <sigma_y>) of the ancilla marginal, i.e. Re and Im of Tr(U)/d."""
    anc = partial_trace(rho, ["ancilla"])
    return float(anc.expect(SX).real), float(anc.expect(SY).real)


@dataclass
class SweepRecord:
    phi: float
    trace_re: float
    trace_im: float
    C_before: float
    C_after: float
    delta_C: float
    discord: DiscordResult
    joint_fidelity: float
    state: DensityMatrix
    leaked_population: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if abs(complex(self.trace_re, self.trace_im)) > 1 + 1e-9:
            raise ValueError("trace estimate exceeds unit modulus")


def worker_count(requested: int | None = None) -> int:
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("DQC1LAB_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def ordered_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Map preserving input order; threads only when more than one worker is allowed."""
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _record(config: Dqc1Config, phi: float, rho: DensityMatrix, pre: DensityMatrix,
            leaked: float = 0.0, warnings: Iterable[str] = ()) -> SweepRecord:
    c_before = coherence(partial_trace(pre, ["ancilla"]))
    c_after = coherence(partial_trace(rho, ["ancilla"]))
    re, im = trace_estimate(rho)
    disc = global_discord(rho, config.discord)
    ideal = run_circuit(config, phi)
    return SweepRecord(
        phi=phi, trace_re=re, trace_im=im,
        C_before=c_before, C_after=c_after, delta_C=c_before - c_after,
        discord=disc, joint_fidelity=fidelity(rho, ideal), state=rho,
        leaked_population=leaked, warnings=list(warnings),
    )


def sweep(config: Dqc1Config, workers: int | None = None) -> list[SweepRecord]:
    """One record per grid phase, in grid order."""
    if config.noise is None:
        pre = pre_gate_state(config)
        return ordered_map(lambda phi: _record(config, phi, run_circuit(config, phi), pre),
                           config.phi_grid, workers)

    from .noise import noisy_circuit, noisy_pre_gate

    prepared = noisy_pre_gate(config)

    def point(phi: float) -> SweepRecord:
        run = noisy_circuit(config, phi, prepared=prepared)
        return _record(config, phi, run.state, run.pre_gate, run.leaked_population, run.warnings)

    return ordered_map(point, config.phi_grid, workers)
