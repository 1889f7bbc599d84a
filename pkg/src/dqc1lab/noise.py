"""Lindblad simulation of the ancilla-plus-storage-cavity system.

Times are in microseconds and angular frequencies in rad/us. The Hamiltonian is
written in the frame rotating at both bare frequencies, leaving only the
dispersive term ``-chi a^dag a |e><e|``.

Gates are applied instantaneously and followed by a dissipation-only segment of
the configured duration: the gates are modelled as register-independent pulses,
so the dispersive phase accrued during them is taken as compensated. Only the
controlled-phase wait ``t = phi / chi`` evolves under the dispersive Hamiltonian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import sparse

from .matqm import (
    SIGMA_MINUS,
    SZ,
    DensityMatrix,
    HilbertSpec,
    Operator,
    annihilation,
    hermitize,
    number_op,
)

DEFAULT_GATE_DURATIONS = {
    "hadamard": 1.0,
    "tomography": 1.0,
    "measurement": 0.0,
    "adaptive": 1.0,
}


class IntegratorUnstable(RuntimeError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(f"{message}; try dt <= {suggested_dt:g} us")
        self.suggested_dt = suggested_dt


class LeakageWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NoiseParams:
    T1: float = 30.0
    Tphi: float = 120.0
    tau_s: float = 143.0
    chi_over_2pi: float = 1.90
    cavity_truncation: int = 10
    gate_durations: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_GATE_DURATIONS))
    dt: float = 1e-3

    def __post_init__(self):
        for name in ("T1", "Tphi", "tau_s", "chi_over_2pi", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.cavity_truncation < 9:
            raise ValueError("cavity_truncation must be >= 9")
        merged = dict(DEFAULT_GATE_DURATIONS)
        merged.update({str(k): float(v) for k, v in dict(self.gate_durations).items()})
        if any(v < 0 for v in merged.values()):
            raise ValueError("gate durations must be >= 0")
        object.__setattr__(self, "gate_durations", merged)

    @property
    def chi(self) -> float:
        return 2 * math.pi * self.chi_over_2pi

    @classmethod
    def from_mapping(cls, cfg: Mapping | None) -> "NoiseParams":
        if cfg is None:
            return cls()
        known = {"T1", "Tphi", "tau_s", "chi_over_2pi", "cavity_truncation", "gate_durations", "dt"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown noise parameter keys: {sorted(extra)}")
        return cls(**dict(cfg))

    def to_dict(self) -> dict:
        return {"T1": self.T1, "Tphi": self.Tphi, "tau_s": self.tau_s,
                "chi_over_2pi": self.chi_over_2pi, "cavity_truncation": self.cavity_truncation,
                "gate_durations": dict(sorted(self.gate_durations.items())), "dt": self.dt}

    @classmethod
    def noiseless(cls, **kw) -> "NoiseParams":
        return cls(T1=math.inf, Tphi=math.inf, tau_s=math.inf, **kw)


def joint_space(params: NoiseParams) -> HilbertSpec:
    return HilbertSpec((("ancilla", 2), ("register", params.cavity_truncation)))


@dataclass(frozen=True)
class Lindbladian:
    space: HilbertSpec
    H: Operator
    collapse_ops: tuple[np.ndarray, ...] = ()

    def superoperator(self) -> np.ndarray:
        """Generator acting on row-major ``vec(rho)``."""
        n = self.space.dim
        eye = np.eye(n)
        h = self.H.elements
        gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for c in self.collapse_ops:
            cdc = c.conj().T @ c
            gen += np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
        return gen


def dispersive_hamiltonian(params: NoiseParams) -> Operator:
    space = joint_space(params)
    excited = np.diag([0.0, 1.0])
    h = -params.chi * np.kron(excited, number_op(params.cavity_truncation))
    return Operator(space, h, "hermitian")


def collapse_operators(params: NoiseParams) -> tuple[np.ndarray, ...]:
    n = params.cavity_truncation
    ops = []
    if math.isfinite(params.T1):
        ops.append(math.sqrt(1 / params.T1) * np.kron(SIGMA_MINUS, np.eye(n)))
    if math.isfinite(params.Tphi):
        ops.append(math.sqrt(1 / (2 * params.Tphi)) * np.kron(SZ, np.eye(n)))
    if math.isfinite(params.tau_s):
        ops.append(math.sqrt(1 / params.tau_s) * np.kron(np.eye(2), annihilation(n)))
    return tuple(ops)


def lindbladian(params: NoiseParams, hamiltonian: bool = True) -> Lindbladian:
    space = joint_space(params)
    h = dispersive_hamiltonian(params) if hamiltonian else Operator(space, np.zeros((space.dim,) * 2), "hermitian")
    return Lindbladian(space, h, collapse_operators(params))


def lindblad_rhs(L: Lindbladian, rho: DensityMatrix | np.ndarray) -> np.ndarray:
    r = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho)
    h = L.H.elements
    out = -1j * (h @ r - r @ h)
    for c in L.collapse_ops:
        cd = c.conj().T
        cdc = cd @ c
        out = out + c @ r @ cd - 0.5 * (cdc @ r + r @ cdc)
    return out


def rk4_propagator(gen: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for the linear system ``dv/dt = gen v``."""
    n = len(gen)
    hg = h * gen
    out = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 5):
        term = term @ hg / k
        out = out + term
    return out


def _frame(L: Lindbladian) -> tuple[np.ndarray | None, np.ndarray]:
    """Split a diagonal Hamiltonian off the generator.

    Returns the frequencies ``lam`` of the Hamiltonian part on row-major
    ``vec(rho)`` and the dissipator alone; ``lam`` is None when H has
    off-diagonal elements and the full generator must be integrated directly.
    """
    h = L.H.elements
    if np.abs(h - np.diag(np.diag(h))).max() > 0:
        return None, L.superoperator()
    e = np.real(np.diag(h))
    lam = (-1j * (e[:, None] - e[None, :])).reshape(-1)
    diss = Lindbladian(L.space, Operator(L.space, np.zeros_like(h), "hermitian"), L.collapse_ops)
    return lam, sparse.csr_array(diss.superoperator())


def evolve(L: Lindbladian, rho0: DensityMatrix, duration: float, dt: float = 1e-3,
           observer: Callable[[int, np.ndarray], None] | None = None) -> DensityMatrix:
    """Fixed-step RK4 integration of the master equation over ``duration`` us.

    A diagonal Hamiltonian is handled exactly in its interaction frame, so RK4
    only has to resolve the (slow) dissipator. The step is shrunk to
    ``duration / ceil(duration / dt)`` so the final time is hit exactly.
    ``observer(step, rho)`` is called after every step with the lab-frame state.
    """
    if duration < 0 or dt <= 0:
        raise ValueError("duration must be >= 0 and dt > 0")
    if rho0.space != L.space:
        raise ValueError("state and generator spaces differ")
    if duration == 0:
        return rho0
    steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / steps
    n = L.space.dim
    lam, gen = _frame(L)
    v = rho0.elements.reshape(-1).astype(complex)
    if lam is None:
        prop = rk4_propagator(gen, h)
        for i in range(steps):
            v = prop @ v
            if observer is not None:
                observer(i + 1, v.reshape(n, n))
    else:
        def f(t, x):
            ph = np.exp(lam * t)
            return (gen @ (ph * x)) / ph

        for i in range(steps):
            t = i * h
            k1 = f(t, v)
            k2 = f(t + h / 2, v + h / 2 * k1)
            k3 = f(t + h / 2, v + h / 2 * k2)
            k4 = f(t + h, v + h * k3)
            v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if observer is not None:
                observer(i + 1, (np.exp(lam * (t + h)) * v).reshape(n, n))
        v = np.exp(lam * duration) * v
    rho = v.reshape(n, n)
    herm = np.abs(rho - rho.conj().T).max()
    tr = np.trace(rho).real
    lam_min = np.linalg.eigvalsh(hermitize(rho)).min() if np.all(np.isfinite(rho)) else -np.inf
    if lam_min < -1e-6 or not herm <= 1e-8 or not abs(tr - 1) <= 1e-8:
        raise IntegratorUnstable(
            f"state left the physical set (min eig {lam_min:.2e}, trace {tr:.12f})", h / 2)
    return DensityMatrix(L.space, hermitize(rho), check=False)


@dataclass
class NoisyRun:
    """Post-gate state on the 2 x d computational block plus diagnostics."""

    state: DensityMatrix
    pre_gate: DensityMatrix
    leaked_population: float
    warnings: list[str] = field(default_factory=list)
    dt: float = 1e-3
    gate_durations: dict = field(default_factory=dict)


def restrict_block(rho: DensityMatrix, d: int) -> tuple[DensityMatrix, float]:
    """Project onto ancilla (x) first-d-Fock-levels and renormalize."""
    n = rho.space.dim_of("register")
    keep = np.concatenate([np.arange(d), n + np.arange(d)])
    block = rho.elements[np.ix_(keep, keep)]
    kept = np.trace(block).real
    space = HilbertSpec((("ancilla", 2), ("register", d)))
    return DensityMatrix(space, hermitize(block / kept), check=False), float(1 - kept)


def embed_register(rho: DensityMatrix, trunc: int) -> DensityMatrix:
    """Zero-pad the register factor of an ancilla (x) register state to ``trunc`` levels."""
    d = rho.space.dim_of("register")
    if trunc < d:
        raise ValueError("cavity truncation smaller than register dimension")
    keep = np.concatenate([np.arange(d), trunc + np.arange(d)])
    out = np.zeros((2 * trunc, 2 * trunc), dtype=complex)
    out[np.ix_(keep, keep)] = rho.elements
    return DensityMatrix(HilbertSpec((("ancilla", 2), ("register", trunc))), out, check=False)


@dataclass(frozen=True)
class PreparedNoise:
    params: NoiseParams
    pre_gate_full: DensityMatrix
    pre_gate: DensityMatrix
    wait: Lindbladian


def noisy_pre_gate(config) -> PreparedNoise:
    from .dqc1 import hadamard_equiv, initial_state

    params = config.noise
    if params is None:
        raise ValueError("config.noise must be set for a noisy run")
    trunc = params.cavity_truncation
    rho = embed_register(initial_state(config), trunc)
    rot = np.kron(hadamard_equiv().elements, np.eye(trunc))
    rho = DensityMatrix(rho.space, hermitize(rot @ rho.elements @ rot.conj().T), check=False)
    rho = evolve(lindbladian(params, hamiltonian=False), rho,
                 params.gate_durations["hadamard"], params.dt)
    block, _ = restrict_block(rho, config.register_dim)
    return PreparedNoise(params, rho, block, lindbladian(params, hamiltonian=True))


def noisy_circuit(config, phi: float, prepared: PreparedNoise | None = None) -> NoisyRun:
    """Noisy post-gate state: Hadamard, its dissipative segment, then a
    dispersive wait of ``phi / chi``."""
    prep = prepared if prepared is not None else noisy_pre_gate(config)
    params = prep.params
    if phi < 0:
        raise ValueError("the controlled-phase wait needs phi >= 0")
    rho = evolve(prep.wait, prep.pre_gate_full, phi / params.chi, params.dt)
    block, leaked = restrict_block(rho, config.register_dim)
    warnings = []
    if leaked > 0.05:
        warnings.append(f"{LeakageWarning.__name__}: leaked population {leaked:.4f} exceeds 0.05")
    return NoisyRun(block, prep.pre_gate, leaked, warnings, params.dt, dict(params.gate_durations))


def dissipate(rho: DensityMatrix, params: NoiseParams, duration: float) -> DensityMatrix:
    """Dissipation-only segment on a 2 x d state, embedded into the cavity truncation."""
    d = rho.space.dim_of("register")
    full = embed_register(rho, params.cavity_truncation)
    full = evolve(lindbladian(params, hamiltonian=False), full, duration, params.dt)
    block, _ = restrict_block(full, d)
    return block
