"""Relative entropy of coherence and global quantum discord.

The global discord of a state over factors ``A_1..A_n`` is minimised over
product dephasing bases. For a product basis the dephased marginals are the
marginals of the dephased joint state, so the objective collapses to

    sum_k S(rho_k) - S(rho) - [sum_k H(p_k) - H(p)]

where ``p`` is the joint outcome distribution in that basis. The optimizer
loop only needs ``diag(V^dag rho V)``; the exact relative-entropy form is
evaluated once at the returned basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .matqm import (
    DensityMatrix,
    HilbertSpec,
    InvalidSpace,
    UNITARY_ATOL,
    entropy_of_probs,
    hermitize,
    matrix_exp_skew,
    partial_trace,
    relative_entropy,
    von_neumann_entropy,
)

MODES = ("fock-fixed", "full")


@dataclass(frozen=True)
class ReferenceBasis:
    """One unitary per factor; its columns are that factor's basis vectors."""

    space: HilbertSpec
    unitaries: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(np.array(u, dtype=complex) for u in self.unitaries)
        if len(mats) != len(self.space.factors):
            raise InvalidSpace("one basis unitary is needed per factor")
        for u, d in zip(mats, self.space.dims):
            if u.shape != (d, d):
                raise InvalidSpace(f"basis matrix shape {u.shape} does not match factor dim {d}")
            if np.abs(u.conj().T @ u - np.eye(d)).max() > UNITARY_ATOL:
                raise ValueError("basis matrix is not unitary")
        object.__setattr__(self, "unitaries", mats)

    @classmethod
    def computational(cls, space: HilbertSpec) -> "ReferenceBasis":
        return cls(space, tuple(np.eye(d, dtype=complex) for d in space.dims))

    def full(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for u in self.unitaries:
            out = np.kron(out, u)
        return out

    def factor(self, label: str) -> "ReferenceBasis":
        i = self.space.index(label)
        return ReferenceBasis(self.space.subspace([label]), (self.unitaries[i],))

    def restrict(self, labels: Sequence[str]) -> "ReferenceBasis":
        sub = self.space.subspace(labels)
        return ReferenceBasis(sub, tuple(self.unitaries[self.space.index(l)] for l in sub.labels))


def _basis_for(rho: DensityMatrix, basis: ReferenceBasis | None) -> ReferenceBasis:
    if basis is None:
        return ReferenceBasis.computational(rho.space)
    if basis.space != rho.space:
        raise InvalidSpace(f"basis space {basis.space.labels} does not match state {rho.space.labels}")
    return basis


def dephase(rho: DensityMatrix, basis: ReferenceBasis | None = None) -> DensityMatrix:
    b = _basis_for(rho, basis)
    v = b.full()
    p = np.real(np.einsum("ji,jk,ki->i", v.conj(), rho.elements, v))
    return DensityMatrix(rho.space, hermitize((v * p) @ v.conj().T), check=False)


def coherence(rho: DensityMatrix, basis: ReferenceBasis | None = None) -> float:
    """Relative entropy of coherence in bits, ``S(diag rho) - S(rho)``."""
    v = _basis_for(rho, basis).full()
    p = np.real(np.einsum("ji,jk,ki->i", v.conj(), rho.elements, v))
    return entropy_of_probs(p) - von_neumann_entropy(rho)


def coherence_consumption(before: DensityMatrix, after: DensityMatrix,
                          basis: ReferenceBasis | None = None) -> float:
    if before.space != after.space:
        raise InvalidSpace("coherence consumption needs states on the same space")
    return coherence(before, basis) - coherence(after, basis)


def discord_objective(rho: DensityMatrix, basis: ReferenceBasis | None = None) -> float:
    """Global-discord objective at one product basis, from relative entropies."""
    b = _basis_for(rho, basis)
    total = relative_entropy(rho, dephase(rho, b))
    for label in rho.space.labels:
        local = partial_trace(rho, [label])
        total -= relative_entropy(local, dephase(local, b.factor(label)))
    return total


# -- basis parametrisations -------------------------------------------------

def bloch_basis(theta: float, phi: float) -> np.ndarray:
    """Qubit basis whose first vector has Bloch angles ``(theta, phi)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ph = np.exp(1j * phi)
    return np.array([[c, -s / ph], [ph * s, c]], dtype=complex)


def skew_basis(params: np.ndarray, dim: int) -> np.ndarray:
    """exp(A) for zero-diagonal anti-Hermitian A with ``dim*(dim-1)`` real entries."""
    n = dim * (dim - 1) // 2
    z = params[:n] + 1j * params[n:]
    a = np.zeros((dim, dim), dtype=complex)
    iu = np.triu_indices(dim, k=1)
    a[iu] = z
    a = a - a.conj().T
    return matrix_exp_skew(a)


def _n_params(dim: int) -> int:
    return 2 if dim == 2 else dim * (dim - 1)


def _factor_unitary(params: np.ndarray, dim: int) -> np.ndarray:
    if dim == 2:
        return bloch_basis(params[0], params[1])
    return skew_basis(params, dim)


# -- optimizer ---------------------------------------------------------------

def _product(us: Sequence[np.ndarray]) -> np.ndarray:
    v = us[0]
    for u in us[1:]:
        v = (v[:, None, :, None] * u[None, :, None, :]).reshape(len(v) * len(u), -1)
    return v


def _h(p: np.ndarray) -> float:
    p = p[p > 1e-12]
    return float(-(p @ np.log2(p)))


@dataclass(frozen=True)
class DiscordConfig:
    starts: int = 16
    tolerance: float = 1e-6
    max_evals: int = 2000
    mode: str = "fock-fixed"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"discord mode must be one of {MODES}, got {self.mode!r}")
        if self.starts < 1 or self.max_evals < 1 or self.tolerance <= 0:
            raise ValueError("starts and max_evals must be >= 1 and tolerance > 0")

    @classmethod
    def from_mapping(cls, cfg: Mapping | None) -> "DiscordConfig":
        if cfg is None:
            return cls()
        if isinstance(cfg, cls):
            return cfg
        known = {"starts", "tolerance", "max_evals", "mode", "seed"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown discord config keys: {sorted(extra)}")
        return cls(**dict(cfg))

    def to_dict(self) -> dict:
        return {"starts": self.starts, "tolerance": self.tolerance,
                "max_evals": self.max_evals, "mode": self.mode, "seed": self.seed}


@dataclass
class DiscordResult:
    value: float
    optimal_basis: ReferenceBasis
    optimizer_trace: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = True
    fock_fixed_value: float | None = None


class _Objective:
    """Fast objective over the free factors; other factors stay computational."""

    def __init__(self, rho: DensityMatrix, free: Sequence[int]):
        self.rho = rho.elements
        self.dims = rho.space.dims
        self.free = list(free)
        self.sizes = [_n_params(self.dims[i]) for i in self.free]
        self.const = -von_neumann_entropy(rho)
        for lab in rho.space.labels:
            self.const += von_neumann_entropy(partial_trace(rho, [lab]))
        self.n_evals = 0
        self.best = np.inf
        self.best_x: np.ndarray | None = None
        self.trace: list[tuple[int, float]] = []

    def unitaries(self, x: np.ndarray) -> list[np.ndarray]:
        us = [np.eye(d, dtype=complex) for d in self.dims]
        pos = 0
        for i, n in zip(self.free, self.sizes):
            us[i] = _factor_unitary(x[pos:pos + n], self.dims[i])
            pos += n
        return us

    def value(self, x: np.ndarray) -> float:
        v = _product(self.unitaries(x))
        p = np.real(np.sum(v.conj() * (self.rho @ v), axis=0))
        p = np.clip(p, 0.0, None).reshape(self.dims)
        val = _h(p.ravel()) + self.const
        n = len(self.dims)
        for k in range(n):
            axes = tuple(j for j in range(n) if j != k)
            val -= _h(p.sum(axis=axes))
        return val

    def __call__(self, x: np.ndarray) -> float:
        val = self.value(x)
        self.n_evals += 1
        if val < self.best:
            self.best = val
            self.best_x = np.array(x, dtype=float)
            self.trace.append((self.n_evals, float(val)))
        return val

    @property
    def n_params(self) -> int:
        return sum(self.sizes)


def _random_start(obj: _Objective, rng: np.random.Generator) -> np.ndarray:
    parts = []
    for i in obj.free:
        d = obj.dims[i]
        if d == 2:
            parts.append([rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)])
        else:
            parts.append(rng.normal(scale=0.5, size=d * (d - 1)))
    return np.concatenate(parts)


def _nelder_mead(obj: _Objective, x0: np.ndarray, cfg: DiscordConfig) -> bool:
    n = len(x0)
    step = 0.4
    simplex = np.vstack([x0] + [x0 + step * np.eye(n)[i] for i in range(n)])
    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "fatol": cfg.tolerance,
                            "xatol": 1e-7, "maxfev": cfg.max_evals, "adaptive": n > 4})
    return bool(res.success)


def _free_factors(rho: DensityMatrix, mode: str) -> list[int]:
    if mode == "full":
        return list(range(len(rho.space.factors)))
    labels = rho.space.labels
    return [labels.index("ancilla")] if "ancilla" in labels else [0]


def _optimize(rho: DensityMatrix, cfg: DiscordConfig, free: list[int],
              seeds: Sequence[np.ndarray] = ()) -> tuple[_Objective, bool]:
    obj = _Objective(rho, free)
    rng = np.random.default_rng(cfg.seed)
    starts = [np.zeros(obj.n_params)] + [np.asarray(s, dtype=float) for s in seeds]
    while len(starts) < cfg.starts:
        starts.append(_random_start(obj, rng))
    best_ok = False
    for x0 in starts:
        before = obj.best
        ok = _nelder_mead(obj, x0, cfg)
        if obj.best < before:
            best_ok = ok
    return obj, best_ok


def global_discord(rho: DensityMatrix, config: Mapping | DiscordConfig | None = None) -> DiscordResult:
    """Global discord in bits, minimised over product dephasing bases.

    ``mode="fock-fixed"`` optimises the ancilla basis only (the register keeps
    its Fock basis); ``mode="full"`` optimises every factor and is seeded with
    the fock-fixed optimum, so it never reports a larger value.
    """
    cfg = DiscordConfig.from_mapping(config)
    if len(rho.space.factors) < 2:
        raise InvalidSpace("global discord needs at least two factors")
    fixed_free = _free_factors(rho, "fock-fixed")
    obj, ok = _optimize(rho, cfg, fixed_free)
    fixed_value = None
    if cfg.mode == "full":
        fixed_basis = ReferenceBasis(rho.space, tuple(obj.unitaries(obj.best_x)))
        fixed_value = float(discord_objective(rho, fixed_basis))
        full_free = _free_factors(rho, "full")
        seed = np.zeros(sum(_n_params(rho.space.dims[i]) for i in full_free))
        pos = 0
        for i in full_free:
            n = _n_params(rho.space.dims[i])
            if i in fixed_free:
                seed[pos:pos + n] = obj.best_x
            pos += n
        offset, trace_fixed, best_fixed = obj.n_evals, obj.trace, obj.best
        obj, ok = _optimize(rho, cfg, full_free, seeds=[seed])
        # keep the combined trace monotone: only improvements on the fixed optimum
        obj.trace = trace_fixed + [(n + offset, v) for n, v in obj.trace if v < best_fixed]
    basis = ReferenceBasis(rho.space, tuple(obj.unitaries(obj.best_x)))
    value = discord_objective(rho, basis)
    return DiscordResult(value=float(value), optimal_basis=basis,
                         optimizer_trace=obj.trace, converged=ok,
                         fock_fixed_value=float(value) if fixed_value is None else fixed_value)
