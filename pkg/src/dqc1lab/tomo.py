"""Joint Wigner tomography: displaced-parity forward model, single-shot
sampling, constrained least-squares reconstruction and bootstrap errors.

The displaced parity obeys ``D(b) P D(b)^dag = D(2b) P``, so its matrix
elements between Fock states have a closed Laguerre form and the forward model
needs no truncation buffer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .matqm import (
    PAULI,
    DensityMatrix,
    HilbertSpec,
    annihilation,
    fidelity,
    hermitize,
    matrix_exp_skew,
    partial_trace,
)
from .resources import DiscordConfig, coherence, global_discord

SETTINGS = ("I", "X", "Y", "Z")
W_SCALE = 2 / math.pi
# Outcome codes: 2 * (ancilla reads -1) + (parity reads -1).
CODE_SIGNS = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.int8)
PRODUCT_SIGN = CODE_SIGNS[:, 0] * CODE_SIGNS[:, 1]


class TruncationError(ValueError):
    pass


class NotInformationallyComplete(ValueError):
    def __init__(self, rank: int, needed: int):
        super().__init__(f"measurement map has rank {rank}, needs {needed}")
        self.rank = rank
        self.needed = needed


class InvalidConfig(ValueError):
    pass


def displacement(beta: complex, trunc: int, levels: int = 8, tol: float = 1e-6) -> np.ndarray:
    """Matrix of D(beta) between the first ``trunc`` Fock states.

    Computed by exponentiating on a larger buffer and cropping. Raises
    ``TruncationError`` when the first ``levels`` columns leak more than
    ``tol`` weight beyond ``trunc`` (the unitarity defect on that block).
    """
    if trunc < 9:
        raise TruncationError("truncation must be at least 9 levels")
    buf = trunc + 40 + int(8 * abs(beta) ** 2)
    a = annihilation(buf)
    full = matrix_exp_skew(beta * a.conj().T - np.conj(beta) * a)
    d = full[:trunc, :trunc]
    k = min(levels, trunc)
    defect = np.abs(d[:, :k].conj().T @ d[:, :k] - np.eye(k)).max()
    if defect > tol:
        raise TruncationError(f"|beta|={abs(beta):.3f} leaks {defect:.2e} beyond {trunc} levels")
    return d


def parity_op(trunc: int) -> np.ndarray:
    return np.diag((-1.0) ** np.arange(trunc)).astype(complex)


def displacement_elements(alpha: complex, dim: int) -> np.ndarray:
    """Exact <m|D(alpha)|n> for m, n < dim from the Laguerre closed form."""
    x = abs(alpha) ** 2
    m = np.arange(dim)[:, None]
    n = np.arange(dim)[None, :]
    lo = np.minimum(m, n)
    hi = np.maximum(m, n)
    k = hi - lo
    lag = eval_genlaguerre(lo, k, x)
    pref = np.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - x / 2)
    base = np.where(m >= n, alpha, -np.conj(alpha))
    with np.errstate(invalid="ignore"):
        powers = np.where(k == 0, 1.0 + 0j, base.astype(complex) ** k)
    return pref * powers * lag


def displaced_parity(beta: complex, dim: int) -> np.ndarray:
    """<m| D(beta) P D(beta)^dag |n> for m, n < dim."""
    return displacement_elements(2 * beta, dim) * ((-1.0) ** np.arange(dim))[None, :]


def default_beta_grid(radii: Sequence[float] | None = None, angles: int = 9) -> np.ndarray:
    """Concentric rings; alternate rings rotated by half an angular step."""
    radii = np.round(0.14 + 0.28 * np.arange(9), 2) if radii is None else np.asarray(radii)
    pts = []
    for i, r in enumerate(radii):
        offset = 0.5 if i % 2 else 0.0
        for j in range(angles):
            pts.append(r * np.exp(2j * np.pi * (j + offset) / angles))
    return np.array(pts, dtype=complex)


@dataclass
class WignerDataset:
    """Joint Wigner samples: ``values[s, b]`` is W_setting(beta_b).

    ``shots`` (when present) holds outcome codes of shape
    ``(n_settings, n_beta, shots_per_point)``; for setting I the ancilla sign is
    always +1.
    """

    beta_grid: np.ndarray
    settings: tuple[str, ...]
    values: np.ndarray
    shots: np.ndarray | None = None
    shots_per_point: int = 0
    register_dim: int = 8

    def __post_init__(self):
        bad = set(self.settings) - set(SETTINGS)
        if bad:
            raise InvalidConfig(f"unknown Pauli settings {sorted(bad)}")
        self.beta_grid = np.asarray(self.beta_grid, dtype=complex)
        self.values = np.asarray(self.values, dtype=float)

    def shot_pairs(self) -> np.ndarray:
        if self.shots is None:
            raise InvalidConfig("dataset holds expectations only")
        return CODE_SIGNS[self.shots]

    def rows(self):
        for si, s in enumerate(self.settings):
            for bi, b in enumerate(self.beta_grid):
                yield s, float(b.real), float(b.imag), float(self.values[si, bi])

    def to_json(self) -> dict:
        out = {
            "settings": list(self.settings),
            "beta": [[float(b.real), float(b.imag)] for b in self.beta_grid],
            "values": [[float(v) for v in row] for row in self.values],
            "shots_per_point": int(self.shots_per_point),
            "register_dim": int(self.register_dim),
            "shot_codes": "2*(ancilla==-1) + (parity==-1)",
        }
        if self.shots is not None:
            out["shots"] = [["".join(map(str, pt)) for pt in row] for row in self.shots.tolist()]
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "WignerDataset":
        beta = np.array([complex(r, i) for r, i in obj["beta"]])
        shots = None
        if "shots" in obj:
            shots = np.array([[[int(c) for c in pt] for pt in row] for row in obj["shots"]], dtype=np.uint8)
        return cls(beta, tuple(obj["settings"]), np.array(obj["values"]), shots,
                   int(obj.get("shots_per_point", 0)), int(obj.get("register_dim", 8)))


def _local_ops(beta_grid: np.ndarray, settings: Sequence[str], dim: int) -> list[np.ndarray]:
    return [np.kron(PAULI[s], displaced_parity(b, dim)) for s in settings for b in beta_grid]


def _check_rho(rho: DensityMatrix) -> int:
    if rho.space.labels != ("ancilla", "register") or rho.space.dim_of("ancilla") != 2:
        raise InvalidConfig("tomography expects an ancilla (x) register state")
    return rho.space.dim_of("register")


def _expectation_terms(rho: DensityMatrix, beta_grid: np.ndarray, setting: str) -> np.ndarray:
    """Per beta: (<sigma>, <Q>, <sigma (x) Q>) with Q the displaced parity."""
    d = _check_rho(rho)
    mat = rho.elements
    anc = partial_trace(rho, ["ancilla"]).elements
    reg = partial_trace(rho, ["register"]).elements
    s = PAULI[setting]
    a = np.real(np.trace(anc @ s))
    out = np.empty((len(beta_grid), 3))
    for i, b in enumerate(beta_grid):
        q = displaced_parity(b, d)
        out[i] = (a, np.real(np.sum(reg * q.T)), np.real(np.sum(mat * np.kron(s, q).T)))
    return out


def joint_wigner_forward(rho: DensityMatrix, beta_grid: np.ndarray | None = None,
                         settings: Sequence[str] = SETTINGS) -> WignerDataset:
    """W_i(beta) = (2/pi) tr[rho (sigma_i (x) D(beta) P D(beta)^dag)]."""
    grid = default_beta_grid() if beta_grid is None else np.asarray(beta_grid, dtype=complex)
    vals = np.array([W_SCALE * _expectation_terms(rho, grid, s)[:, 2] for s in settings])
    return WignerDataset(grid, tuple(settings), vals, register_dim=_check_rho(rho))


def _outcome_probs(terms: np.ndarray, setting: str) -> np.ndarray:
    a, q, c = terms.T
    if setting == "I":
        p = np.stack([(1 + q) / 2, (1 - q) / 2, 0 * q, 0 * q], axis=1)
    else:
        p = np.stack([(1 + a + q + c), (1 + a - q - c), (1 - a + q - c), (1 - a - q + c)], axis=1) / 4
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=1, keepdims=True)


def _values_from_counts(counts: np.ndarray, settings: Sequence[str]) -> np.ndarray:
    """counts[s, b, code] -> W values."""
    n = counts.sum(axis=-1)
    vals = np.empty(counts.shape[:2])
    for si, s in enumerate(settings):
        sign = CODE_SIGNS[:, 1] if s == "I" else PRODUCT_SIGN
        vals[si] = W_SCALE * (counts[si] @ sign) / n[si]
    return vals


def sample_shots(rho: DensityMatrix, beta_grid: np.ndarray | None = None,
                 settings: Sequence[str] = SETTINGS, shots: int = 3000, seed: int = 0) -> WignerDataset:
    """Draw ideal projective single-shot joint outcomes at every (setting, beta)."""
    if shots < 1:
        raise InvalidConfig("shots must be >= 1")
    grid = default_beta_grid() if beta_grid is None else np.asarray(beta_grid, dtype=complex)
    rng = np.random.default_rng(seed)
    codes = np.empty((len(settings), len(grid), shots), dtype=np.uint8)
    for si, s in enumerate(settings):
        probs = _outcome_probs(_expectation_terms(rho, grid, s), s)
        for bi in range(len(grid)):
            codes[si, bi] = rng.choice(4, size=shots, p=probs[bi])
    counts = np.stack([(codes == c).sum(axis=-1) for c in range(4)], axis=-1)
    return WignerDataset(grid, tuple(settings), _values_from_counts(counts, settings), codes,
                         shots, _check_rho(rho))


# -- reconstruction ---------------------------------------------------------

@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal real basis of n x n Hermitian matrices, shape (n*n, n, n)."""
    out = []
    for j in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[j, j] = 1
        out.append(e)
    for j in range(n):
        for k in range(j + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[j, k] = e[k, j] = 1 / math.sqrt(2)
            out.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[j, k] = -1j / math.sqrt(2)
            e[k, j] = 1j / math.sqrt(2)
            out.append(e)
    return np.array(out)


def measurement_matrix(beta_grid: np.ndarray, settings: Sequence[str], dim: int = 8) -> np.ndarray:
    """Real matrix sending Hermitian-basis coordinates of rho to W values."""
    basis = hermitian_basis(2 * dim).reshape(4 * dim * dim, -1)
    ops = np.array([op.T.reshape(-1) for op in _local_ops(beta_grid, settings, dim)])
    return W_SCALE * np.real(ops @ basis.T)


@lru_cache(maxsize=32)
def _solver(grid_key: bytes, settings: tuple[str, ...], dim: int):
    grid = np.frombuffer(grid_key, dtype=complex)
    a = measurement_matrix(grid, settings, dim)
    rank = int(np.linalg.matrix_rank(a, tol=1e-10 * np.abs(a).max()))
    return a, np.linalg.pinv(a, rcond=1e-12), rank


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.clip(v - theta, 0.0, None)


def project_density(mat: np.ndarray) -> np.ndarray:
    """Closest (Frobenius) PSD unit-trace matrix to a Hermitian matrix."""
    lam, v = np.linalg.eigh(hermitize(mat))
    return hermitize((v * project_simplex(lam)) @ v.conj().T)


@dataclass
class ReconstructionResult:
    rho: DensityMatrix
    residual: float
    unconstrained_residual: float
    projection_distance: float
    rank: int
    fidelity_vs_reference: float | None = None


def reconstruct(dataset: WignerDataset, reference: DensityMatrix | None = None,
                dim: int = 8) -> ReconstructionResult:
    """Least squares for a Hermitian matrix, then projection onto the states."""
    a, pinv, rank = _solver(dataset.beta_grid.tobytes(), tuple(dataset.settings), dim)
    needed = (2 * dim) ** 2
    if rank < needed:
        raise NotInformationallyComplete(rank, needed)
    data = dataset.values.reshape(-1)
    x = pinv @ data
    basis = hermitian_basis(2 * dim)
    raw = np.tensordot(x, basis, axes=1)
    proj = project_density(raw)
    x_proj = np.real(np.tensordot(basis.conj(), proj, axes=([1, 2], [0, 1])))
    space = HilbertSpec((("ancilla", 2), ("register", dim)))
    rho = DensityMatrix(space, proj)
    res = ReconstructionResult(
        rho=rho,
        residual=float(np.sum((a @ x_proj - data) ** 2)),
        unconstrained_residual=float(np.sum((a @ x - data) ** 2)),
        projection_distance=float(np.linalg.norm(raw - proj)),
        rank=rank,
    )
    if reference is not None:
        res.fidelity_vs_reference = fidelity(rho, reference)
    return res


# -- bootstrap --------------------------------------------------------------

@dataclass
class BootstrapResult:
    std: dict[str, float]
    samples: dict[str, list[float]] = field(default_factory=dict)
    n_resamples: int = 0
    seed: int = 0


def resource_estimates(rho: DensityMatrix, c_before: float, discord: DiscordConfig | Mapping | None,
                       quantities: Sequence[str]) -> dict[str, float]:
    out = {}
    if "delta_C" in quantities:
        out["delta_C"] = c_before - coherence(partial_trace(rho, ["ancilla"]))
    if "discord" in quantities:
        out["discord"] = global_discord(rho, discord).value
    return out


def bootstrap_errors(dataset: WignerDataset, n_resamples: int = 50, seed: int = 0,
                     c_before: float = 1.0, discord: DiscordConfig | Mapping | None = None,
                     quantities: Sequence[str] = ("delta_C", "discord")) -> BootstrapResult:
    """Sample standard deviations of the resource estimates under shot resampling.

    Resampling shots with replacement at one (setting, beta) point only changes
    the outcome counts, so each resample draws the counts from a multinomial
    with the empirical frequencies.
    """
    if n_resamples < 2:
        raise InvalidConfig("n_resamples must be >= 2")
    if dataset.shots is None:
        raise InvalidConfig("bootstrap needs shot records")
    rng = np.random.default_rng(seed)
    counts = np.stack([(dataset.shots == c).sum(axis=-1) for c in range(4)], axis=-1)
    n = dataset.shots.shape[-1]
    freq = counts / n
    samples: dict[str, list[float]] = {q: [] for q in quantities}
    for _ in range(n_resamples):
        draw = rng.multinomial(n, freq)
        resampled = WignerDataset(dataset.beta_grid, dataset.settings,
                                  _values_from_counts(draw, dataset.settings),
                                  register_dim=dataset.register_dim)
        rho = reconstruct(resampled, dim=dataset.register_dim).rho
        for q, v in resource_estimates(rho, c_before, discord, quantities).items():
            samples[q].append(v)
    std = {q: float(np.std(v, ddof=1)) for q, v in samples.items()}
    return BootstrapResult(std, samples, n_resamples, seed)
