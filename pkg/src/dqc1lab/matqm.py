"""Linear algebra and quantum-information primitives on labeled tensor-product spaces.

All matrices are dense complex ``numpy`` arrays. Basis ordering within a factor
follows the computational convention: for a qubit, index 0 is ``|g>`` and
``sigma_z |g> = +|g>``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
PSD_FLOOR = -1e-10
UNITARY_ATOL = 1e-10
EIG_FLOOR = 1e-12


class InvalidSpace(ValueError):
    pass


class NotHermitian(ValueError):
    pass


class NotSkew(ValueError):
    pass


class InvalidState(ValueError):
    pass


@dataclass(frozen=True)
class HilbertSpec:
    """Ordered tensor factors ``((label, dim), ...)``."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lab), int(d)) for lab, d in self.factors)
        labels = [lab for lab, _ in factors]
        if len(set(labels)) != len(labels):
            raise InvalidSpace(f"duplicate factor labels: {labels}")
        if any(d < 1 for _, d in factors):
            raise InvalidSpace(f"factor dimensions must be positive: {factors}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "HilbertSpec":
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=int))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidSpace(f"unknown factor label {label!r}; have {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.factors[self.index(label)][1]

    def subspace(self, labels: Iterable[str]) -> "HilbertSpec":
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        return HilbertSpec(tuple(f for f in self.factors if f[0] in wanted))


def canonical_space(register_dim: int = 8) -> HilbertSpec:
    return HilbertSpec((("ancilla", 2), ("register", register_dim)))


def _as_matrix(elements, dim: int) -> np.ndarray:
    arr = np.array(elements, dtype=complex)
    if arr.shape != (dim, dim):
        raise InvalidSpace(f"matrix shape {arr.shape} does not match space dimension {dim}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Operator:
    space: HilbertSpec
    elements: np.ndarray
    kind: str = "general"

    def __post_init__(self):
        if self.kind not in ("unitary", "hermitian", "general"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        mat = _as_matrix(self.elements, self.space.dim)
        object.__setattr__(self, "elements", mat)
        if self.kind == "unitary":
            defect = np.abs(mat.conj().T @ mat - np.eye(len(mat))).max()
            if defect > UNITARY_ATOL:
                raise ValueError(f"operator is not unitary (defect {defect:.3e})")
        elif self.kind == "hermitian":
            if np.abs(mat - mat.conj().T).max() > HERMITIAN_ATOL:
                raise NotHermitian("operator marked hermitian is not Hermitian")

    @property
    def dim(self) -> int:
        return self.space.dim

    def __matmul__(self, other: "Operator") -> "Operator":
        if other.space != self.space:
            raise InvalidSpace("operator spaces differ")
        return Operator(self.space, self.elements @ other.elements)

    @property
    def dag(self) -> "Operator":
        return Operator(self.space, self.elements.conj().T, self.kind)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite state.

    Validation runs on construction; ``check=False`` skips it for matrices the
    caller has already established to be valid.
    """

    space: HilbertSpec
    elements: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        mat = _as_matrix(self.elements, self.space.dim)
        object.__setattr__(self, "elements", mat)
        if self.check:
            validate_state(mat)

    @property
    def dim(self) -> int:
        return self.space.dim

    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.elements, self.elements)))

    def expect(self, op: Operator | np.ndarray) -> complex:
        mat = op.elements if isinstance(op, Operator) else np.asarray(op)
        return complex(np.einsum("ij,ji->", self.elements, mat))


def validate_state(mat: np.ndarray) -> None:
    herm = np.abs(mat - mat.conj().T).max()
    if herm > HERMITIAN_ATOL:
        raise InvalidState(f"not Hermitian (max |rho - rho^dag| = {herm:.3e})")
    tr = np.trace(mat).real
    if abs(tr - 1.0) > TRACE_ATOL:
        raise InvalidState(f"trace {tr!r} differs from 1")
    lam_min = np.linalg.eigvalsh(mat).min()
    if lam_min < PSD_FLOOR:
        raise InvalidState(f"negative eigenvalue {lam_min:.3e}")


def hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def state(space: HilbertSpec, elements) -> DensityMatrix:
    """Build a state after symmetrizing away rounding noise in ``elements``."""
    return DensityMatrix(space, hermitize(np.asarray(elements, dtype=complex)))


def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def pure_state(space: HilbertSpec, vec) -> DensityMatrix:
    return state(space, projector(vec))


def maximally_mixed(space: HilbertSpec) -> DensityMatrix:
    return DensityMatrix(space, np.eye(space.dim) / space.dim)


# Single-qubit matrices, basis (|g>, |e>).
I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
PAULI = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim)).astype(complex)


def kron(a: Operator, b: Operator) -> Operator:
    if set(a.space.labels) & set(b.space.labels):
        raise InvalidSpace(f"label collision between {a.space.labels} and {b.space.labels}")
    space = HilbertSpec(a.space.factors + b.space.factors)
    kind = a.kind if a.kind == b.kind else "general"
    return Operator(space, np.kron(a.elements, b.elements), kind)


def kron_states(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    if set(a.space.labels) & set(b.space.labels):
        raise InvalidSpace(f"label collision between {a.space.labels} and {b.space.labels}")
    space = HilbertSpec(a.space.factors + b.space.factors)
    return DensityMatrix(space, np.kron(a.elements, b.elements), check=False)


def embed(space: HilbertSpec, label: str, local: np.ndarray) -> np.ndarray:
    """Lift an operator on one factor to the full space (identity elsewhere)."""
    idx = space.index(label)
    out = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(space.dims):
        out = np.kron(out, local if i == idx else np.eye(d))
    return out


def partial_trace_array(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace on a raw array; ``keep`` are factor indices, kept in input order."""
    n = len(dims)
    keep = sorted(set(keep))
    traced = [i for i in range(n) if i not in keep]
    t = mat.reshape(tuple(dims) * 2)
    # einsum over paired row/column indices of the traced factors
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for i in traced:
        cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    res = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep], dtype=int))
    return res.reshape(dk, dk)


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    if not keep:
        raise InvalidSpace("keep must name at least one factor")
    keep_idx = [rho.space.index(lab) for lab in keep]
    sub = HilbertSpec(tuple(rho.space.factors[i] for i in sorted(set(keep_idx))))
    red = partial_trace_array(rho.elements, rho.space.dims, keep_idx)
    return DensityMatrix(sub, hermitize(red), check=False)


def eig_hermitian(a: Operator | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvector matrix of a Hermitian matrix."""
    mat = a.elements if isinstance(a, Operator) else np.asarray(a, dtype=complex)
    if np.abs(mat - mat.conj().T).max() > HERMITIAN_ATOL * max(1.0, np.abs(mat).max()):
        raise NotHermitian("eig_hermitian requires a Hermitian matrix")
    return np.linalg.eigh(hermitize(mat))


def entropy_of_probs(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > EIG_FLOOR]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho: DensityMatrix | np.ndarray) -> float:
    mat = rho.elements if isinstance(rho, DensityMatrix) else rho
    return entropy_of_probs(np.linalg.eigvalsh(hermitize(mat)))


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """S(rho||sigma) in bits; ``math.inf`` when supp(rho) is not inside supp(sigma)."""
    if rho.dim != sigma.dim:
        raise InvalidSpace("relative entropy of states on different spaces")
    lam_r, v_r = np.linalg.eigh(hermitize(rho.elements))
    lam_s, v_s = np.linalg.eigh(hermitize(sigma.elements))
    # overlap of each rho eigenvector with each sigma eigenvector
    overlap = np.abs(v_r.conj().T @ v_s) ** 2
    live = lam_r > EIG_FLOOR
    null_s = lam_s <= EIG_FLOOR
    if np.any(overlap[np.ix_(live, null_s)].sum(axis=1) > 1e-9):
        return float("inf")
    log_s = np.zeros_like(lam_s)
    log_s[~null_s] = np.log2(lam_s[~null_s])
    cross = float(np.sum(lam_r[live, None] * overlap[live][:, ~null_s] * log_s[None, ~null_s]))
    val = -entropy_of_probs(lam_r) - cross
    return max(val, 0.0) if val > -1e-12 else val


def sqrtm_psd(mat: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """PSD square root; eigenvalues at or below ``floor`` are treated as zero."""
    lam, v = np.linalg.eigh(hermitize(mat))
    lam = np.where(lam > floor, lam, 0.0)
    return (v * np.sqrt(lam)) @ v.conj().T


def fidelity(rho: DensityMatrix | np.ndarray, sigma: DensityMatrix | np.ndarray) -> float:
    """Uhlmann fidelity ``tr sqrt(sqrt(sigma) rho sqrt(sigma))`` (not squared)."""
    a = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho)
    b = sigma.elements if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    if a.shape != b.shape:
        raise InvalidSpace(f"fidelity of states with shapes {a.shape} and {b.shape}")
    # trace norm of sqrt(rho) sqrt(sigma): avoids square roots of rounding noise
    # on rank-deficient inputs, and is symmetric by construction
    sv = np.linalg.svd(sqrtm_psd(a, 1e-14) @ sqrtm_psd(b, 1e-14), compute_uv=False)
    val = float(np.sum(sv))
    return min(val, 1.0) if val < 1.0 + 1e-9 else val


def matrix_exp_skew(g: Operator | np.ndarray) -> np.ndarray:
    """exp(G) for anti-Hermitian G, via the eigendecomposition of iG."""
    mat = g.elements if isinstance(g, Operator) else np.asarray(g, dtype=complex)
    scale = max(1.0, np.abs(mat).max())
    if np.abs(mat + mat.conj().T).max() > 1e-10 * scale:
        raise NotSkew("matrix_exp_skew requires an anti-Hermitian generator")
    lam, v = np.linalg.eigh(hermitize(1j * mat))
    return (v * np.exp(-1j * lam)) @ v.conj().T


def random_state(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-ensemble density matrix."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return hermitize(rho / np.trace(rho).real)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map in Kraus form on a fixed space."""

    space: HilbertSpec
    kraus: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(_as_matrix(k, self.space.dim) for k in self.kraus)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        object.__setattr__(self, "kraus", ops)

    def completeness_defect(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus)
        return float(np.abs(s - np.eye(self.space.dim)).max())

    def is_cptp(self, atol: float = 1e-9) -> bool:
        return self.completeness_defect() <= atol

    def is_incoherent(self, atol: float = 1e-12) -> bool:
        """Every Kraus operator sends basis states to multiples of basis states."""
        for k in self.kraus:
            nonzero = np.abs(k) > atol
            if np.any(nonzero.sum(axis=0) > 1):
                return False
        return True

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.space != self.space:
            raise InvalidSpace("channel and state spaces differ")
        out = sum(k @ rho.elements @ k.conj().T for k in self.kraus)
        return DensityMatrix(self.space, hermitize(out), check=False)


def conjugate(u: np.ndarray, rho: DensityMatrix) -> DensityMatrix:
    return DensityMatrix(rho.space, hermitize(u @ rho.elements @ u.conj().T), check=False)
