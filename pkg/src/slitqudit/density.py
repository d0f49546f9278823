"""Density operators of incoherent arm mixtures and their figures of merit.

The composite basis is ordered row-major: signal label outer, idler label
inner, both ascending.  That matches ``TwoQuditState.vector``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NotTwoQubitsError
from .states import TwoQuditState

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_CLAMP = 1e-10
# eigen-components below this weight are dropped before the concurrence SVD
_RANK_TOL = 1e-14

_SIGMA_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, trace-one, positive semidefinite operator on D^2 dimensions.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero on construction;
    anything more negative is treated as a construction bug and raised.
    """

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        n = rho.shape[0]
        if rho.ndim != 2 or rho.shape != (n, n) or math.isqrt(n) ** 2 != n or n < 4:
            raise ValueError(f"density matrix must be D^2 x D^2 with D >= 2, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        rho = 0.5 * (rho + rho.conj().T)
        trace = np.trace(rho).real
        if abs(trace - 1) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {trace!r}, expected 1")
        evals, evecs = np.linalg.eigh(rho)
        if evals[0] < -PSD_CLAMP:
            raise ValueError(f"density matrix is not positive: min eigenvalue {evals[0]:.3e}")
        if evals[0] < 0:
            evals = np.clip(evals, 0, None)
            rho = (evecs * evals) @ evecs.conj().T
            rho /= np.trace(rho).real
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def pure(cls, psi: TwoQuditState) -> "DensityOperator":
        v = psi.vector
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, qudit_dim: int) -> "DensityOperator":
        n = qudit_dim**2
        return cls(np.eye(n, dtype=complex) / n)

    @property
    def dim(self) -> int:
        """Composite dimension D^2."""
        return self.matrix.shape[0]

    @property
    def qudit_dim(self) -> int:
        return math.isqrt(self.dim)

    def tensor(self) -> np.ndarray:
        """View as ``rho[l, m, l', m']``."""
        d = self.qudit_dim
        return self.matrix.reshape(d, d, d, d)

    def reduced(self, keep: str) -> np.ndarray:
        """Reduced density matrix of ``"signal"`` or ``"idler"``."""
        t = self.tensor()
        if keep == "signal":
            return np.einsum("imjm->ij", t)
        if keep == "idler":
            return np.einsum("milm->il", t)
        raise ValueError(f"keep must be 'signal' or 'idler', got {keep!r}")

    def diagonal_table(self) -> np.ndarray:
        """Basis-state probabilities ``P[l, m] = <lm|rho|lm>``."""
        d = self.qudit_dim
        return np.real(np.diag(self.matrix)).reshape(d, d)


@dataclass(frozen=True)
class MixtureSpec:
    """Weighted pure states; weights are renormalised to sum to one.

    ``correction`` is the factor the raw weights were multiplied by.
    """

    weights: tuple[float, ...]
    states: tuple[TwoQuditState, ...]
    correction: float = field(default=1.0, init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.states) or len(w) == 0:
            raise ValueError("need one weight per component state and at least one component")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"mixture weights must be finite and >= 0, got {list(w)}")
        total = float(w.sum())
        if total <= 0:
            raise ValueError("mixture weights sum to zero")
        object.__setattr__(self, "weights", tuple(float(x) for x in w / total))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "correction", 1.0 / total)

    @classmethod
    def of(cls, *components: tuple[float, TwoQuditState]) -> "MixtureSpec":
        return cls(tuple(w for w, _ in components), tuple(s for _, s in components))


def mix(spec: MixtureSpec) -> DensityOperator:
    dims = {s.dim for s in spec.states}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixture components have different dimensions {sorted(dims)}")
    n = spec.states[0].dim ** 2
    rho = np.zeros((n, n), dtype=complex)
    for w, psi in zip(spec.weights, spec.states):
        v = psi.vector
        rho += w * np.outer(v, v.conj())
    return DensityOperator(rho)


def purity(rho: DensityOperator) -> float:
    m = rho.matrix
    # Tr(rho^2) for Hermitian rho is the squared Frobenius norm
    return float(np.sum(np.abs(m) ** 2))


def fidelity_with_pure(rho: DensityOperator, psi: TwoQuditState) -> float:
    """``<psi|rho|psi>``."""
    if rho.dim != psi.dim**2:
        raise DimensionMismatchError(
            f"density operator has dimension {rho.dim}, state has {psi.dim ** 2}"
        )
    v = psi.vector
    return float(np.real(np.vdot(v, rho.matrix @ v)))


def state_fidelity(a: TwoQuditState, b: TwoQuditState) -> float:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"states have dimensions {a.dim} and {b.dim}")
    return abs(a.overlap(b)) ** 2


def concurrence(rho: DensityOperator) -> float:
    """Wootters concurrence of a two-qubit density operator.

    The λ's (square roots of the eigenvalues of ``rho (σy⊗σy) rho* (σy⊗σy)``)
    are computed as singular values of ``Ψᵀ (σy⊗σy) Ψ`` where ``Ψ`` holds the
    subnormalised eigenvectors of ``rho``.  This keeps pure states exact
    instead of taking square roots of rounding noise.
    """
    if rho.dim != 4:
        raise NotTwoQubitsError(f"concurrence needs composite dimension 4, got {rho.dim}")
    evals, evecs = np.linalg.eigh(rho.matrix)
    keep = evals > _RANK_TOL
    psi = evecs[:, keep] * np.sqrt(evals[keep])
    lam = np.linalg.svd(psi.T @ _SIGMA_YY @ psi, compute_uv=False)
    lam = np.concatenate([np.sort(lam)[::-1], np.zeros(4 - lam.size)])
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def pure_concurrence(psi: TwoQuditState) -> float:
    """``2 |c++ c-- - c+- c-+|`` for a two-qubit pure state."""
    if psi.dim != 2:
        raise NotTwoQubitsError(f"concurrence needs qubits, got D={psi.dim}")
    c = psi.coeffs
    return float(2 * abs(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]))


@dataclass(frozen=True)
class SchmidtResult:
    coefficients: np.ndarray
    entropy_bits: float

    @property
    def schmidt_number(self) -> float:
        """Effective number of Schmidt modes, ``1 / sum(sigma^4)``."""
        return float(1 / np.sum(self.coefficients**4))


def schmidt(psi: TwoQuditState) -> SchmidtResult:
    sv = np.linalg.svd(psi.coeffs, compute_uv=False)
    p = sv**2
    p = p[p > 0]
    entropy = float(-np.sum(p * np.log2(p)))
    return SchmidtResult(coefficients=sv, entropy_bits=max(entropy, 0.0))


def hwp_weights(theta: float) -> tuple[float, float]:
    """Arm weights ``(A, B)`` behind a half-wave plate at ``theta`` and a PBS.

    A = cos^2(2 theta); B is taken as ``1 - A`` so the pair sums to one exactly.
    """
    a = math.cos(2 * theta) ** 2
    return a, 1.0 - a
