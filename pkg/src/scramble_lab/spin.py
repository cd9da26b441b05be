"""Spin-1/2 chain machinery: basis convention, TFIM Hamiltonian, propagator.

Basis convention used everywhere in the package: the computational basis
index ``n`` in ``[0, 2**L)`` stores site ``j`` in bit ``j`` (bit 0 is the
least significant). Bit value 0 is spin up (sigma^z = +1), bit value 1 is
spin down (sigma^z = -1).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Boundary",
    "ModelParams",
    "Propagator",
    "build_hamiltonian",
    "build_propagator",
    "z_eigenvalues",
    "z_projector",
    "z_projector_mask",
]


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class ModelParams:
    L: int
    J_zz: float
    h_x: float
    h_z: float
    boundary: Boundary = Boundary.PERIODIC
    delta_t: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        for name in ("J_zz", "h_x", "h_z", "delta_t"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")

    @property
    def dim(self) -> int:
        return 2**self.L

    def bonds(self) -> list[tuple[int, int]]:
        out = [(j, j + 1) for j in range(self.L - 1)]
        if self.boundary is Boundary.PERIODIC:
            out.append((self.L - 1, 0))
        return out

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "J_zz": self.J_zz,
            "h_x": self.h_x,
            "h_z": self.h_z,
            "boundary": self.boundary.value,
            "delta_t": self.delta_t,
        }


def z_eigenvalues(site: int, L: int) -> np.ndarray:
    """sigma^z_site eigenvalue (+1/-1) of every basis state, as float array."""
    if not 0 <= site < L:
        raise ValueError(f"site {site} out of range for L={L}")
    bits = (np.arange(2**L) >> site) & 1
    return 1.0 - 2.0 * bits


def build_hamiltonian(params: ModelParams) -> np.ndarray:
    """Dense real-symmetric TFIM Hamiltonian in the computational basis.

    H = sum_bonds J_zz Z_i Z_j + sum_j (h_x X_j + h_z Z_j). For the periodic
    chain the wrap bond (L-1, 0) is added once on top of the open bonds.
    """
    L = params.L
    n = 2**L
    idx = np.arange(n)
    z = [z_eigenvalues(j, L) for j in range(L)]

    diag = np.zeros(n)
    for i, j in params.bonds():
        diag += params.J_zz * z[i] * z[j]
    for j in range(L):
        diag += params.h_z * z[j]

    H = np.diag(diag)
    if params.h_x != 0.0:
        for j in range(L):
            H[idx ^ (1 << j), idx] += params.h_x
    return H


@dataclass(frozen=True, eq=False)
class Propagator:
    """Exact U = exp(-i dt H), kept together with the eigendecomposition of H.

    ``apply(X, k)`` returns ``U**k @ X`` through the eigenbasis, which costs two
    real-by-complex products regardless of ``k``.
    """

    matrix: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    delta_t: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def phases(self, k: int = 1) -> np.ndarray:
        return np.exp(-1j * (k * self.delta_t) * self.energies)

    def apply(self, X: np.ndarray, k: int = 1) -> np.ndarray:
        if k == 0:
            return X.copy()
        V = self.vectors
        Y = _real_matmul(V.T, X)
        Y *= self.phases(k)[:, None]
        return _real_matmul(V, Y)


def _real_matmul(R: np.ndarray, X: np.ndarray) -> np.ndarray:
    # real @ complex as one real GEMM over the interleaved (re, im) layout
    X = np.ascontiguousarray(X, dtype=np.complex128)
    shape = X.shape
    Xr = X.reshape(shape[0], -1).view(np.float64)
    out = np.ascontiguousarray(R @ Xr).view(np.complex128)
    return out.reshape((R.shape[0],) + shape[1:])


def build_propagator(H: np.ndarray, delta_t: float) -> Propagator:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be a square matrix")
    if np.iscomplexobj(H):
        if np.abs(H.imag).max(initial=0.0) > 0:
            raise ValueError("H must be real symmetric")
        H = H.real
    if not np.allclose(H, H.T, atol=1e-12, rtol=0):
        raise ValueError("H must be symmetric")
    if not (math.isfinite(delta_t) and delta_t > 0):
        raise ValueError("delta_t must be positive and finite")
    try:
        energies, vectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigendecomposition of H failed") from exc
    phase = np.exp(-1j * delta_t * energies)
    U = _real_matmul(vectors, phase[:, None] * vectors.T)
    return Propagator(U, energies, vectors, float(delta_t))


def z_projector_mask(site: int, outcome: int, L: int) -> np.ndarray:
    """Boolean diagonal of the projector onto sigma^z_site = outcome."""
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    return z_eigenvalues(site, L) == outcome


def z_projector(site: int, outcome: int, L: int) -> np.ndarray:
    """Dense diagonal projector (1 + outcome * Z_site) / 2."""
    return np.diag(z_projector_mask(site, outcome, L).astype(float))
