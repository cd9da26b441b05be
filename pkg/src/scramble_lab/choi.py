"""Choi-state observables of the evolution operator.

The operator K (rows = output basis, columns = input basis) is read as the
pure state |K> = N_D^{-1/2} sum_{nu,mu} K[mu, nu] |nu>_in |mu>_out. Legs are
integers: input leg of site j is ``j``, output leg of site j is ``L + j``.
Entropies are in bits.
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING

import numpy as np

from .trajectory import EvolutionOperator

if TYPE_CHECKING:
    from .haar import HaarReference

__all__ = [
    "EIGEN_FLOOR",
    "EntropyBundle",
    "PartitionSpec",
    "TmiSample",
    "entropy_bundle",
    "entropy_cd",
    "equal_quadripartition",
    "in_leg",
    "mutual_information",
    "out_leg",
    "purity_cd",
    "spatial_partition",
    "subsystem_entropy",
    "tmi",
]

EIGEN_FLOOR = 1e-14


def in_leg(site: int, L: int) -> int:
    return site


def out_leg(site: int, L: int) -> int:
    return L + site


@dataclass(frozen=True)
class PartitionSpec:
    L: int
    label_of_in: tuple[str, ...]
    label_of_out: tuple[str, ...]

    def __post_init__(self):
        if len(self.label_of_in) != self.L or len(self.label_of_out) != self.L:
            raise ValueError("need one label per input and per output site")
        if not set(self.label_of_in) <= {"A", "B"}:
            raise ValueError("input legs must be labelled A or B")
        if not set(self.label_of_out) <= {"C", "D"}:
            raise ValueError("output legs must be labelled C or D")

    def legs(self, labels: str) -> tuple[int, ...]:
        """Legs carrying any of the given labels, e.g. ``legs("AC")``."""
        out = [j for j, lab in enumerate(self.label_of_in) if lab in labels]
        out += [self.L + j for j, lab in enumerate(self.label_of_out) if lab in labels]
        return tuple(out)

    def sites(self, label: str) -> tuple[int, ...]:
        labels = self.label_of_in if label in "AB" else self.label_of_out
        return tuple(j for j, lab in enumerate(labels) if lab == label)


def equal_quadripartition(L: int) -> PartitionSpec:
    """A, C on sites [0, L/2); B, D on sites [L/2, L)."""
    if L < 2 or L % 2:
        raise ValueError(f"equal quadripartition needs even L >= 2, got {L}")
    h = L // 2
    return PartitionSpec(L, ("A",) * h + ("B",) * h, ("C",) * h + ("D",) * h)


def spatial_partition(L: int, r: int) -> PartitionSpec:
    """A = input sites {0, 1}; D = output sites {2 + r, 3 + r}; 0 <= r <= L - 4."""
    if L < 4:
        raise ValueError("spatial partition needs L >= 4")
    if not 0 <= r <= L - 4:
        raise ValueError(f"r must lie in [0, {L - 4}], got {r}")
    lin = tuple("A" if j < 2 else "B" for j in range(L))
    lout = tuple("D" if j in (2 + r, 3 + r) else "C" for j in range(L))
    return PartitionSpec(L, lin, lout)


def _leg_axis(leg: int, L: int) -> int:
    # tensor axes are (out L-1..0, in L-1..0): C-order puts site L-1 first
    if not 0 <= leg < 2 * L:
        raise ValueError(f"leg {leg} out of range for L={L}")
    return 2 * L - 1 - leg


def _entropy_from_probs(probs: np.ndarray) -> float:
    probs = probs[probs > EIGEN_FLOOR]
    return float(-np.sum(probs * np.log2(probs))) + 0.0


def _bipartition_matrix(K: EvolutionOperator, legs: tuple[int, ...]) -> np.ndarray:
    """Choi amplitudes reshaped to (subset X) x (rest), unnormalized by sqrt(N)."""
    L = K.L
    all_out = all(leg >= L for leg in legs)
    if all_out and K.right is not None:
        # right factor has orthonormal rows: swap the input legs for one aux leg
        A = K.left
        tensor = A.reshape((2,) * L + (A.shape[1],))
        axes = [L - 1 - (leg - L) for leg in legs]
        rest = [ax for ax in range(L + 1) if ax not in axes]
    else:
        tensor = K.matrix.reshape((2,) * (2 * L))
        axes = [_leg_axis(leg, L) for leg in legs]
        rest = [ax for ax in range(2 * L) if ax not in axes]
    rows = 2 ** len(axes)
    return tensor.transpose(axes + rest).reshape(rows, -1)


def subsystem_entropy(
    K: EvolutionOperator,
    legs: Iterable[int],
    method: str = "auto",
    check_norm: bool = True,
) -> float:
    """Von Neumann entropy (bits) of the Choi state on a subset of legs.

    ``method="gram"`` (also what ``"auto"`` picks) diagonalizes the Gram
    matrix of the shorter side of the X | X-bar reshaping; ``"svd"`` takes
    the singular values of the reshaped amplitudes directly. Results are
    memoized on ``K`` per leg set and method.
    """
    L = K.L
    legs = tuple(sorted(set(int(x) for x in legs)))
    if any(not 0 <= x < 2 * L for x in legs):
        raise ValueError(f"legs must lie in [0, {2 * L})")
    if check_norm and not K.is_normalized(1e-8):
        raise ValueError("operator is not normalized: ||K||_F^2 != N_D")
    if len(legs) in (0, 2 * L):
        return 0.0
    if method == "auto":
        method = "gram"
    key = (legs, method)
    cache = K.entropy_cache
    if key in cache:
        return cache[key]

    M = _bipartition_matrix(K, legs)
    n = K.frobenius_sq()
    rows, cols = M.shape
    if method == "gram":
        if rows <= cols:
            gram = M @ M.conj().T
        else:
            gram = M.conj().T @ M
        probs = np.linalg.eigvalsh(gram) / n
    elif method == "svd":
        probs = np.linalg.svd(M, compute_uv=False) ** 2 / n
    else:
        raise ValueError(f"unknown method {method!r}")
    cache[key] = S = _entropy_from_probs(probs)
    return S


def purity_cd(K: EvolutionOperator) -> float:
    """tr rho_CD^2 = sum(sigma^4) / N_D^2 over singular values sigma of K."""
    sv2 = K.singular_values_sq()
    return float(np.sum(sv2**2) / K.dim**2)


def entropy_cd(K: EvolutionOperator) -> float:
    """Entropy of the whole output side, from the singular values of K."""
    sv2 = K.singular_values_sq()
    return _entropy_from_probs(sv2 / K.frobenius_sq())


def mutual_information(s_x: float, s_y: float, s_xy: float) -> float:
    """I(X:Y) = S_X + S_Y - S_XY, floored at -1e-9 (round-off only)."""
    return max(s_x + s_y - s_xy, -1e-9)


@dataclass(frozen=True)
class EntropyBundle:
    S_A: float
    S_B: float
    S_C: float
    S_D: float
    S_AC: float
    S_AD: float
    S_CD: float

    @property
    def S_ACD(self) -> float:
        # the Choi state is pure
        return self.S_B

    @property
    def i3(self) -> float:
        return (
            self.S_A + self.S_C + self.S_D
            - self.S_AC - self.S_AD - self.S_CD
            + self.S_ACD
        )

    def mutual_informations(self) -> dict[str, float]:
        return {
            "I_AC": mutual_information(self.S_A, self.S_C, self.S_AC),
            "I_AD": mutual_information(self.S_A, self.S_D, self.S_AD),
            "I_ACD": mutual_information(self.S_A, self.S_CD, self.S_ACD),
        }

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def entropy_bundle(K: EvolutionOperator, partition: PartitionSpec) -> EntropyBundle:
    if partition.L != K.L:
        raise ValueError("partition and operator sizes differ")
    if not K.is_normalized(1e-8):
        raise ValueError("operator is not normalized: ||K||_F^2 != N_D")
    S = {lab: subsystem_entropy(K, partition.legs(lab), check_norm=False) for lab in ("A", "B", "C", "D", "AC", "AD")}
    return EntropyBundle(
        S_A=S["A"], S_B=S["B"], S_C=S["C"], S_D=S["D"],
        S_AC=S["AC"], S_AD=S["AD"], S_CD=entropy_cd(K),
    )


@dataclass(frozen=True)
class TmiSample:
    step: int
    i3: float
    i3_normalized: float | None = None
    bundle: EntropyBundle | None = None


def tmi(
    K: EvolutionOperator,
    partition: PartitionSpec,
    reference: HaarReference | None = None,
) -> TmiSample:
    """I3(A:C:D) = I(A:C) + I(A:D) - I(A:CD), optionally Haar-normalized."""
    bundle = entropy_bundle(K, partition)
    i3 = bundle.i3
    normalized = None
    if reference is not None:
        from .haar import normalize_tmi

        normalized = normalize_tmi(i3, reference, L=K.L)
    return TmiSample(K.step, i3, normalized, bundle)
