"""Haar-random reference for the tripartite mutual information."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .choi import equal_quadripartition, tmi
from .trajectory import EvolutionOperator

__all__ = ["HaarReference", "haar_i3_reference", "normalize_tmi", "sample_haar_unitary"]


@dataclass(frozen=True)
class HaarReference:
    L: int
    mean_abs_i3: float
    std_error: float
    n_samples: int
    seed: int

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "HaarReference":
        return cls(
            L=int(data["L"]),
            mean_abs_i3=float(data["mean_abs_i3"]),
            std_error=float(data["std_error"]),
            n_samples=int(data["n_samples"]),
            seed=int(data["seed"]),
        )


def sample_haar_unitary(dim: int, rng) -> np.ndarray:
    """Haar unitary from the QR decomposition of a complex Ginibre matrix.

    Column k of Q is multiplied by R_kk / |R_kk| so that the decomposition is
    unique and the result is Haar distributed (Mezzadri's recipe).
    """
    rng = np.random.default_rng(rng)
    Z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def _cache_path(cache_dir: Path, L: int, n_samples: int, seed: int) -> Path:
    return Path(cache_dir) / f"haar_L{L}_n{n_samples}_seed{seed}.json"


def haar_i3_reference(
    L: int,
    n_samples: int = 20,
    seed: int = 0,
    cache_dir: str | Path | None = None,
) -> HaarReference:
    """Mean |I3| of Haar unitaries at the equal quadripartition.

    With ``cache_dir`` the result is read from / written to
    ``haar_L{L}_n{n}_seed{seed}.json``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if cache_dir is not None:
        path = _cache_path(cache_dir, L, n_samples, seed)
        if path.exists():
            return HaarReference.from_json(json.loads(path.read_text()))

    partition = equal_quadripartition(L)
    children = np.random.SeedSequence(seed).spawn(n_samples)
    vals = np.array(
        [
            abs(tmi(EvolutionOperator.from_matrix(sample_haar_unitary(2**L, ss)), partition).i3)
            for ss in children
        ]
    )
    stderr = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("nan")
    ref = HaarReference(L, float(vals.mean()), stderr, n_samples, int(seed))

    if cache_dir is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(ref.to_json(), indent=2) + "\n")
        tmp.replace(path)
    return ref


def normalize_tmi(i3: float, reference: HaarReference, L: int | None = None) -> float:
    if L is not None and L != reference.L:
        raise ValueError(f"Haar reference is for L={reference.L}, sample has L={L}")
    return i3 / reference.mean_abs_i3
