"""Measurement patterns and the normalized non-unitary evolution operator.

The evolution operator is stored exactly as a product ``left @ right`` where
``right`` has orthonormal rows (or is the identity). Every step with k
distinct measured sites caps the rank at ``N_D / 2**k``; when that cap falls
below the current rank the factors are compressed. Nothing is truncated, so
``matrix`` always equals the plain dense product of projectors and
propagators, but unitary steps get cheaper as the operator purifies.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .spin import ModelParams, Propagator, build_hamiltonian, build_propagator, z_eigenvalues

__all__ = [
    "AnnihilationError",
    "EvolutionOperator",
    "MeasurementEvent",
    "MeasurementPattern",
    "Recorder",
    "TrajectoryRecord",
    "evolve",
    "sample_pattern",
    "step",
    "trajectory_seed",
]

log = logging.getLogger(__name__)

ANNIHILATION_TOL = 1e-10


class AnnihilationError(RuntimeError):
    """Both outcomes of a forced measurement annihilate the operator."""


@dataclass(frozen=True, order=True)
class MeasurementEvent:
    step: int
    site: int
    outcome: int


@dataclass
class MeasurementPattern:
    p: float
    seed: int
    L: int
    n_steps: int
    events: list[MeasurementEvent]
    redraw_log: list[tuple[int, int]] = field(default_factory=list)

    def by_step(self) -> dict[int, list[MeasurementEvent]]:
        out: dict[int, list[MeasurementEvent]] = {}
        for ev in self.events:
            out.setdefault(ev.step, []).append(ev)
        return out


def trajectory_seed(master_seed: int, *key: int) -> int:
    """64-bit sub-seed for one trajectory, derived from (master, key...).

    Uses SeedSequence spawn keys, so the seed of trajectory ``s`` does not
    depend on how many other trajectories exist or in which order they run.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_pattern(p: float, L: int, n_steps: int, rng) -> MeasurementPattern:
    """Draw a forced-measurement pattern.

    Each (step, site) is measured with probability ``p``; the outcome is +1 or
    -1 with probability 1/2 regardless of the state. ``rng`` is either a seed
    (int) or a ``numpy.random.Generator``; with a seed the pattern is a pure
    function of ``(seed, p, L, n_steps)``.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"measurement rate must lie in [0, 1], got {p}")
    if n_steps < 0 or L < 1:
        raise ValueError("need n_steps >= 0 and L >= 1")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    hits = rng.random((n_steps, L)) < p
    signs = np.where(rng.integers(0, 2, size=(n_steps, L)) == 0, 1, -1)
    events = [
        MeasurementEvent(int(t) + 1, int(j), int(signs[t, j]))
        for t, j in zip(*np.nonzero(hits))
    ]
    return MeasurementPattern(float(p), -1 if seed is None else seed, L, n_steps, events)


class EvolutionOperator:
    """Normalized operator K with ||K||_F^2 = N_D, stored as ``left @ right``."""

    def __init__(self, L: int, left: np.ndarray, right: np.ndarray | None = None, step: int = 0):
        self.L = int(L)
        self.left = left
        self.right = right
        self.step = step
        self._dense = None
        self._sv2 = None
        self.entropy_cache: dict = {}

    @classmethod
    def identity(cls, L: int) -> "EvolutionOperator":
        return cls(L, np.eye(2**L, dtype=np.complex128))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, step: int = 0) -> "EvolutionOperator":
        matrix = np.asarray(matrix, dtype=np.complex128)
        L = int(round(math.log2(matrix.shape[0])))
        if matrix.shape != (2**L, 2**L):
            raise ValueError("operator must be 2^L x 2^L")
        return cls(L, matrix.copy(), None, step)

    @property
    def dim(self) -> int:
        return 2**self.L

    @property
    def rank_bound(self) -> int:
        return self.left.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.left if self.right is None else self.left @ self.right
        return self._dense

    def frobenius_sq(self) -> float:
        # right has orthonormal rows, so the norm lives in left
        return float(np.vdot(self.left, self.left).real)

    def singular_values_sq(self) -> np.ndarray:
        """Squared singular values of K, descending, summing to ||K||_F^2."""
        if self._sv2 is None:
            A = self.left
            if A.shape[1] <= A.shape[0]:
                gram = A.conj().T @ A
            else:
                gram = A @ A.conj().T
            w = np.clip(np.linalg.eigvalsh(gram)[::-1], 0.0, None)
            # pad with the zeros removed by the rank factorization
            self._sv2 = np.concatenate([w, np.zeros(self.dim - w.size)])
        return self._sv2

    def is_normalized(self, rtol: float = 1e-9) -> bool:
        return abs(self.frobenius_sq() / self.dim - 1.0) <= rtol


def _as_propagator(U) -> Propagator | np.ndarray:
    if isinstance(U, Propagator):
        return U
    U = np.asarray(U, dtype=np.complex128)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError("propagator must be square")
    return U


def _apply_unitary(U, X: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return X
    if isinstance(U, Propagator):
        return U.apply(X, k)
    for _ in range(k):
        X = U @ X
    return X


def _advance(
    K: EvolutionOperator,
    U,
    n_unitary: int,
    events: Sequence[MeasurementEvent],
    redraws: list[tuple[int, int]] | None = None,
    tol: float = ANNIHILATION_TOL,
) -> EvolutionOperator:
    L, N = K.L, K.dim
    U = _as_propagator(U)
    if U.shape[0] != N:
        raise ValueError("propagator dimension does not match operator")
    new_step = K.step + n_unitary
    A = _apply_unitary(U, K.left, n_unitary)
    if A is K.left:
        A = A.copy()

    keep = np.ones(N, dtype=bool)
    floor = tol * math.sqrt(N)
    seen: dict[int, int] = {}
    for ev in sorted(events, key=lambda e: e.site):
        if ev.step != new_step:
            raise ValueError(f"event at step {ev.step} applied at step {new_step}")
        if ev.site in seen:
            if seen[ev.site] != ev.outcome:
                raise ValueError(f"conflicting outcomes for site {ev.site} at step {ev.step}")
            continue
        z = z_eigenvalues(ev.site, L)
        outcome = ev.outcome
        trial = keep & (z == outcome)
        if _masked_norm(A, trial) < floor:
            outcome = -outcome
            trial = keep & (z == outcome)
            if _masked_norm(A, trial) < floor:
                raise AnnihilationError(
                    f"both outcomes annihilate the operator at step {ev.step}, site {ev.site}"
                )
            log.debug("near-annihilation at step %d site %d: outcome flipped", ev.step, ev.site)
            if redraws is not None:
                redraws.append((ev.step, ev.site))
        seen[ev.site] = ev.outcome
        keep = trial

    right = K.right
    if not keep.all():
        A[~keep] = 0.0
        rows = np.flatnonzero(keep)
        if rows.size < A.shape[1]:
            A, right = _compress(A, right, rows)

    norm = math.sqrt(float(np.vdot(A, A).real))
    if norm < floor:
        raise AnnihilationError(f"operator annihilated at step {new_step}")
    A *= math.sqrt(N) / norm
    return EvolutionOperator(L, A, right, new_step)


def _masked_norm(A: np.ndarray, rows: np.ndarray) -> float:
    sub = A[rows]
    return math.sqrt(float(np.vdot(sub, sub).real))


def _compress(A: np.ndarray, right: np.ndarray | None, rows: np.ndarray):
    # A has support only on `rows`, so K = P S right with m = len(rows) < rank
    S = A[rows]
    G = S if right is None else S @ right
    Q, R = np.linalg.qr(G.conj().T)
    left = np.zeros((A.shape[0], rows.size), dtype=np.complex128)
    left[rows] = R.conj().T
    return left, np.ascontiguousarray(Q.conj().T)


def step(
    K: EvolutionOperator,
    U,
    events: Iterable[MeasurementEvent] = (),
    redraws: list[tuple[int, int]] | None = None,
) -> EvolutionOperator:
    """One time step: unitary, then that step's projectors, then renormalize.

    Near-annihilating outcomes (projected norm below 1e-10 sqrt(N_D)) are
    flipped and the flip is appended to ``redraws`` when given.
    """
    return _advance(K, U, 1, list(events), redraws)


Observable = Callable[[EvolutionOperator], "float | Mapping[str, float]"]


@dataclass
class Recorder:
    """Which observables to evaluate and at which steps.

    Steps recorded: 0, every multiple of ``stride``, the final step, and any
    extra steps listed in ``extra_steps``.
    """

    observables: dict[str, Observable]
    stride: int = 1
    extra_steps: tuple[int, ...] = ()
    include_final: bool = True

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def steps(self, n_steps: int) -> list[int]:
        s = set(range(0, n_steps + 1, self.stride))
        s.update(t for t in self.extra_steps if 0 <= t <= n_steps)
        if self.include_final:
            s.add(n_steps)
        return sorted(s)

    def __call__(self, K: EvolutionOperator) -> dict[str, float]:
        # an observable returning a mapping contributes its keys as series names
        out: dict[str, float] = {}
        for name, fn in self.observables.items():
            val = fn(K)
            if isinstance(val, Mapping):
                out.update((k, float(v)) for k, v in val.items())
            else:
                out[name] = float(val)
        return out


@dataclass
class TrajectoryRecord:
    params: ModelParams
    p: float
    seed: int
    n_steps: int
    events: list[MeasurementEvent]
    redraws: list[tuple[int, int]]
    series: dict[str, list[tuple[int, float]]]
    aborted: str | None = None

    def values(self, name: str) -> tuple[list[int], list[float]]:
        pts = self.series[name]
        return [t for t, _ in pts], [v for _, v in pts]

    def to_json(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "p": self.p,
            "seed": self.seed,
            "n_steps": self.n_steps,
            "events": [[e.step, e.site, e.outcome] for e in self.events],
            "redraws": [list(r) for r in self.redraws],
            "series": {k: [[t, v] for t, v in pts] for k, pts in self.series.items()},
            "aborted": self.aborted,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "TrajectoryRecord":
        return cls(
            params=ModelParams(**data["params"]),
            p=float(data["p"]),
            seed=int(data["seed"]),
            n_steps=int(data["n_steps"]),
            events=[MeasurementEvent(*e) for e in data["events"]],
            redraws=[tuple(r) for r in data["redraws"]],
            series={k: [(int(t), float(v)) for t, v in pts] for k, pts in data["series"].items()},
            aborted=data.get("aborted"),
        )


def evolve(
    params: ModelParams,
    p: float,
    seed: int,
    n_steps: int,
    recorder: Recorder,
    propagator: Propagator | None = None,
) -> TrajectoryRecord:
    """Run one trajectory from K = I for ``n_steps`` steps.

    Steps without measurements between recorded points are merged into a
    single power of the propagator. On annihilation the record is returned
    with the series collected so far and ``aborted`` set.
    """
    if propagator is None:
        propagator = build_propagator(build_hamiltonian(params), params.delta_t)
    pattern = sample_pattern(p, params.L, n_steps, seed)
    by_step = pattern.by_step()
    record_at = recorder.steps(n_steps)
    stops = sorted(set(record_at) | set(by_step))

    series: dict[str, list[tuple[int, float]]] = {}
    redraws: list[tuple[int, int]] = []

    def record(K):
        for name, v in recorder(K).items():
            series.setdefault(name, []).append((K.step, v))

    K = EvolutionOperator.identity(params.L)
    recorded = set(record_at)
    aborted = None
    if 0 in recorded:
        record(K)
    for t in stops:
        if t == 0:
            continue
        try:
            K = _advance(K, propagator, t - K.step, by_step.get(t, ()), redraws)
        except AnnihilationError as exc:
            aborted = str(exc)
            log.warning("trajectory seed=%d p=%g aborted: %s", seed, p, exc)
            break
        if t in recorded:
            record(K)
    return TrajectoryRecord(params, p, pattern.seed, n_steps, pattern.events, redraws, series, aborted)
