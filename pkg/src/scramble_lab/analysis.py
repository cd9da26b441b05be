"""Ensemble averages, log-log purity fits and the finite-size-scaling scan."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .trajectory import TrajectoryRecord

__all__ = [
    "EnsembleSeries",
    "FitResult",
    "FssResult",
    "collapse_points",
    "curve_crossings",
    "default_grid_nu",
    "default_grid_pc",
    "ensemble_average",
    "fss_scan",
    "loglog_fit",
    "saturation_drift",
]


@dataclass
class EnsembleSeries:
    p: float
    L: int
    steps: list[int]
    mean: list[float]
    std_error: list[float]
    n_samples: int
    observable: str = ""

    def at(self, step: int) -> tuple[float, float]:
        i = self.steps.index(step)
        return self.mean[i], self.std_error[i]


@dataclass(frozen=True)
class FitResult:
    alpha: float
    beta: float
    r_squared: float


@dataclass
class FssResult:
    grid_pc: np.ndarray
    grid_nu: np.ndarray
    r2_surface: np.ndarray
    best_pc: float
    best_nu: float
    best_r2: float
    poly_coeffs: np.ndarray
    x_center: float = 0.0
    x_scale: float = 1.0
    extras: dict = field(default_factory=dict)

    def scaling_function(self, x):
        """Fitted Psi(x); coefficients are in the centred/scaled abscissa."""
        u = (np.asarray(x, dtype=float) - self.x_center) / self.x_scale
        return np.polynomial.polynomial.polyval(u, self.poly_coeffs)


def ensemble_average(records: Sequence[TrajectoryRecord], observable: str) -> EnsembleSeries:
    """Pointwise mean and standard error of one observable over trajectories.

    Averages per-trajectory scalars only. With a single record the standard
    error is NaN.
    """
    if not records:
        raise ValueError("no records to average")
    first = records[0]
    steps, _ = first.values(observable)
    for rec in records[1:]:
        if (rec.params, rec.p, rec.n_steps) != (first.params, first.p, first.n_steps):
            raise ValueError("records were produced with different settings")
        if rec.values(observable)[0] != steps:
            raise ValueError("records have different recorded steps")
    # sort by seed so the float summation order ignores record order
    ordered = sorted(records, key=lambda r: r.seed)
    data = np.array([rec.values(observable)[1] for rec in ordered], dtype=float)
    n = data.shape[0]
    mean = data.mean(axis=0)
    if n > 1:
        err = data.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        err = np.full(mean.shape, np.nan)
    return EnsembleSeries(first.p, first.params.L, list(steps), mean.tolist(), err.tolist(), n, observable)


def loglog_fit(series: EnsembleSeries, t_min: int = 1, t_max: int | None = None) -> FitResult:
    """OLS fit of ln(mean) = alpha ln(t) + beta over t_min <= t <= t_max."""
    if t_min < 1:
        raise ValueError("t_min must be >= 1")
    t = np.asarray(series.steps, dtype=float)
    y = np.asarray(series.mean, dtype=float)
    sel = t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    t, y = t[sel], y[sel]
    if t.size < 3:
        raise ValueError("need at least 3 points for a log-log fit")
    if np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    x, z = np.log(t), np.log(y)
    # round-off on a constant series would otherwise give a meaningless R^2
    if np.ptp(z) <= 1e-12 * max(1.0, float(np.max(np.abs(z)))):
        raise ValueError("constant series: R^2 undefined")
    A = np.column_stack([x, np.ones_like(x)])
    (alpha, beta), *_ = np.linalg.lstsq(A, z, rcond=None)
    ss_res = float(np.sum((z - A @ np.array([alpha, beta])) ** 2))
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    if ss_tot <= 0:
        raise ValueError("constant series: R^2 undefined")
    return FitResult(float(alpha), float(beta), 1.0 - ss_res / ss_tot)


def default_grid_pc() -> np.ndarray:
    return np.round(np.arange(0.04, 0.14 + 5e-4, 0.001), 6)


def default_grid_nu() -> np.ndarray:
    return np.round(np.arange(0.5, 3.5 + 1e-2, 0.02), 6)


def _as_arrays(data):
    if isinstance(data, Mapping):
        keys = sorted(data)
        p = np.array([k[0] for k in keys], dtype=float)
        L = np.array([k[1] for k in keys], dtype=float)
        vals = [data[k] for k in keys]
        if vals and isinstance(vals[0], Sequence):
            y = np.array([v[0] for v in vals], dtype=float)
            err = np.array([v[1] for v in vals], dtype=float)
        else:
            y = np.array(vals, dtype=float)
            err = None
        return p, L, y, err
    p, L, y = (np.asarray(a, dtype=float) for a in data[:3])
    err = np.asarray(data[3], dtype=float) if len(data) > 3 and data[3] is not None else None
    return p, L, y, err


def _poly_r2(x, y, w, degree):
    """Weighted polynomial least squares via QR; returns (r2, coeffs, centre, scale)."""
    c = 0.5 * (x.max() + x.min())
    s = 0.5 * (x.max() - x.min())
    if not s > 0:
        return -np.inf, None, c, 1.0
    u = (x - c) / s
    V = np.vander(u, degree + 1, increasing=True)
    sw = np.sqrt(w)
    Q, R = np.linalg.qr(V * sw[:, None])
    diag = np.abs(np.diagonal(R))
    if diag.min() <= 1e-12 * diag.max():
        return -np.inf, None, c, s
    coeffs = np.linalg.solve(R, Q.T @ (y * sw))
    resid = y - V @ coeffs
    ybar = np.sum(w * y) / np.sum(w)
    ss_res = float(np.sum(w * resid**2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    return 1.0 - ss_res / ss_tot, coeffs, c, s


def fss_scan(
    data,
    grid_pc: Sequence[float] | None = None,
    grid_nu: Sequence[float] | None = None,
    degree: int = 5,
    weighted: bool = False,
) -> FssResult:
    """R^2 of a joint polynomial collapse y = Psi((p - p_c) L^nu) over a grid.

    ``data`` maps ``(p, L)`` to a value or to ``(value, std_error)``; it may
    also be a tuple of arrays ``(p, L, y[, err])``. Degenerate cells get
    R^2 = -inf. Ties are broken by smaller nu, then smaller p_c.
    """
    p, L, y, err = _as_arrays(data)
    if p.size == 0:
        raise ValueError("empty data")
    sizes = np.unique(L)
    if sizes.size < 2:
        raise ValueError("finite-size scaling needs at least two system sizes")
    for size in sizes:
        if np.unique(p[L == size]).size < 4:
            raise ValueError(f"L={size:g} has fewer than 4 p values")
    if np.ptp(y) == 0:
        raise ValueError("all values identical: R^2 undefined")
    if weighted:
        if err is None or np.any(~(err > 0)):
            raise ValueError("weighted fit needs positive standard errors")
        w = 1.0 / err**2
    else:
        w = np.ones_like(y)

    grid_pc = default_grid_pc() if grid_pc is None else np.asarray(grid_pc, dtype=float)
    grid_nu = default_grid_nu() if grid_nu is None else np.asarray(grid_nu, dtype=float)
    surface = np.full((grid_pc.size, grid_nu.size), -np.inf)
    logL = np.log(L)
    for j, nu in enumerate(grid_nu):
        scale = np.exp(nu * logL)
        for i, pc in enumerate(grid_pc):
            surface[i, j] = _poly_r2((p - pc) * scale, y, w, degree)[0]

    best = surface.max()
    if not np.isfinite(best):
        raise ValueError("every grid cell is degenerate")
    # column-major scan: smallest nu first, then smallest p_c
    ii, jj = np.nonzero(surface == best)
    order = np.lexsort((ii, jj))
    i, j = ii[order[0]], jj[order[0]]
    pc, nu = float(grid_pc[i]), float(grid_nu[j])
    r2, coeffs, c, s = _poly_r2((p - pc) * np.exp(nu * logL), y, w, degree)
    return FssResult(grid_pc, grid_nu, surface, pc, nu, float(r2), coeffs, float(c), float(s))


def collapse_points(data, p_c: float, nu: float) -> list[tuple[float, float, int]]:
    """(x, y, L) rows of the scaled data, sorted by L then x."""
    p, L, y, _ = _as_arrays(data)
    x = (p - p_c) * np.exp(nu * np.log(L))
    rows = sorted(zip(L.astype(int).tolist(), x.tolist(), y.tolist()))
    return [(xx, yy, LL) for LL, xx, yy in rows]


def curve_crossings(table, L1: int, L2: int, n_sigma: float = 1.0) -> list[dict]:
    """Sign changes of y(p, L2) - y(p, L1) that are resolved statistically.

    ``table`` maps ``(p, L)`` to ``(value, std_error, ...)``. Only p values
    where the difference exceeds ``n_sigma`` combined standard errors take
    part; each sign change between consecutive such points is one crossing,
    placed by linear interpolation of the difference.
    """
    ps = sorted({p for p, L in table if L == L1} & {p for p, L in table if L == L2})
    resolved = []
    for p in ps:
        y1, e1 = table[(p, L1)][:2]
        y2, e2 = table[(p, L2)][:2]
        d, err = y2 - y1, math.hypot(e1, e2)
        if abs(d) > n_sigma * err:
            resolved.append((p, d))
    out = []
    for (pa, da), (pb, db) in zip(resolved, resolved[1:]):
        if (da > 0) != (db > 0):
            out.append({"p": pa + (pb - pa) * da / (da - db), "p_below": pa, "p_above": pb})
    return out


def saturation_drift(
    records: Sequence[TrajectoryRecord], observable: str, window: float = 0.2
) -> dict[str, float]:
    """Drift of an observable across the last ``window`` fraction of the run.

    The drift is the OLS slope of the ensemble mean over the window times the
    window span. Its error adds in quadrature the trajectory-to-trajectory
    spread of the per-trajectory slopes and the residual scatter of the mean
    about the line, so a deterministic oscillation (e.g. all trajectories
    identical) is not mistaken for a trend. ``significance`` is
    ``|drift| / drift_error``.
    """
    if not records:
        raise ValueError("no records")
    rows = []
    t_ref = None
    for rec in sorted(records, key=lambda r: r.seed):
        t, y = (np.asarray(a, dtype=float) for a in rec.values(observable))
        sel = t >= t.max() * (1.0 - window)
        if t_ref is None:
            t_ref = t[sel]
        elif not np.array_equal(t[sel], t_ref):
            raise ValueError("records have different recorded steps")
        rows.append(y[sel])
    if t_ref.size < 2:
        raise ValueError("need at least two recorded points in the window")
    Y = np.array(rows)
    tc = t_ref - t_ref.mean()
    span = float(np.ptp(t_ref))
    slopes = (Y @ tc) / np.sum(tc**2)
    n = slopes.size
    drift = float(slopes.mean()) * span
    var = float(slopes.var(ddof=1)) / n if n > 1 else 0.0
    if t_ref.size > 2:
        mean = Y.mean(axis=0)
        resid = mean - mean.mean() - slopes.mean() * tc
        var += float(np.sum(resid**2)) / (t_ref.size - 2) / float(np.sum(tc**2))
    err = math.sqrt(var) * span
    if err > 0:
        sig = abs(drift) / err
    else:
        sig = math.inf if abs(drift) > 1e-12 else 0.0
    return {"drift": drift, "drift_error": err, "significance": sig, "n": int(n)}
