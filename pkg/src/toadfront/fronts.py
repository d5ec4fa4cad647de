"""Level-set extraction, logarithmic-delay fits, tail slopes and empirical
same-time Harnack constants of evolving fields."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import Field, total_density


class LevelNotAttained(ValueError):
    """The requested level is not reached at this snapshot."""


class IllConditioned(RuntimeError):
    """Fit window too short: normal equations numerically singular."""


class WindowOutsideGrid(ValueError):
    """Requested measurement window leaves the field's x-range."""


class NonPositiveSample(ValueError):
    """Harnack sampling hit a non-positive value behind the front."""


def _quantity(fld: Field, which: str) -> np.ndarray:
    if which == "rho":
        return total_density(fld)
    if which == "max_theta":
        return fld.values.max(axis=1)
    raise ValueError(f"unknown tracked quantity {which!r}")


def level_position(fld: Field, m: float, quantity: str = "max_theta") -> float:
    """Rightmost crossing of level m, located by linear interpolation."""
    q = _quantity(fld, quantity)
    above = q >= m
    if not above.any():
        raise LevelNotAttained(f"level {m} not attained at t={fld.t}")
    i = int(np.nonzero(above)[0][-1])
    x = fld.x_offset + fld.dx * i
    if i + 1 >= q.size:
        return float(x)
    q0, q1 = q[i], q[i + 1]
    if q0 == q1:
        return float(x)
    return float(x + fld.dx * (q0 - m) / (q0 - q1))


@dataclass
class FrontTrace:
    level: float
    quantity: str  # rho | max_theta
    times: np.ndarray
    positions: np.ndarray
    skipped_times: list = field(default_factory=list)


def extract_level_set(snapshots, m: float, quantity: str = "max_theta") -> FrontTrace:
    """Trace the rightmost m-level over an ordered snapshot sequence."""
    times, pos, skipped = [], [], []
    for fld in snapshots:
        try:
            p = level_position(fld, m, quantity)
        except LevelNotAttained:
            skipped.append(fld.t)
            continue
        times.append(fld.t)
        pos.append(p)
    return FrontTrace(m, quantity, np.asarray(times), np.asarray(pos), skipped)


class LevelTraceCollector:
    """Observer form of extract_level_set for long runs (no field storage)."""

    def __init__(self, m: float, quantity: str = "max_theta"):
        self.m = m
        self.quantity = quantity
        self.times: list = []
        self.positions: list = []
        self.skipped: list = []

    def __call__(self, fld: Field):
        try:
            p = level_position(fld, self.m, self.quantity)
        except LevelNotAttained:
            self.skipped.append(fld.t)
            return
        self.times.append(fld.t)
        self.positions.append(p)

    def trace(self) -> FrontTrace:
        return FrontTrace(self.m, self.quantity, np.asarray(self.times),
                          np.asarray(self.positions), self.skipped)


@dataclass
class DelayFit:
    c_hat: float
    r_hat: float
    x_hat: float
    mode: str                  # "free_c" or "fixed_c"
    c_fixed: float | None
    fit_window: tuple
    residual_sup: float
    orthogonality: float       # max |A^T residual| / scale, should be ~0


def fit_bramson(trace: FrontTrace, mode="free_c", c_star: float | None = None,
                fit_window: tuple | None = None) -> DelayFit:
    """Least squares of X(t) against c t - r log t + x0.

    ``free_c`` fits all three coefficients; ``fixed_c`` subtracts c_star * t
    first and fits (log t, 1), which decorrelates r from the nearly collinear
    linear regressor at desk-scale horizons.
    """
    t, X = trace.times, trace.positions
    if fit_window is None:
        t1 = t[-1]
        fit_window = (max(20.0, t1 / 4), t1)
    t0, t1 = fit_window
    sel = (t >= t0) & (t <= t1)
    if np.count_nonzero(sel) < 20:
        raise ValueError("need at least 20 samples inside the fit window")
    ts, Xs = t[sel], X[sel]

    if mode == "free_c":
        A = np.column_stack([ts, -np.log(ts), np.ones_like(ts)])
        y = Xs
    elif mode == "fixed_c":
        if c_star is None:
            raise ValueError("fixed_c mode needs c_star")
        A = np.column_stack([-np.log(ts), np.ones_like(ts)])
        y = Xs - c_star * ts
    else:
        raise ValueError(f"unknown fit mode {mode!r}")

    sv = np.linalg.svd(A, compute_uv=False)
    cond_normal = (sv[0] / sv[-1]) ** 2
    if cond_normal > 1e10:
        raise IllConditioned(f"normal equations condition {cond_normal:.2e}")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    orth = float(np.max(np.abs(A.T @ resid)) /
                 (np.max(np.abs(A)) * max(np.max(np.abs(y)), 1.0) * ts.size))
    if mode == "free_c":
        c_hat, r_hat, x_hat = (float(c) for c in coef)
        c_fixed = None
    else:
        r_hat, x_hat = (float(c) for c in coef)
        c_hat = c_star
        c_fixed = c_star
    return DelayFit(c_hat, r_hat, x_hat, mode, c_fixed, (float(t0), float(t1)),
                    float(np.max(np.abs(resid))), orth)


def tail_decay_rate(fld: Field, offset: tuple = (5.0, 15.0),
                    level_frac: float = 0.01) -> float:
    """Exponential slope of max_theta u on a window ahead of the low level.

    Least-squares slope of log(max_theta u) over [X_low + offset[0],
    X_low + offset[1]], returned with a positive sign for decay.
    """
    q = fld.values.max(axis=1)
    m = level_frac * float(q.max())
    x_low = level_position(fld, m, "max_theta")
    x = fld.x_offset + fld.dx * np.arange(q.size)
    lo, hi = x_low + offset[0], x_low + offset[1]
    if hi > x[-1] or lo < x[0]:
        raise WindowOutsideGrid(f"window [{lo:.2f},{hi:.2f}] outside [{x[0]:.2f},{x[-1]:.2f}]")
    sel = (x >= lo) & (x <= hi)
    vals = q[sel]
    if np.min(vals) <= 0:
        raise NonPositiveSample("tail window contains non-positive values")
    slope = np.polyfit(x[sel], np.log(vals), 1)[0]
    return float(-slope)


def harnack_ratio_field(snapshots, p: float, R: float,
                        level_frac: float = 1e-3,
                        min_pairs: int = 10_000) -> tuple[float, tuple]:
    """Empirical constant sup n(t,x,th) / n(t,x',th')^(1/p) over close pairs.

    Pairs satisfy |x-x'| + |theta-theta'| <= R and are sampled with a
    deterministic stride behind the front (x <= X at the ``level_frac`` level
    of max_theta n), where the density is uniformly positive.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    best = -np.inf
    witness = None
    for fld in snapshots:
        if fld.t < 1.0 - 1e-9:
            continue
        V = fld.values
        dom = fld.domain
        q = V.max(axis=1)
        try:
            x_cut = level_position(fld, level_frac * float(q.max()), "max_theta")
        except LevelNotAttained:
            continue
        n_keep = int((x_cut - fld.x_offset) / fld.dx) + 1
        W = V[:max(4, min(n_keep, V.shape[0])), :]
        if np.min(W) <= 0.0:
            raise NonPositiveSample(f"non-positive density behind the front at t={fld.t}")
        n_x, n_th = W.shape
        max_di = int(R / fld.dx)
        # stride chosen to cover >= min_pairs pairs per snapshot
        n_shift_th = n_th  # all theta offsets (trait grid is small)
        stride = max(1, int(np.sqrt(n_x * max_di * n_shift_th / max(min_pairs, 1))))
        total = 0
        logW = np.log(W)
        for di in range(0, max_di + 1, max(1, stride)):
            x_sep = di * fld.dx
            for dj in range(-(n_th - 1), n_th):
                if x_sep + abs(dj) * dom.dtheta > R:
                    continue
                a = logW[di:, max(dj, 0):n_th + min(dj, 0)]
                b = logW[:n_x - di, max(-dj, 0):n_th - max(dj, 0)]
                if a.size == 0:
                    continue
                r = a - b / p
                k = int(np.argmax(r))
                total += 2 * r.size
                if r.flat[k] > best:
                    best = float(r.flat[k])
                    witness = (fld.t, di, dj)
                r2 = b - a / p
                k2 = int(np.argmax(r2))
                if r2.flat[k2] > best:
                    best = float(r2.flat[k2])
                    witness = (fld.t, di, -dj)
        if total < min_pairs:
            raise ValueError(f"only {total} pairs sampled at t={fld.t}; lower the stride")
    if witness is None:
        raise ValueError("no usable snapshots at t >= 1")
    return float(np.exp(best)), witness
