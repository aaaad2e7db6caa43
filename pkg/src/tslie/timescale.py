"""Finite time scales and the delta calculus on them.

A finite time scale is a strictly increasing point set.  Every point but the
last is right-scattered, so the delta derivative there is exactly the forward
difference quotient; the last point is its own forward jump and has zero
graininess.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import expr as ex
from .errors import DomainExhaustedError, InputError
from .report import ResidualReport


@dataclass(frozen=True, eq=False)
class TimeScale:
    points: np.ndarray
    kind: str = "explicit"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InputError("a time scale needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise InputError("time scale points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise InputError("time scale points must be strictly increasing")
        pts.setflags(write=False)
        mu = np.zeros_like(pts)
        mu[:-1] = pts[1:] - pts[:-1]
        mu.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mu", mu)

    def __len__(self):
        return self.points.size

    @property
    def n(self) -> int:
        return self.points.size

    def index_of(self, t: float, rtol: float = 1e-9) -> Optional[int]:
        """Index of the point equal to ``t`` (within ``rtol``), else None."""
        pts = self.points
        tol = rtol * max(1.0, abs(t), float(pts[-1] - pts[0]))
        j = int(np.searchsorted(pts, t))
        for k in (j - 1, j):
            if 0 <= k < pts.size and abs(pts[k] - t) <= tol:
                return k
        return None

    def is_unit_lattice(self) -> bool:
        """True for consecutive integers (the discrete case)."""
        pts = self.points
        return bool(np.all(pts == np.round(pts)) and np.all(np.diff(pts) == 1.0))


@dataclass(frozen=True)
class PointClass:
    right_scattered: bool
    right_dense: bool
    left_scattered: bool
    left_dense: bool


def build_uniform(a: float, b: float, n_points: int) -> TimeScale:
    if not b > a:
        raise InputError(f"uniform scale needs b > a, got a={a}, b={b}")
    if int(n_points) != n_points or n_points < 2:
        raise InputError(f"uniform scale needs n_points >= 2, got {n_points}")
    return TimeScale(np.linspace(a, b, int(n_points)), kind="uniform")


def build_geometric(t0: float, ratio: float, count: int) -> TimeScale:
    """Points ``t0 * ratio**k``; graininess is ``(ratio - 1) * t``."""
    if not t0 > 0:
        raise InputError(f"geometric scale needs t0 > 0, got {t0}")
    if not ratio > 1:
        raise InputError(f"geometric scale needs ratio > 1, got {ratio}")
    if int(count) != count or count < 2:
        raise InputError(f"geometric scale needs count >= 2, got {count}")
    pts = t0 * float(ratio) ** np.arange(int(count), dtype=float)
    return TimeScale(pts, kind="geometric")


def build_explicit(points) -> TimeScale:
    return TimeScale(np.asarray(points, dtype=float), kind="explicit")


def _check_index(ts, i):
    if not (0 <= i < ts.n):
        raise InputError(f"index {i} out of range for a scale of {ts.n} points")


def sigma(ts: TimeScale, i: int) -> float:
    _check_index(ts, i)
    return float(ts.points[min(i + 1, ts.n - 1)])


def rho(ts: TimeScale, i: int) -> float:
    _check_index(ts, i)
    return float(ts.points[max(i - 1, 0)])


def mu(ts: TimeScale, i: int) -> float:
    _check_index(ts, i)
    return float(ts.mu[i])


def classify(ts: TimeScale, i: int) -> PointClass:
    _check_index(ts, i)
    t = ts.points[i]
    rs = sigma(ts, i) > t
    ls = rho(ts, i) < t
    return PointClass(right_scattered=rs, right_dense=not rs,
                      left_scattered=ls, left_dense=not ls)


# --------------------------------------------------------------------------
# sampled functions


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Values of a function on ``base.points[offset : n - cut]``."""

    base: TimeScale
    values: np.ndarray
    offset: int = 0
    cut: int = 0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if self.offset < 0 or self.cut < 0:
            raise InputError("offset and cut must be non-negative")
        expected = self.base.n - self.offset - self.cut
        if vals.shape != (max(expected, 0),):
            raise InputError(f"expected {expected} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def indices(self) -> range:
        return range(self.offset, self.base.n - self.cut)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        if i not in self.indices:
            raise IndexError(f"index {i} outside defined range {self.indices}")
        return float(self.values[i - self.offset])


def sample(ts: TimeScale, f: Union[Callable, ex.Expression, str]) -> SampledFunction:
    """Sample ``f`` (callable of t, or an expression in t) on every point."""
    if isinstance(f, str):
        f = ex.parse(f, ex.SHIFT_VARS)
    if isinstance(f, ex.Expression):
        vals = ex.evaluate(f, {"t": ts.points})
        vals = np.broadcast_to(np.asarray(vals, dtype=float), ts.points.shape)
    else:
        vals = np.asarray([f(t) for t in ts.points], dtype=float)
    return SampledFunction(ts, vals)


def delta_derivative(f: SampledFunction) -> SampledFunction:
    if len(f) < 2:
        raise DomainExhaustedError("delta derivative needs at least two defined points")
    mu = f.base.mu[f.offset:f.offset + len(f) - 1]
    vals = np.diff(f.values) / mu
    return SampledFunction(f.base, vals, f.offset, f.cut + 1)


def sigma_shift(f: SampledFunction) -> SampledFunction:
    """``f(sigma(t))``; on a full-range function the last point maps to itself."""
    if f.cut == 0:
        vals = np.append(f.values[1:], f.values[-1])
        return SampledFunction(f.base, vals, f.offset, 0)
    if len(f) < 2:
        raise DomainExhaustedError("sigma shift needs at least two defined points")
    return SampledFunction(f.base, f.values[1:], f.offset, f.cut + 1)


def delta_integral(f: SampledFunction, i_a: int, i_b: int) -> float:
    """Sum of ``f_i * mu_i`` for ``i_a <= i < i_b``."""
    if i_a > i_b:
        raise InputError(f"integration bounds out of order: {i_a} > {i_b}")
    lo, hi = f.indices.start, f.indices.stop
    if i_a < lo or i_b > min(hi, f.base.n - 1) and i_b > i_a:
        raise InputError(f"integration range [{i_a}, {i_b}) outside the domain {f.indices}")
    if i_a == i_b:
        if not lo <= i_a <= hi:
            raise InputError(f"index {i_a} outside the domain {f.indices}")
        return 0.0
    vals = f.values[i_a - lo:i_b - lo]
    return float(np.dot(vals, f.base.mu[i_a:i_b]))


def _aligned(f, g):
    if f.base is not g.base and not np.array_equal(f.base.points, g.base.points):
        raise InputError("functions live on different time scales")
    lo = max(f.offset, g.offset)
    hi = min(f.base.n - f.cut, g.base.n - g.cut)
    if hi - lo < 2:
        raise DomainExhaustedError("need at least two common defined points")
    return (f.values[lo - f.offset:hi - f.offset],
            g.values[lo - g.offset:hi - g.offset], lo, hi)


def verify_calculus_identities(f: SampledFunction, g: SampledFunction) -> dict:
    """Residuals of ``f^sigma = f + mu f^Delta`` and the delta product rule.

    Both hold exactly on scattered points, so the residuals measure
    floating-point noise only.  Returns reports keyed ``"sigma"`` and
    ``"product"``.
    """
    fv, gv, lo, hi = _aligned(f, g)
    mu = f.base.mu[lo:hi - 1]
    fd = np.diff(fv) / mu
    gd = np.diff(gv) / mu
    sig = ResidualReport.from_terms(fv[1:], -fv[:-1], -mu * fd, start=lo, label="sigma")
    fg = fv * gv
    prod = ResidualReport.from_terms(
        fg[1:] / mu, -fg[:-1] / mu, -fd * gv[:-1], -fv[1:] * gd,
        start=lo, label="product")
    return {"sigma": sig, "product": prod}


# --------------------------------------------------------------------------
# variations


@dataclass(frozen=True, eq=False)
class VariationFamily:
    """One-parameter family of curves ``q(t, alpha)`` around ``alpha``.

    ``tau_shift`` gives the time-variation direction: the time variation is
    ``dalpha * tau_shift(t)``.  Leave it None to skip the total-variation
    checks.
    """

    q_expr: ex.Expression
    dalpha: float
    tau_shift: Optional[ex.Expression] = None
    alpha: float = 1.0

    def __post_init__(self):
        if isinstance(self.q_expr, str):
            object.__setattr__(self, "q_expr", ex.parse(self.q_expr, ex.FAMILY_VARS))
        if isinstance(self.tau_shift, str):
            object.__setattr__(self, "tau_shift", ex.parse(self.tau_shift, ex.SHIFT_VARS))
        ex.check_variables(self.q_expr, ex.FAMILY_VARS)
        if self.tau_shift is not None:
            ex.check_variables(self.tau_shift, ex.SHIFT_VARS)
        if not self.dalpha > 0:
            raise InputError("dalpha must be positive")


def _fwd(x, mu):
    """Forward quotient padded with NaN to the input length."""
    out = np.full_like(x, np.nan)
    out[:-1] = (x[1:] - x[:-1]) / mu[:-1]
    return out


def _finite_report(terms, label):
    total = np.sum(terms, axis=0)
    bad = ~np.isfinite(total)
    stop = int(np.argmax(bad)) if bad.any() else total.size
    trimmed = [t[:stop] for t in terms]
    return ResidualReport.from_terms(*trimmed, label=label)


def _eval_on(e, t, **extra):
    vals = ex.evaluate(e, {"t": t, **extra})
    return np.broadcast_to(np.asarray(vals, dtype=float), t.shape).copy()


def verify_variation_identities(fam: VariationFamily, ts: TimeScale) -> dict:
    """Residuals of the variation/delta-derivative exchange relations.

    The isochronous variation is taken two ways: linearized in ``dalpha``
    (symbolic alpha-derivative times ``dalpha``) and as the finite difference
    between neighbouring orbits.  Exchange residuals compare the two and so
    vanish identically for families affine in alpha and to second order in
    ``dalpha`` otherwise.

    With ``tau_shift`` set, the total variation of ``q`` and of its delta
    derivatives is formed by following each point to ``t + dt`` on the varied
    orbit; that target must be a point of the scale.  Points whose target
    falls past the end are dropped.  Derivative coefficients in these
    relations are taken on the varied orbit.

    Keys: ``exchange_delta``, ``exchange_sigma`` and, with a shift,
    ``total``, ``total_delta``, ``total_delta2``.
    """
    t = ts.points
    mu = ts.mu
    a0, da = fam.alpha, fam.dalpha
    q0 = _eval_on(fam.q_expr, t, alpha=a0)
    q1 = _eval_on(fam.q_expr, t, alpha=a0 + da)
    dq_lin = _eval_on(ex.differentiate(fam.q_expr, "alpha"), t, alpha=a0) * da

    qd0, qd1 = _fwd(q0, mu), _fwd(q1, mu)
    out = {
        "exchange_delta": _finite_report(
            [qd1, -qd0, -_fwd(dq_lin, mu)], "exchange_delta"),
        "exchange_sigma": _finite_report(
            [np.append(q1[1:], q1[-1]), -np.append(q0[1:], q0[-1]),
             -np.append(dq_lin[1:], dq_lin[-1])], "exchange_sigma"),
    }
    if fam.tau_shift is None:
        return out

    dt = _eval_on(fam.tau_shift, t) * da
    target = np.full(t.size, -1, dtype=int)
    for i, (ti, d) in enumerate(zip(t, dt)):
        j = ts.index_of(ti + d)
        if j is None:
            if t[0] <= ti + d <= t[-1]:
                raise InputError(
                    f"time shift is not lattice preserving: t={ti} + {d} is not a scale point")
            continue
        target[i] = j
    ok = target >= 0
    jj = np.where(ok, target, 0)

    def moved(x1, x0):
        # total variation of a ladder: varied orbit at the shifted point minus base
        out = np.where(ok, x1[jj] - x0, np.nan)
        return out

    qdd0, qdd1 = _fwd(qd0, mu), _fwd(qd1, mu)
    qddd1 = _fwd(qdd1, mu)
    dq_fin = q1 - q0
    dt_d = _fwd(dt, mu)

    total_q = moved(q1, q0)
    out["total"] = _finite_report([total_q, -dq_fin, -qd1 * dt], "total")
    total_qd = moved(qd1, qd0)
    out["total_delta"] = _finite_report(
        [total_qd, -_fwd(total_q, mu), qd1 * dt_d, mu * dt_d * qdd1], "total_delta")
    total_qdd = moved(qdd1, qdd0)
    out["total_delta2"] = _finite_report(
        [total_qdd, -_fwd(total_qd, mu), qdd1 * dt_d, mu * dt_d * qddd1], "total_delta2")
    return out
