"""Lagrangian dynamics on a finite time scale.

A Lagrangian ``L(t, qs, qd)`` takes the forward-shifted coordinate
``qs = q(sigma(t))`` and the delta derivative ``qd``.  Along a trajectory
the Lagrangian at point ``i`` is evaluated at ``(t_i, q_{i+1}, qd_i)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import (ConvergenceError, DomainExhaustedError, EvaluationError,
                     InputError, NumericError, SingularError)
from .report import ResidualReport
from .timescale import TimeScale

FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class Lagrangian:
    expr: ex.Expression

    def __post_init__(self):
        e = self.expr
        if isinstance(e, str):
            e = ex.parse(e, ex.LAGRANGIAN_VARS)
            object.__setattr__(self, "expr", e)
        ex.check_variables(e, ex.LAGRANGIAN_VARS)
        d = ex.differentiate
        object.__setattr__(self, "d1", d(e, "t"))
        object.__setattr__(self, "d2", d(e, "qs"))
        object.__setattr__(self, "d3", d(e, "qd"))
        object.__setattr__(self, "d33", d(self.d3, "qd"))
        object.__setattr__(self, "d32", d(self.d3, "qs"))

    @classmethod
    def parse(cls, text: str) -> "Lagrangian":
        return cls(ex.parse(text, ex.LAGRANGIAN_VARS))

    def __str__(self):
        return ex.serialize(self.expr)


def eval_series(e: ex.Expression, n: int, **bindings) -> np.ndarray:
    """Evaluate ``e`` on ``n`` points, always returning a length-``n`` array.

    Evaluation errors are re-raised naming the first failing point index.
    """
    try:
        vals = ex.evaluate(e, bindings)
    except EvaluationError as err:
        for i in range(n):
            point = {k: float(np.broadcast_to(v, (n,))[i]) for k, v in bindings.items()}
            try:
                ex.evaluate(e, point)
            except EvaluationError as inner:
                raise EvaluationError(f"at point {i}: {inner}", inner.node) from None
        raise err
    return np.broadcast_to(np.asarray(vals, dtype=float), (n,)).copy()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Coordinate samples on a time scale with their delta-derivative ladders.

    ``qd`` lives on the first n-1 points, ``qdd`` on n-2, ``qddd`` on n-3.
    """

    ts: TimeScale
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.shape != self.ts.points.shape:
            raise InputError(f"trajectory has {q.size} values for {self.ts.n} points")
        mu = self.ts.mu
        qd = np.diff(q) / mu[:-1]
        qdd = np.diff(qd) / mu[:-2] if qd.size >= 2 else np.zeros(0)
        qddd = np.diff(qdd) / mu[:-3] if qdd.size >= 2 else np.zeros(0)
        for name, arr in (("q", q), ("qd", qd), ("qdd", qdd), ("qddd", qddd)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.ts.n

    @property
    def t(self) -> np.ndarray:
        return self.ts.points

    @property
    def mu(self) -> np.ndarray:
        return self.ts.mu

    @property
    def qs(self) -> np.ndarray:
        """q(sigma(t_i)) on the first n-1 points."""
        return self.q[1:]

    @property
    def qdsigma(self) -> np.ndarray:
        return self.qd[1:]

    @property
    def qss(self) -> np.ndarray:
        return self.q[2:]

    def bindings(self, n: int) -> dict:
        """Lagrangian arguments ``(t_i, qs_i, qd_i)`` for the first ``n`` points."""
        if n > self.n - 1:
            raise DomainExhaustedError(f"only {self.n - 1} points carry a velocity")
        return {"t": self.t[:n], "qs": self.q[1:n + 1], "qd": self.qd[:n]}


def _require(tr, k, what):
    if tr.n < k:
        raise DomainExhaustedError(f"{what} needs at least {k} points, trajectory has {tr.n}")


def el_residual(L: Lagrangian, tr: Trajectory) -> ResidualReport:
    """``[d3L(i+1) - d3L(i)] / mu_i - d2L(i)`` on the first n-2 points."""
    _require(tr, 3, "Euler-Lagrange residual")
    n = tr.n - 2
    p3 = eval_series(L.d3, n + 1, **tr.bindings(n + 1))
    p2 = eval_series(L.d2, n, **tr.bindings(n))
    mu = tr.mu[:n]
    return ResidualReport.from_terms(p3[1:] / mu, -p3[:-1] / mu, -p2, label="euler_lagrange")


def dubois_residual(L: Lagrangian, tr: Trajectory, variant: str = "printed") -> ResidualReport:
    """Second-form (DuBois-Reymond) residual.

    ``printed``:    Delta[-L + d3L qd + d1L mu] + d1L
    ``sigma_form``: Delta[L - d3L qd] - d1L evaluated one point ahead
    """
    _require(tr, 3, "DuBois-Reymond residual")
    n = tr.n - 2
    b = tr.bindings(n + 1)
    Lv = eval_series(L.expr, n + 1, **b)
    p1 = eval_series(L.d1, n + 1, **b)
    p3 = eval_series(L.d3, n + 1, **b)
    mu = tr.mu[:n + 1]
    qd = tr.qd[:n + 1]
    m = mu[:n]
    if variant == "printed":
        E = -Lv + p3 * qd + p1 * mu
        return ResidualReport.from_terms(E[1:] / m, -E[:-1] / m, p1[:n], label="dubois_printed")
    if variant in ("sigma_form", "sigma"):
        E = Lv - p3 * qd
        return ResidualReport.from_terms(E[1:] / m, -E[:-1] / m, -p1[1:], label="dubois_sigma")
    raise InputError(f"unknown DuBois-Reymond variant {variant!r}")


def nonsingularity(L: Lagrangian, tr: Trajectory, threshold: float = 1e-10) -> ResidualReport:
    """``d33L + mu (1 + mu^Delta) d32L`` per point; small values are flagged."""
    _require(tr, 3, "nonsingularity check")
    n = tr.n - 2
    b = tr.bindings(n)
    mu = tr.mu
    mu_d = (mu[1:n + 1] - mu[:n]) / mu[:n]
    vals = eval_series(L.d33, n, **b) + mu[:n] * (1.0 + mu_d) * eval_series(L.d32, n, **b)
    flagged = tuple(int(i) for i in np.nonzero(np.abs(vals) < threshold)[0])
    return ResidualReport(vals, start=0, scale=1.0, label="nonsingularity", flagged=flagged)


@dataclass(frozen=True, eq=False)
class AccelerationField:
    """Source of ``qdd = h(t, qs, qd)``.

    Explicit fields evaluate ``h``; implicit fields solve the pointwise
    Euler-Lagrange equation of ``lagrangian`` for ``qdd``.  When both are
    given the explicit expression is used for stepping.
    """

    h: Optional[ex.Expression] = None
    lagrangian: Optional[Lagrangian] = None
    max_iter: int = 50
    tol: float = 1e-12
    bracket_scale: float = 1e3
    singular_threshold: float = 1e-10

    def __post_init__(self):
        if isinstance(self.h, str):
            object.__setattr__(self, "h", ex.parse(self.h, ex.ACCELERATION_VARS))
        if isinstance(self.lagrangian, (str, ex.Expression)):
            object.__setattr__(self, "lagrangian", Lagrangian(self.lagrangian))
        if self.h is None and self.lagrangian is None:
            raise InputError("an acceleration field needs h or a Lagrangian")
        if self.h is not None:
            ex.check_variables(self.h, ex.ACCELERATION_VARS)
            object.__setattr__(self, "h_t", ex.differentiate(self.h, "t"))
            object.__setattr__(self, "h_qs", ex.differentiate(self.h, "qs"))
            object.__setattr__(self, "h_qd", ex.differentiate(self.h, "qd"))

    @classmethod
    def explicit(cls, h) -> "AccelerationField":
        return cls(h=h)

    @classmethod
    def implicit(cls, lagrangian, **settings) -> "AccelerationField":
        return cls(lagrangian=lagrangian, **settings)

    @property
    def mode(self) -> str:
        return "explicit" if self.h is not None else "implicit"


def _solve_implicit(acc, t, mu, mu_next, qs, qd):
    L = acc.lagrangian
    ev = ex.evaluate
    here = {"t": t, "qs": qs, "qd": qd}
    p3 = ev(L.d3, here)
    p2 = ev(L.d2, here)
    nonsing = ev(L.d33, here) + mu_next * ev(L.d32, here)
    if abs(nonsing) < acc.singular_threshold:
        raise SingularError(
            f"singular Lagrangian at t={t}: d33L + mu(1+mu^Delta) d32L = {nonsing!r}")
    t_next = t + mu
    scale = max(1.0, abs(p2), abs(p3) / mu)

    def state(x):
        qd_n = qd + mu * x
        return {"t": t_next, "qs": qs + mu_next * qd_n, "qd": qd_n}

    def F(x):
        return (ev(L.d3, state(x)) - p3) / mu - p2

    def dF(x):
        s = state(x)
        return ev(L.d33, s) + mu_next * ev(L.d32, s)

    x = 0.0
    f = F(x)
    for _ in range(acc.max_iter):
        if abs(f) <= acc.tol * scale:
            return x
        try:
            d = dF(x)
            step = f / d
            x_new = x - step
            f_new = F(x_new)
        except (ZeroDivisionError, EvaluationError):
            break
        if not (math.isfinite(x_new) and math.isfinite(f_new)):
            break
        x, f = x_new, f_new
    if abs(f) <= acc.tol * scale:
        return x

    width = max(1.0, abs(qd)) * acc.bracket_scale
    lo, hi = -width, width
    f_lo, f_hi = F(lo), F(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if f_lo * f_hi > 0:
        raise ConvergenceError(
            f"root solve failed at t={t}: no sign change on bracket [{lo}, {hi}] "
            f"(residuals {f_lo!r}, {f_hi!r}); last Newton residual {f!r}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = F(mid)
        if abs(f_mid) <= acc.tol * scale:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            break
    raise ConvergenceError(
        f"root solve failed at t={t}: bracket [{lo}, {hi}], residual {f_mid!r}")


def acceleration(acc: AccelerationField, state) -> float:
    """``qdd`` at ``state = (t, mu, mu_next, qs, qd)``."""
    t, mu, mu_next, qs, qd = (float(v) for v in state)
    if acc.h is not None:
        return ex.evaluate(acc.h, {"t": t, "qs": qs, "qd": qd})
    if not mu > 0:
        raise InputError("implicit acceleration needs mu > 0")
    return _solve_implicit(acc, t, mu, mu_next, qs, qd)


def acceleration_partials(acc: AccelerationField, state) -> tuple:
    """``(h, dh/dt, dh/dqs, dh/dqd)`` at a state.

    Explicit fields use symbolic partials.  Implicit fields use central
    differences of the pointwise root solve; the t-partial holds both
    graininess values fixed.
    """
    t, mu, mu_next, qs, qd = (float(v) for v in state)
    if acc.h is not None:
        b = {"t": t, "qs": qs, "qd": qd}
        return (ex.evaluate(acc.h, b), ex.evaluate(acc.h_t, b),
                ex.evaluate(acc.h_qs, b), ex.evaluate(acc.h_qd, b))
    h = acceleration(acc, (t, mu, mu_next, qs, qd))
    grads = []
    for k, x in ((0, t), (3, qs), (4, qd)):
        step = FD_STEP * max(1.0, abs(x))
        up = [t, mu, mu_next, qs, qd]
        dn = list(up)
        up[k] = x + step
        dn[k] = x - step
        grads.append((acceleration(acc, up) - acceleration(acc, dn)) / (2 * step))
    return (h, *grads)


def solve_ivp(acc: AccelerationField, ts: TimeScale, q0: float, v0: float) -> Trajectory:
    """Step ``q_{i+1} = q_i + mu_i qd_i``, ``qd_{i+1} = qd_i + mu_i h_i``."""
    n = ts.n
    mu = ts.mu
    t = ts.points
    q = np.empty(n)
    qd = float(v0)
    q[0] = float(q0)
    for i in range(n - 1):
        q[i + 1] = q[i] + mu[i] * qd
        if i + 1 < n - 1:
            try:
                h = acceleration(acc, (t[i], mu[i], mu[i + 1], q[i + 1], qd))
            except (NumericError, InputError) as err:
                raise type(err)(f"step {i}: {err}") from err
            qd = qd + mu[i] * h
            if not (math.isfinite(qd) and math.isfinite(q[i + 1])):
                raise ConvergenceError(f"step {i}: trajectory diverged")
    return Trajectory(ts, q)


def solve_bvp(acc: AccelerationField, ts: TimeScale, A: float, B: float,
              tol: float = 1e-10, max_iter: int = 100) -> Trajectory:
    """Shoot on the initial velocity with secant updates until q(b) = B."""
    if ts.n < 3:
        raise DomainExhaustedError("boundary value problem needs at least 3 points")

    def miss(v):
        try:
            tr = solve_ivp(acc, ts, A, v)
        except NumericError as err:
            raise ConvergenceError(f"shooting failed at v0={v!r}: {err}") from err
        return float(tr.q[-1] - B), tr

    span = ts.points[-1] - ts.points[0]
    v_a = (B - A) / span
    f_a, tr_a = miss(v_a)
    if abs(f_a) <= tol:
        return tr_a
    v_b = v_a + 0.1 * max(1.0, abs(v_a))
    f_b, tr_b = miss(v_b)
    for _ in range(max_iter):
        if abs(f_b) <= tol:
            return tr_b
        denom = f_b - f_a
        if denom == 0 or not math.isfinite(denom):
            break
        v_new = v_b - f_b * (v_b - v_a) / denom
        v_a, f_a = v_b, f_b
        v_b = v_new
        f_b, tr_b = miss(v_b)
    if abs(f_b) <= tol:
        return tr_b
    raise ConvergenceError(
        f"shooting did not converge: last bracket v0 in [{min(v_a, v_b)!r}, {max(v_a, v_b)!r}], "
        f"endpoint miss {f_b!r}")
