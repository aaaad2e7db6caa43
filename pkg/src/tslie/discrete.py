"""The integer-time case written with plain differences.

Formulas are coded directly on ``q_k`` rather than through the general
time-scale machinery, so that the two can be compared point by point.
Two variants exist where the plain-difference form does not match the
unit-step reduction of the general equations:

* Euler-Lagrange: ``printed`` takes the coordinate partial at ``k``,
  ``reconciled`` at ``k - 1``.
* Determining equation: ``printed`` carries ``Delta q * Delta^2 tau``,
  ``mu1`` carries ``Delta^2 q * Delta^2 tau``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .dynamics import Lagrangian, Trajectory, eval_series
from .errors import DomainExhaustedError, InputError
from .report import ResidualReport
from .symmetry import ConservedSeries, GaugeFunction, GeneratorPair


@dataclass(frozen=True, eq=False)
class DiscreteTrajectory:
    """``q_k`` for ``k = M .. M+N-1`` with forward differences."""

    q: np.ndarray
    M: int = 0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 1 or q.size < 2:
            raise InputError("a discrete trajectory needs at least two values")
        dq = np.diff(q)
        d2q = np.diff(dq)
        d3q = np.diff(d2q)
        for name, arr in (("q", q), ("dq", dq), ("d2q", d2q), ("d3q", d3q)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_trajectory(cls, tr: Trajectory) -> "DiscreteTrajectory":
        if not tr.ts.is_unit_lattice():
            raise InputError("discrete trajectories need a unit integer lattice")
        return cls(tr.q, int(tr.t[0]))

    @property
    def N(self) -> int:
        return self.q.size

    @property
    def k(self) -> np.ndarray:
        return self.M + np.arange(self.N, dtype=float)

    @property
    def backward(self) -> np.ndarray:
        """``q_k - q_{k-1}`` for positions 1..N-1."""
        return self.dq

    def args(self, lo: int, hi: int) -> dict:
        """Lagrangian arguments ``(k, q_{k+1}, Delta q_k)`` at positions lo..hi-1."""
        return {"t": self.k[lo:hi], "qs": self.q[lo + 1:hi + 1], "qd": self.dq[lo:hi]}


def _need(tr, k, what):
    if tr.N < k:
        raise DomainExhaustedError(f"{what} needs at least {k} points, got {tr.N}")


def discrete_el_residual(L: Lagrangian, tr: DiscreteTrajectory,
                         variant: str = "reconciled") -> ResidualReport:
    """Discrete Euler-Lagrange residual at positions 1..N-2."""
    _need(tr, 3, "discrete Euler-Lagrange residual")
    m = tr.N - 2
    ahead = tr.args(1, m + 1)
    behind = tr.args(0, m)
    p3_ahead = eval_series(L.d3, m, **ahead)
    p3_behind = eval_series(L.d3, m, **behind)
    if variant == "printed":
        p2 = eval_series(L.d2, m, **ahead)
    elif variant == "reconciled":
        p2 = eval_series(L.d2, m, **behind)
    else:
        raise InputError(f"unknown discrete variant {variant!r}")
    return ResidualReport.from_terms(p3_ahead, -p3_behind, -p2, start=1,
                                     label=f"discrete_el_{variant}")


def _generator_diffs(gen, tr):
    k = tr.k
    tau = eval_series(gen.tau, tr.N, t=k, q=tr.q)
    xi = eval_series(gen.xi, tr.N, t=k, q=tr.q)
    return tau, xi, np.diff(tau), np.diff(xi), np.diff(tau, 2), np.diff(xi, 2)


def _x1(tau, xi, dtau, dxi, tr, m, f_t, f_qs, f_qd):
    coeff = dxi[:m] - dtau[:m] * tr.dq[:m] - dtau[:m] * tr.d2q[:m]
    return tau[:m] * f_t, xi[1:m + 1] * f_qs, coeff * f_qd


def _determining_parts(gen, h, tr):
    if isinstance(h, str):
        h = ex.parse(h, ex.ACCELERATION_VARS)
    _need(tr, 5, "discrete determining residual")
    m = tr.N - 3
    tau, xi, dtau, dxi, d2tau, d2xi = _generator_diffs(gen, tr)
    b = tr.args(0, m)
    hv = eval_series(h, m, **b)
    h_t, h_qs, h_qd = (eval_series(ex.differentiate(h, v), m, **b) for v in ("t", "qs", "qd"))
    x1 = _x1(tau, xi, dtau, dxi, tr, m, h_t, h_qs, h_qd)
    return m, hv, x1, dtau[:m], d2tau[:m], d2xi[:m]


def discrete_determining_residual(gen: GeneratorPair, h, tr: DiscreteTrajectory,
                                  variant: str = "mu1") -> ResidualReport:
    """Discrete determining residual at positions 0..N-4."""
    m, hv, x1, dtau, d2tau, d2xi = _determining_parts(gen, h, tr)
    d2q, d3q = tr.d2q[:m], tr.d3q[:m]
    if variant == "printed":
        terms = [d2xi, -tr.dq[:m] * d2tau, -2 * (dtau + d2tau) * d2q,
                 -(2 * dtau + d2tau) * d3q]
    elif variant == "mu1":
        terms = [d2xi, -d2tau * d2q, -(2 * d2tau + 2 * dtau) * hv,
                 -(d2tau + 2 * dtau) * d3q]
    else:
        raise InputError(f"unknown discrete variant {variant!r}")
    return ResidualReport.from_terms(*terms, -x1[0], -x1[1], -x1[2],
                                     label=f"discrete_determining_{variant}")


def discrete_determining_gap(gen: GeneratorPair, h, tr: DiscreteTrajectory) -> ResidualReport:
    """Pointwise ``printed - mu1`` determining residual."""
    gap = (discrete_determining_residual(gen, h, tr, "printed")
           - discrete_determining_residual(gen, h, tr, "mu1"))
    return ResidualReport(gap.series, gap.start, gap.scale, label="discrete_determining_gap")


def _structure_parts(gen, L, tr):
    _need(tr, 4, "discrete structure equation")
    m = tr.N - 2
    tau, xi, dtau, dxi, _, _ = _generator_diffs(gen, tr)
    b = tr.args(0, m)
    Lv = eval_series(L.expr, m, **b)
    p1, p2, p3 = (eval_series(e, m, **b) for e in (L.d1, L.d2, L.d3))
    return m, tau, xi, dtau, dxi, Lv, p1, p2, p3


def _structure_terms(gen, L, tr):
    m, tau, xi, dtau, dxi, Lv, p1, p2, p3 = _structure_parts(gen, L, tr)
    x1 = _x1(tau, xi, dtau, dxi, tr, m, p1, p2, p3)
    return m, [Lv * dtau[:m], *x1, p3 * dtau[:m] * tr.d2q[:m]]


def discrete_gauge(gen: GeneratorPair, L: Lagrangian, tr: DiscreteTrajectory) -> GaugeFunction:
    """Sum the discrete structure equation for ``G`` starting from zero."""
    _, terms = _structure_terms(gen, L, tr)
    dG = -np.sum(terms, axis=0)
    return GaugeFunction(np.concatenate([[0.0], np.cumsum(dG)]), dG)


def _dG(G, m):
    if G.values.size != m + 1:
        raise InputError(f"gauge has {G.values.size} values, expected {m + 1}")
    return np.diff(G.values)


def discrete_structure_residual(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction,
                                tr: DiscreteTrajectory) -> ResidualReport:
    m, terms = _structure_terms(gen, L, tr)
    return ResidualReport.from_terms(*terms, _dG(G, m), label="discrete_structure")


def discrete_noether_residual(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction,
                              tr: DiscreteTrajectory) -> ResidualReport:
    m, tau, xi, dtau, dxi, Lv, p1, p2, p3 = _structure_parts(gen, L, tr)
    return ResidualReport.from_terms(
        p1 * tau[:m], p2 * xi[1:m + 1], p3 * dxi[:m],
        (Lv - p3 * tr.dq[:m]) * dtau[:m], _dG(G, m), label="discrete_noether")


def discrete_conserved(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction,
                       tr: DiscreteTrajectory, include_gauge: bool = True) -> ConservedSeries:
    """``d3L xi_k + [L - d3L Delta q - d1L] tau_k (+ G)`` at positions 0..N-2."""
    m = tr.N - 1
    tau, xi, *_ = _generator_diffs(gen, tr)
    b = tr.args(0, m)
    Lv = eval_series(L.expr, m, **b)
    p1 = eval_series(L.d1, m, **b)
    p3 = eval_series(L.d3, m, **b)
    momentum = p3 * xi[:m]
    energy = (Lv - p3 * tr.dq - p1) * tau[:m]
    gauge = G.values[:m] if include_gauge else np.zeros(m)
    parts = {"momentum": momentum, "energy": energy, "gauge": gauge}
    scale = max(float(np.max(np.abs(a))) for a in parts.values())
    return ConservedSeries(momentum + energy + gauge, include_gauge, scale, parts)
