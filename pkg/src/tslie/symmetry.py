"""Lie point symmetries along solved trajectories.

Everything here is evaluated on-shell: the inputs are trajectories that
solve the equation of motion, and each check returns per-point residuals.
Generators ``tau(t, q)`` and ``xi(t, q)`` are sampled along the trajectory
and differentiated as composite functions of the point index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .dynamics import (AccelerationField, Lagrangian, Trajectory, acceleration_partials,
                       eval_series)
from .errors import DomainExhaustedError, InputError
from .report import ResidualReport


@dataclass(frozen=True, eq=False)
class GeneratorPair:
    tau: ex.Expression
    xi: ex.Expression

    def __post_init__(self):
        for name in ("tau", "xi"):
            e = getattr(self, name)
            if isinstance(e, str):
                e = ex.parse(e, ex.GENERATOR_VARS)
                object.__setattr__(self, name, e)
            ex.check_variables(e, ex.GENERATOR_VARS)

    @classmethod
    def parse(cls, tau: str, xi: str) -> "GeneratorPair":
        return cls(ex.parse(tau, ex.GENERATOR_VARS), ex.parse(xi, ex.GENERATOR_VARS))

    def scaled(self, c: float) -> "GeneratorPair":
        k = ex.const(c)
        return GeneratorPair(ex.Binary("*", k, self.tau), ex.Binary("*", k, self.xi))

    def __str__(self):
        return f"tau={ex.serialize(self.tau)}, xi={ex.serialize(self.xi)}"


@dataclass(frozen=True, eq=False)
class GeneratorLadders:
    """Generator samples and their delta ladders along one trajectory.

    Lengths: ``tau``, ``xi`` n; ``tau_d``, ``xi_d``, ``tau_sigma``,
    ``xi_sigma``, ``mu_tau_d`` n-1; ``tau_dd``, ``xi_dd``, ``mu_tau_d_d`` n-2.
    """

    tau: np.ndarray
    xi: np.ndarray
    tau_d: np.ndarray
    xi_d: np.ndarray
    tau_dd: np.ndarray
    xi_dd: np.ndarray
    tau_sigma: np.ndarray
    xi_sigma: np.ndarray
    mu_tau_d: np.ndarray
    mu_tau_d_d: np.ndarray


def build_ladders(gen: GeneratorPair, tr: Trajectory) -> GeneratorLadders:
    if tr.n < 3:
        raise DomainExhaustedError("generator ladders need at least 3 points")
    n = tr.n
    mu = tr.mu
    tau = eval_series(gen.tau, n, t=tr.t, q=tr.q)
    xi = eval_series(gen.xi, n, t=tr.t, q=tr.q)
    tau_d = np.diff(tau) / mu[:-1]
    xi_d = np.diff(xi) / mu[:-1]
    mu_tau_d = mu[:-1] * tau_d
    return GeneratorLadders(
        tau=tau, xi=xi,
        tau_d=tau_d, xi_d=xi_d,
        tau_dd=np.diff(tau_d) / mu[:-2], xi_dd=np.diff(xi_d) / mu[:-2],
        tau_sigma=tau[1:], xi_sigma=xi[1:],
        mu_tau_d=mu_tau_d, mu_tau_d_d=np.diff(mu_tau_d) / mu[:-2],
    )


def _prolongation_terms(lad, tr, n, f_t, f_qs, f_qd):
    """The three summands of the first prolongation on the first n points."""
    coeff = lad.xi_d[:n] - lad.tau_d[:n] * tr.qdsigma[:n]
    return lad.tau[:n] * f_t, lad.xi_sigma[:n] * f_qs, coeff * f_qd


def apply_prolongation(gen: GeneratorPair, F, tr: Trajectory, i: int) -> float:
    """First prolongation of the generator applied to ``F(t, qs, qd)`` at point ``i``.

    ``tau F_t + xi^sigma F_qs + (xi^Delta - tau^Delta qd^sigma) F_qd``.
    """
    if isinstance(F, str):
        F = ex.parse(F, ex.LAGRANGIAN_VARS)
    ex.check_variables(F, ex.LAGRANGIAN_VARS)
    if not 0 <= i < tr.n - 2:
        raise InputError(f"index {i} outside the prolongation domain 0..{tr.n - 3}")
    lad = build_ladders(gen, tr)
    b = {"t": float(tr.t[i]), "qs": float(tr.qs[i]), "qd": float(tr.qd[i])}
    coeff = lad.xi_d[i] - lad.tau_d[i] * tr.qdsigma[i]
    return float(lad.tau[i] * ex.evaluate(ex.differentiate(F, "t"), b)
                 + lad.xi_sigma[i] * ex.evaluate(ex.differentiate(F, "qs"), b)
                 + coeff * ex.evaluate(ex.differentiate(F, "qd"), b))


def acceleration_series(acc: AccelerationField, tr: Trajectory, n: int):
    """``h`` and its three partials on the first ``n`` points."""
    if acc.h is not None:
        b = tr.bindings(n)
        return tuple(eval_series(e, n, **b) for e in (acc.h, acc.h_t, acc.h_qs, acc.h_qd))
    rows = np.array([
        acceleration_partials(acc, (tr.t[i], tr.mu[i], tr.mu[i + 1], tr.qs[i], tr.qd[i]))
        for i in range(n)
    ]).reshape(n, 4)
    return tuple(rows[:, k].copy() for k in range(4))


def determining_terms(lad: GeneratorLadders, h_series, tr: Trajectory) -> list:
    """Summands of the determining equation residual on the first n-3 points."""
    n = tr.n - 3
    h, h_t, h_qs, h_qd = (np.asarray(a)[:n] for a in h_series)
    mu = tr.mu[:n]
    mtd_d = lad.mu_tau_d_d[:n]
    td = lad.tau_d[:n]
    x1 = _prolongation_terms(lad, tr, n, h_t, h_qs, h_qd)
    return [
        lad.xi_dd[:n],
        -lad.tau_dd[:n] * tr.qdd[:n],
        -(mtd_d + 2 * td + mu * lad.tau_dd[:n]) * h,
        -(mu * mtd_d + 2 * mu * td) * tr.qddd[:n],
        -x1[0], -x1[1], -x1[2],
    ]


def determining_residual(gen: GeneratorPair, acc: AccelerationField,
                         tr: Trajectory) -> ResidualReport:
    """Residual of the determining equation along an on-shell trajectory.

    ``xi^DD - tau^DD qdd - [(mu tau^D)^D + 2 tau^D + mu tau^DD] h
    - [mu (mu tau^D)^D + 2 mu tau^D] qddd - X1 h`` on the first n-3 points.
    """
    if tr.n < 5:
        raise DomainExhaustedError("determining residual needs at least 5 points")
    lad = build_ladders(gen, tr)
    hs = acceleration_series(acc, tr, tr.n - 3)
    return ResidualReport.from_terms(*determining_terms(lad, hs, tr), label="determining")


@dataclass(frozen=True, eq=False)
class GaugeFunction:
    """Gauge values on the first n-1 points, ``values[0] = 0``."""

    values: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        for name in ("values", "delta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_values(cls, values, tr: Trajectory) -> "GaugeFunction":
        """Gauge given directly as samples on the first n-1 points."""
        values = np.asarray(values, dtype=float)
        if values.size != tr.n - 1:
            raise InputError(f"gauge needs {tr.n - 1} values, got {values.size}")
        return cls(values, np.diff(values) / tr.mu[:tr.n - 2])

    @classmethod
    def zero(cls, tr: Trajectory) -> "GaugeFunction":
        return cls(np.zeros(tr.n - 1), np.zeros(tr.n - 2))


def _structure_parts(gen, L, tr):
    n = tr.n - 2
    lad = build_ladders(gen, tr)
    b = tr.bindings(n)
    Lv = eval_series(L.expr, n, **b)
    p1, p2, p3 = (eval_series(e, n, **b) for e in (L.d1, L.d2, L.d3))
    return n, lad, Lv, p1, p2, p3


def _structure_terms(lad, tr, n, Lv, p1, p2, p3):
    td = lad.tau_d[:n]
    x1 = _prolongation_terms(lad, tr, n, p1, p2, p3)
    return [Lv * td, *x1, p3 * tr.mu[:n] * td * tr.qdd[:n]]


def solve_gauge(gen: GeneratorPair, L: Lagrangian, tr: Trajectory) -> GaugeFunction:
    """Integrate the structure equation for ``G`` with ``G(t_0) = 0``."""
    n, lad, Lv, p1, p2, p3 = _structure_parts(gen, L, tr)
    g_delta = -np.sum(_structure_terms(lad, tr, n, Lv, p1, p2, p3), axis=0)
    values = np.concatenate([[0.0], np.cumsum(tr.mu[:n] * g_delta)])
    return GaugeFunction(values, g_delta)


def _gauge_delta(G, tr):
    n = tr.n - 2
    if G.values.size != n + 1:
        raise InputError(f"gauge has {G.values.size} values, trajectory needs {n + 1}")
    return np.diff(G.values) / tr.mu[:n]


def structure_residual(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction,
                       tr: Trajectory) -> ResidualReport:
    """``L tau^D + X1 L + d3L mu tau^D qdd + G^D`` on the first n-2 points."""
    n, lad, Lv, p1, p2, p3 = _structure_parts(gen, L, tr)
    terms = _structure_terms(lad, tr, n, Lv, p1, p2, p3)
    return ResidualReport.from_terms(*terms, _gauge_delta(G, tr), label="structure")


def noether_residual(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction,
                     tr: Trajectory) -> ResidualReport:
    """``d1L tau + d2L xi^s + d3L xi^D + L tau^D - d3L tau^D qd + G^D``."""
    n, lad, Lv, p1, p2, p3 = _structure_parts(gen, L, tr)
    td = lad.tau_d[:n]
    return ResidualReport.from_terms(
        p1 * lad.tau[:n], p2 * lad.xi_sigma[:n], p3 * lad.xi_d[:n],
        Lv * td, -p3 * td * tr.qd[:n], _gauge_delta(G, tr), label="noether")


def equivalence_gap(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction,
                    tr: Trajectory) -> ResidualReport:
    """Structure residual minus Noether residual.

    The two differ by ``d3L tau^D (qd + mu qdd - qd^sigma)``, which vanishes
    identically, so this measures rounding only.
    """
    gap = structure_residual(gen, L, G, tr) - noether_residual(gen, L, G, tr)
    return ResidualReport(gap.series, gap.start, gap.scale, label="equivalence_gap")


@dataclass(frozen=True, eq=False)
class ConservedSeries:
    """Candidate conserved quantity on the first n-1 points."""

    values: np.ndarray
    include_gauge: bool
    scale: float
    parts: dict = field(default_factory=dict)

    @property
    def drift(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - v[0]))) if v.size else 0.0

    @property
    def relative_drift(self) -> float:
        return self.drift / self.scale if self.scale > 0 else self.drift


def conserved_series(gen: GeneratorPair, L: Lagrangian, G: GaugeFunction, tr: Trajectory,
                     include_gauge: bool = True) -> ConservedSeries:
    """``d3L xi + [L - d3L qd - d1L mu] tau (+ G)``."""
    n = tr.n - 1
    lad = build_ladders(gen, tr)
    b = tr.bindings(n)
    Lv = eval_series(L.expr, n, **b)
    p1 = eval_series(L.d1, n, **b)
    p3 = eval_series(L.d3, n, **b)
    momentum = p3 * lad.xi[:n]
    energy = (Lv - p3 * tr.qd[:n] - p1 * tr.mu[:n]) * lad.tau[:n]
    gauge = G.values[:n] if include_gauge else np.zeros(n)
    parts = {"momentum": momentum, "energy": energy, "gauge": gauge}
    scale = max(float(np.max(np.abs(a))) for a in parts.values())
    return ConservedSeries(momentum + energy + gauge, include_gauge, scale, parts)


def conservation_residual(series: ConservedSeries, tr: Trajectory) -> ResidualReport:
    """Delta derivative of the conserved quantity on the first n-2 points.

    Each part is differentiated separately and the report scale is the
    largest of those derivatives, which is what has to cancel.
    """
    n = tr.n - 2
    mu = tr.mu[:n]
    deltas = [np.diff(p) / mu for p in series.parts.values()]
    return ResidualReport.from_terms(*deltas, label="conservation")


# --------------------------------------------------------------------------
# ansatz search


@dataclass(frozen=True, eq=False)
class Candidate:
    generator: GeneratorPair
    score: float
    tau_coeffs: np.ndarray
    xi_coeffs: np.ndarray
    null: bool

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.tau_coeffs, self.xi_coeffs])


@dataclass(frozen=True, eq=False)
class SearchResult:
    candidates: list
    singular_values: np.ndarray
    null_dimension: int

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, k):
        return self.candidates[k]

    @property
    def rank_deficient(self) -> bool:
        return self.null_dimension > 1


def _combine(basis, coeffs, tol):
    out = None
    for b, c in zip(basis, coeffs):
        if abs(c) <= tol:
            continue
        term = ex._mul(ex.const(c), b)
        out = term if out is None else ex._add(out, term)
    return out if out is not None else ex.ZERO


def _sparsify(V):
    """Reduced row echelon form of the rows of ``V`` with partial pivoting."""
    M = V.copy()
    rows, cols = M.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(M[r:, c])))
        if abs(M[p, c]) < 1e-8:
            continue
        M[[r, p]] = M[[p, r]]
        M[r] /= M[r, c]
        for k in range(rows):
            if k != r:
                M[k] -= M[k, c] * M[r]
        r += 1
    return M[:r]


def _refit(A, row, support_tol=1e-8):
    """Best unit vector supported where ``row`` is non-negligible."""
    support = np.abs(row) > support_tol * np.max(np.abs(row))
    _, _, vh = np.linalg.svd(A[:, support], full_matrices=True)
    v = np.zeros(row.size)
    v[support] = vh[-1]
    return _unit(v)


def _unit(v):
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v if v[k] > 0 else -v


def search_generators(basis_tau: Sequence, basis_xi: Sequence, acc: AccelerationField,
                      trajectories: Sequence[Trajectory], threshold: float = 1e-10,
                      coeff_tol: float = 1e-12) -> SearchResult:
    """Fit generator coefficients over a basis by least squares.

    The determining residual is linear in the generator, so each basis
    element contributes one column of residuals sampled over every on-shell
    point of every trajectory.  Unit-norm coefficient vectors minimising the
    residual norm are the right singular vectors with the smallest singular
    values.  Directions whose singular value is below ``threshold`` times
    the largest are an exact null space; when it has several dimensions it
    is rotated to reduced echelon form so each candidate involves as few
    basis elements as possible, and each such candidate is refitted on its
    own support.  Null-space candidates are tied and listed in echelon
    (basis) order ahead of the rest, which are ranked by their largest
    pointwise residual.
    """
    basis_tau = [ex.parse(b, ex.GENERATOR_VARS) if isinstance(b, str) else b for b in basis_tau]
    basis_xi = [ex.parse(b, ex.GENERATOR_VARS) if isinstance(b, str) else b for b in basis_xi]
    # identically zero elements (e.g. "tau = 0" to pin tau) add nothing
    basis_tau = [b for b in basis_tau if ex._const_value(b) != 0.0]
    basis_xi = [b for b in basis_xi if ex._const_value(b) != 0.0]
    if not basis_tau and not basis_xi:
        raise InputError("generator search needs a non-empty basis")
    if not trajectories:
        raise InputError("generator search needs at least one trajectory")

    columns = [(b, ex.ZERO) for b in basis_tau] + [(ex.ZERO, b) for b in basis_xi]
    blocks = []
    for tr in trajectories:
        if tr.n < 5:
            raise DomainExhaustedError("generator search needs trajectories of at least 5 points")
        hs = acceleration_series(acc, tr, tr.n - 3)
        block = np.column_stack([
            np.sum(determining_terms(build_ladders(GeneratorPair(tau, xi), tr), hs, tr), axis=0)
            for tau, xi in columns
        ])
        blocks.append(block)
    A = np.vstack(blocks)
    p = A.shape[1]

    _, s, vh = np.linalg.svd(A, full_matrices=True)
    sv = np.zeros(p)
    sv[:s.size] = s
    s_max = float(sv.max()) if sv.size else 0.0
    null = sv <= threshold * s_max if s_max > 0 else np.ones(p, dtype=bool)
    null_dim = int(null.sum())

    vectors = []
    if null_dim:
        for row in _sparsify(vh[null]):
            vectors.append((_refit(A, row), True))
    for k in np.argsort(sv):
        if not null[k]:
            vectors.append((_unit(vh[k]), False))

    m = len(basis_tau)
    candidates = []
    for v, is_null in vectors:
        score = float(np.max(np.abs(A @ v))) if A.size else 0.0
        tol = coeff_tol * float(np.max(np.abs(v)))
        v = np.where(np.abs(v) <= tol, 0.0, v)
        gen = GeneratorPair(_combine(basis_tau, v[:m], 0.0), _combine(basis_xi, v[m:], 0.0))
        candidates.append(Candidate(gen, score, v[:m].copy(), v[m:].copy(), is_null))
    # null-space candidates tie at the method's resolution and keep echelon order
    candidates.sort(key=lambda c: 0.0 if c.null else c.score)
    return SearchResult(candidates, sv, null_dim)
