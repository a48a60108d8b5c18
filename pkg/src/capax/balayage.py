"""Balayage (sweeping) of a measure onto a node subset.

Three independent formulations:

projection
    energy-norm projection of ``mu`` onto measures carried by ``A``
    (nonnegative QP with ``Q = K_AA`` and ``b = (K mu)_A``);
constrained
    least energy among measures anywhere on ``X`` whose potential dominates
    that of ``mu`` on ``A``;
potential_equation
    the complementarity system ``v >= 0``, ``K_AA v >= (K mu)_A`` with
    equality where ``v > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .capacity import capacity_dual
from .geometry import as_mask
from .kernels import GramForm, Principles, certify
from .measures import DiscreteMeasure, potential
from .qp import DEFAULT_TOL, QpProblem, SolveReport, solve_lcp, solve_qp
from .report import Report

FORMULATIONS = ("projection", "constrained_min_energy", "potential_equation")


@dataclass
class BalayageResult:
    swept: DiscreteMeasure
    formulation: str
    report: SolveReport | None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.report is None or self.report.converged

    def to_json(self) -> dict[str, Any]:
        return {
            "formulation": self.formulation,
            "mass": self.swept.mass,
            "weights": self.swept.weights.tolist(),
            "status": None if self.report is None else self.report.status,
            "kkt_residual": None if self.report is None else self.report.kkt_residual,
            **{k: v for k, v in self.diagnostics.items()},
        }


def _weights(gram, mu):
    if isinstance(mu, DiscreteMeasure):
        return mu
    return DiscreteMeasure(mu, gram.node_set_id)


def _finish(gram, mu, A, swept, formulation, report, tol=1e-7) -> BalayageResult:
    s = DiscreteMeasure(swept, gram.node_set_id)
    ps, pm = potential(gram, s), potential(gram, mu)
    act = A.array[s.weights[A.array] > 0]
    match = float(np.max(np.abs(ps[act] - pm[act]), initial=0.0))
    diag = {
        "potential_match_on_A": match,
        "global_dominated": bool(np.all(ps <= pm + tol)),
        "mass_ratio": s.mass / mu.mass if mu.mass > 0 else math.nan,
    }
    return BalayageResult(s, formulation, report, diag)


def sweep_projection(gram: GramForm, mu, A, tol: float = DEFAULT_TOL) -> BalayageResult:
    """Projection of ``mu`` onto the cone of measures carried by ``A``."""
    mu = _weights(gram, mu)
    Am = as_mask(A, gram.n)
    out = np.zeros(gram.n)
    rep = None
    if len(Am):
        rep = solve_qp(QpProblem(gram.block(Am), potential(gram, mu)[Am.array], "nonneg"), tol)
        out[Am.array] = rep.x
    return _finish(gram, mu, Am, out, "projection", rep)


def sweep_constrained(gram: GramForm, mu, A, tol: float = DEFAULT_TOL) -> BalayageResult:
    """Least-energy measure on all of ``X`` whose potential dominates ``K mu`` on ``A``.

    The support is not restricted to ``A``; landing on ``A`` is an outcome.
    """
    mu = _weights(gram, mu)
    Am = as_mask(A, gram.n)
    if len(Am) == 0:
        return _finish(gram, mu, Am, np.zeros(gram.n), "constrained_min_energy", None)
    problem = QpProblem(gram.matrix, np.zeros(gram.n), "linear_ineq", gram.block(Am, None),
                        potential(gram, mu)[Am.array])
    rep = solve_qp(problem, tol)
    res = _finish(gram, mu, Am, rep.x, "constrained_min_energy", rep)
    off = np.ones(gram.n, dtype=bool)
    off[Am.array] = False
    res.diagnostics["mass_off_A"] = float(rep.x[off].sum())
    return res


def sweep_potential_eq(gram: GramForm, mu, A, tol: float = DEFAULT_TOL) -> BalayageResult:
    """Complementarity form on ``A``; nodes outside ``A`` get exactly zero."""
    mu = _weights(gram, mu)
    Am = as_mask(A, gram.n)
    out = np.zeros(gram.n)
    rep = None
    if len(Am):
        rep = solve_lcp(gram.block(Am), potential(gram, mu)[Am.array], tol)
        out[Am.array] = rep.x
    return _finish(gram, mu, Am, out, "potential_equation", rep)


SWEEPS = {
    "projection": sweep_projection,
    "constrained_min_energy": sweep_constrained,
    "potential_equation": sweep_potential_eq,
}


def sweep(gram: GramForm, mu, A, formulation: str = "projection", tol: float = DEFAULT_TOL) -> BalayageResult:
    try:
        fn = SWEEPS[formulation]
    except KeyError:
        raise ValueError(f"unknown balayage formulation {formulation!r}") from None
    return fn(gram, mu, A, tol)


def feasible_candidates(gram: GramForm, mu, A, swept, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    """Measures whose potential dominates ``K mu`` on ``A``.

    ``swept`` plus nonnegative perturbations, ``mu`` itself, and equilibrium
    measures of ``A`` scaled up to dominate.
    """
    mu = _weights(gram, mu)
    Am = as_mask(A, gram.n)
    s = swept.weights if isinstance(swept, DiscreteMeasure) else np.asarray(swept, dtype=float)
    out = [mu.weights.copy()]
    pm = potential(gram, mu)[Am.array]
    if len(Am):
        g = capacity_dual(gram, Am).gamma.weights
        t = float(np.max(pm, initial=0.0))
        out.append(t * g)
        out.append(t * g * rng.uniform(1.0, 2.0))
    while len(out) < count:
        bump = rng.exponential(size=gram.n) * (rng.random(gram.n) < 0.5) * rng.uniform(0.0, 1.0)
        out.append(s + bump)
    return out[:count]


def verify_balayage(gram: GramForm, mu, A, result: BalayageResult, principles: Principles | None = None,
                    samples: int = 20, seed: int = 0, tol: float = 1e-7) -> Report:
    """Itemized check of the relations characterizing the swept measure.

    Unconditional: support in ``A``; potential equality on the support of
    the swept measure; potential at least ``K mu`` on ``A``; the projection
    inequality against sampled measures on ``A``; energy drop.
    With the domination principle: potential equality on all of ``A``,
    global domination by ``K mu`` and minimum potential among sampled
    feasible measures. With both principles: minimum mass among sampled
    feasible measures and no mass gain. If the swept measure keeps all of
    the mass of ``mu`` while differing from it, the report carries the flag
    ``"min-mass non-unique"``.
    """
    mu = _weights(gram, mu)
    Am = as_mask(A, gram.n)
    if principles is None:
        principles = certify(gram)
    dom = principles.domination.passed
    both = principles.both
    rng = np.random.default_rng(seed)
    s = result.swept.weights
    ps, pm = gram.matrix @ s, gram.matrix @ mu.weights
    rep = Report(f"balayage[{result.formulation}]")
    off = np.ones(gram.n, dtype=bool)
    off[Am.array] = False
    rep.add("support_in_A", float(s[off].sum()) <= tol, float(s[off].sum()), tol)
    supp = s > 0
    eq_supp = float(np.max(np.abs(ps[supp] - pm[supp]), initial=0.0))
    rep.add("potential_eq_on_support", eq_supp <= tol, eq_supp, tol)
    short = float(np.max(pm[Am.array] - ps[Am.array], initial=0.0))
    rep.add("potential_ge_on_A", short <= tol, short, tol)
    energy_s, energy_m = float(s @ ps), float(mu.weights @ pm)
    rep.add("energy_drop", energy_s <= energy_m + tol, energy_s - energy_m, tol)
    # projection optimality against measures carried by A
    dist = float((mu.weights - s) @ gram.matrix @ (mu.weights - s))
    worst = -math.inf
    for _ in range(samples):
        nu = np.zeros(gram.n)
        nu[Am.array] = np.maximum(s[Am.array] + rng.normal(scale=0.3, size=len(Am)) * (rng.random(len(Am)) < 0.7), 0)
        d = float((mu.weights - nu) @ gram.matrix @ (mu.weights - nu))
        worst = max(worst, dist - d)
    rep.add("nearest_in_cone", worst <= tol * max(1.0, dist), worst, tol)
    cands = feasible_candidates(gram, mu, Am, s, rng, samples)
    if dom:
        eqA = float(np.max(np.abs(ps[Am.array] - pm[Am.array]), initial=0.0))
        rep.add("potential_eq_on_A", eqA <= tol, eqA, tol)
        top = float(np.max(ps - pm, initial=0.0))
        rep.add("dominated_everywhere", top <= tol, top, tol)
        worst = max(float(np.max(ps - gram.matrix @ nu)) for nu in cands)
        rep.add("minimum_potential", worst <= tol, worst, tol)
    else:
        for name in ("potential_eq_on_A", "dominated_everywhere", "minimum_potential"):
            rep.skip(name, "domination principle not certified")
    if both:
        worst = max(float(s.sum() - nu.sum()) for nu in cands)
        rep.add("minimum_mass", worst <= tol, worst, tol)
        rep.add("mass_not_increased", s.sum() <= mu.mass + tol, s.sum() - mu.mass, tol)
    else:
        rep.skip("minimum_mass", "maximum principles not certified")
        rep.skip("mass_not_increased", "maximum principles not certified")
    rep.data.update(result.diagnostics)
    if abs(s.sum() - mu.mass) <= tol and float(np.max(np.abs(s - mu.weights), initial=0.0)) > tol:
        rep.flags.append("min-mass non-unique")
    return rep


def equilibrium_balayage_consistency(gram: GramForm, A, Q, tol: float = 1e-7) -> Report:
    """Sweeping the equilibrium measure of ``Q`` onto ``A`` (``A`` inside ``Q``)
    gives the equilibrium measure of ``A``; also ``A`` swept onto itself."""
    Am, Qm = as_mask(A, gram.n), as_mask(Q, gram.n)
    if not Am <= Qm:
        raise ValueError("A must be contained in Q")
    rep = Report("equilibrium_balayage")
    gA = capacity_dual(gram, Am).gamma
    gQ = capacity_dual(gram, Qm).gamma
    swept = sweep_projection(gram, gQ, Am).swept
    d = float(np.max(np.abs(swept.weights - gA.weights), initial=0.0))
    rep.add("swept_Q_equals_A", d <= tol, d, tol)
    self_swept = sweep_projection(gram, gA, Am).swept
    d2 = float(np.max(np.abs(self_swept.weights - gA.weights), initial=0.0))
    rep.add("swept_A_equals_A", d2 <= tol, d2, tol)
    rep.data.update(gamma_A=gA.weights.tolist(), swept=swept.weights.tolist())
    return rep
