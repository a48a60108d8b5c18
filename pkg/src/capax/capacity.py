"""Capacities and equilibrium measures through independent formulations.

Every solver returns an :class:`EquilibriumResult` holding the capacity
``c``, the Robin constant ``w = 1/c``, the unit-mass minimizer ``lam``, the
equilibrium measure ``gamma = c * lam`` and the extremal measure
``xi = gamma / c``.

Formulations
------------
primal
    minimize ``w^T K w`` over unit-mass measures on ``A``.
dual
    maximize ``G(nu) = 2 nu(X) - |nu|^2`` over measures on ``A``.
obstacle
    minimize ``|nu|^2`` subject to ``K nu >= 1`` on ``A``; ``nu`` may live on
    any node of ``support`` (default: all nodes).
min_mass
    minimize ``nu(X)`` subject to ``K nu >= 1`` on ``A`` (LP).
mass_max
    maximize ``nu(X)`` over measures on ``A`` with ``K nu <= 1`` everywhere
    (LP).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .geometry import SubsetMask, as_mask
from .kernels import GramForm, Principles, certify, check_frostman
from .measures import DiscreteMeasure, energy, g_functional, potential
from .qp import DEFAULT_TOL, QpProblem, SolveReport, solve_lp, solve_qp
from .report import Report

FORMULATIONS = ("primal", "dual", "obstacle", "min_mass", "mass_max")


@dataclass
class EquilibriumResult:
    capacity: float
    robin: float
    lam: DiscreteMeasure
    gamma: DiscreteMeasure
    xi: DiscreteMeasure
    formulation: str
    A: SubsetMask
    report: SolveReport | None = None
    checks: Report | None = None
    diagnostics: dict[str, Any] = field(default_factory=dict)
    potential: np.ndarray | None = None

    @property
    def mass(self) -> float:
        return self.gamma.mass

    @property
    def energy(self) -> float:
        return float(self.diagnostics.get("energy", math.nan))

    @property
    def converged(self) -> bool:
        return self.report is None or self.report.converged

    def to_json(self) -> dict[str, Any]:
        pot = self.potential if self.potential is not None else np.zeros(len(self.gamma))
        on_A = pot[self.A.array] if len(self.A) else np.zeros(0)
        supp = self.gamma.weights > 0
        return {
            "capacity": self.capacity,
            "robin": self.robin,
            "mass": self.mass,
            "energy": self.energy,
            "potential_min_on_A": float(on_A.min()) if on_A.size else None,
            "potential_max_on_support": float(pot[supp].max()) if supp.any() else None,
            "formulation": self.formulation,
            "kkt_residual": None if self.report is None else self.report.kkt_residual,
            "status": "converged" if self.report is None else self.report.status,
        }


def result_from_gamma(gram: GramForm, A, gamma, formulation: str, report: SolveReport | None = None,
                      capacity: float | None = None) -> EquilibriumResult:
    """Wrap an equilibrium weight vector; ``capacity`` defaults to its mass."""
    Am = as_mask(A, gram.n)
    g = DiscreteMeasure(gamma, gram.node_set_id)
    c = g.mass if capacity is None else float(capacity)
    if c > 0:
        lam = g.scaled(1.0 / c)
        robin = 1.0 / c
    else:
        lam = DiscreteMeasure.zero(gram.n, gram.node_set_id)
        robin = math.inf
    pot = potential(gram, g)
    diag = {"energy": energy(gram, g), "g_value": g_functional(gram, g)}
    return EquilibriumResult(c, robin, lam, g, lam, formulation, Am, report, None, diag, pot)


def _empty(gram, A, formulation):
    return result_from_gamma(gram, A, np.zeros(gram.n), formulation, None, 0.0)


def _embed(gram, idx, values):
    w = np.zeros(gram.n)
    w[idx] = values
    return w


# --------------------------------------------------------------------------
# formulations

def capacity_primal(gram: GramForm, A, tol: float = DEFAULT_TOL, max_iter: int = 100_000) -> EquilibriumResult:
    """Minimum energy over unit-mass measures on ``A`` (simplex QP)."""
    Am = as_mask(A, gram.n)
    if len(Am) == 0:
        return _empty(gram, Am, "primal")
    rep = solve_qp(QpProblem(gram.block(Am), np.zeros(len(Am)), "simplex"), tol, max_iter)
    lam = rep.x
    w = float(lam @ gram.block(Am) @ lam)
    c = 1.0 / w
    res = result_from_gamma(gram, Am, _embed(gram, Am.array, c * lam), "primal", rep, c)
    res.diagnostics["robin_energy"] = w
    return res


def capacity_dual(gram: GramForm, A, level: float = 1.0, tol: float = DEFAULT_TOL,
                  max_iter: int = 100_000) -> EquilibriumResult:
    """Maximize ``2 level nu(X) - |nu|^2`` over measures on ``A``.

    The maximizer is ``level * gamma`` and the optimal value is
    ``level**2 * c``; both are reported (``diagnostics["optimum"]`` and
    ``diagnostics["scaled_gamma"]``) alongside the normalized result.
    """
    Am = as_mask(A, gram.n)
    if not level > 0:
        raise ValueError("level must be positive")
    if len(Am) == 0:
        return _empty(gram, Am, "dual")
    Q = gram.block(Am)
    rep = solve_qp(QpProblem(Q, np.full(len(Am), float(level)), "nonneg"), tol, max_iter)
    x = rep.x
    optimum = float(2 * level * x.sum() - x @ Q @ x)
    res = result_from_gamma(gram, Am, _embed(gram, Am.array, x / level), "dual", rep, optimum / level**2)
    res.diagnostics.update(optimum=optimum, level=level, scaled_gamma=_embed(gram, Am.array, x))
    return res


def capacity_obstacle(gram: GramForm, A, support=None, tol: float = DEFAULT_TOL, max_iter: int = 100_000,
                      frostman: bool | None = None, check_tol: float = 1e-7,
                      identity_tol: float = 1e-8) -> EquilibriumResult:
    """Minimum energy among measures whose potential is at least 1 on ``A``.

    ``support`` restricts where the measure may live (default: every node).
    The equilibrium identities are evaluated into ``result.checks``; the
    "equal to 1 on all of A" identity is asserted only when ``frostman`` is
    true (if ``None`` the first maximum principle is sampled here).
    """
    Am = as_mask(A, gram.n)
    S = as_mask(support, gram.n)
    if len(Am) == 0:
        res = _empty(gram, Am, "obstacle")
        res.checks = Report("equilibrium")
        return res
    problem = QpProblem(gram.block(S), np.zeros(len(S)), "linear_ineq", gram.block(Am, S), np.ones(len(Am)))
    rep = solve_qp(problem, tol, max_iter)
    gamma = _embed(gram, S.array, rep.x)
    c = float(gamma @ gram.matrix @ gamma)
    res = result_from_gamma(gram, Am, gamma, "obstacle", rep, c)
    if frostman is None:
        frostman = check_frostman(gram, trials=1000, tol=1e-9).passed
    res.checks = equilibrium_checks(gram, Am, res, frostman, check_tol, identity_tol)
    res.diagnostics["frostman"] = frostman
    return res


def capacity_min_mass(gram: GramForm, A, principles: Principles | None = None,
                      tol: float = 1e-7) -> SolveReport:
    """Minimum total mass among measures with potential at least 1 on ``A``.

    Needs both maximum principles; if the model fails either check the
    returned report has status ``"skipped"``. Otherwise ``info["report"]``
    compares the optimal value with the capacity and checks that the
    equilibrium measure attains it.
    """
    Am = as_mask(A, gram.n)
    if principles is None:
        principles = certify(gram)
    if not principles.both:
        return SolveReport(np.zeros(gram.n), math.nan, math.nan, 0, "skipped",
                           info={"reason": "maximum principles not certified",
                                 "frostman": principles.frostman.to_json(),
                                 "domination": principles.domination.to_json()})
    if len(Am) == 0:
        return SolveReport(np.zeros(gram.n), 0.0, 0.0, 0, "converged", tuple(range(gram.n)))
    rep = solve_lp(np.ones(gram.n), gram.block(Am, None), np.ones(len(Am)))
    if rep.converged:
        ref = capacity_dual(gram, Am)
        check = Report("min_mass")
        check.add("value_equals_capacity", abs(rep.objective - ref.capacity) <= tol,
                  abs(rep.objective - ref.capacity), tol)
        g = ref.gamma.weights
        feasible = bool(np.all(gram.block(Am, None) @ g >= 1 - tol))
        check.add("equilibrium_feasible", feasible)
        check.add("equilibrium_optimal", abs(g.sum() - rep.objective) <= tol, abs(g.sum() - rep.objective), tol)
        rep.info["report"] = check
    return rep


def capacity_mass_max(gram: GramForm, A) -> SolveReport:
    """Maximum total mass of measures on ``A`` with potential at most 1 everywhere."""
    Am = as_mask(A, gram.n)
    if len(Am) == 0:
        return SolveReport(np.zeros(gram.n), 0.0, 0.0, 0, "converged", tuple(range(gram.n)))
    rep = solve_lp(-np.ones(len(Am)), -gram.block(None, Am), -np.ones(gram.n))
    if rep.converged:
        rep.x = _embed(gram, Am.array, rep.x)
        rep.objective = -rep.objective
    return rep


def lp_result(gram: GramForm, A, rep: SolveReport, formulation: str) -> EquilibriumResult:
    return result_from_gamma(gram, A, rep.x, formulation, rep, rep.objective)


def compute_capacity(gram: GramForm, A, formulation: str = "dual", **kw) -> EquilibriumResult:
    """Dispatch on a formulation name."""
    if formulation == "primal":
        return capacity_primal(gram, A, **kw)
    if formulation == "dual":
        return capacity_dual(gram, A, **kw)
    if formulation == "obstacle":
        return capacity_obstacle(gram, A, **kw)
    if formulation in ("min_mass", "minmass"):
        rep = capacity_min_mass(gram, A, **kw)
        if rep.status == "skipped":
            res = _empty(gram, A, "min_mass")
            res.report = rep
            return res
        return lp_result(gram, A, rep, "min_mass")
    if formulation == "mass_max":
        return lp_result(gram, A, capacity_mass_max(gram, A), "mass_max")
    raise ValueError(f"unknown formulation {formulation!r}")


# --------------------------------------------------------------------------
# identities and characterizations

def equilibrium_checks(gram: GramForm, A, result: EquilibriumResult, frostman: bool,
                       tol: float = 1e-7, identity_tol: float = 1e-8) -> Report:
    """Potential and mass identities of an equilibrium measure.

    * ``mass_energy`` / ``mass_capacity``: mass, energy and capacity coincide.
    * ``potential_ge_1_on_A``: potential at least 1 on ``A``.
    * ``potential_le_1_on_support`` / ``potential_eq_1_on_support``.
    * ``potential_eq_1_on_A`` (only with the first maximum principle).
    * ``potential_le_1_everywhere`` (only with the first maximum principle).
    """
    Am = as_mask(A, gram.n)
    rep = Report("equilibrium")
    g = result.gamma.weights
    pot = gram.matrix @ g
    mass = float(g.sum())
    en = float(g @ pot)
    rep.add("mass_energy", abs(mass - en) <= identity_tol, abs(mass - en), identity_tol)
    rep.add("mass_capacity", abs(mass - result.capacity) <= identity_tol, abs(mass - result.capacity), identity_tol)
    onA = pot[Am.array]
    supp = g > 0
    low = float(np.max(1.0 - onA, initial=0.0))
    rep.add("potential_ge_1_on_A", low <= tol, low, tol, _argdetail(1.0 - onA, Am.array))
    high = float(np.max(pot[supp] - 1.0, initial=0.0))
    rep.add("potential_le_1_on_support", high <= tol, high, tol)
    dev = float(np.max(np.abs(pot[supp] - 1.0), initial=0.0))
    rep.add("potential_eq_1_on_support", dev <= tol, dev, tol)
    if frostman:
        devA = float(np.max(np.abs(onA - 1.0), initial=0.0))
        rep.add("potential_eq_1_on_A", devA <= tol, devA, tol)
        top = float(np.max(pot - 1.0, initial=0.0))
        rep.add("potential_le_1_everywhere", top <= tol, top, tol)
    else:
        rep.skip("potential_eq_1_on_A", "first maximum principle not certified")
        rep.skip("potential_le_1_everywhere", "first maximum principle not certified")
    return rep


def _argdetail(excess, idx):
    if excess.size == 0:
        return ""
    j = int(np.argmax(excess))
    return f"worst node {int(idx[j])}"


def min_potential_check(gram: GramForm, A, candidates: Iterable, gamma=None, tol: float = 1e-7) -> Report:
    """The equilibrium potential is the pointwise least over feasible measures.

    Candidates whose potential drops below 1 somewhere on ``A`` are rejected
    (reported as skipped with the violated node).
    """
    Am = as_mask(A, gram.n)
    if gamma is None:
        gamma = capacity_dual(gram, Am).gamma
    g = gamma.weights if isinstance(gamma, DiscreteMeasure) else np.asarray(gamma, dtype=float)
    pg = gram.matrix @ g
    rep = Report("min_potential")
    worst = -math.inf
    for k, nu in enumerate(candidates):
        w = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, dtype=float)
        pn = gram.matrix @ w
        short = 1.0 - pn[Am.array]
        if short.size and short.max() > tol:
            rep.skip(f"candidate_{k}", f"infeasible at node {int(Am.array[int(np.argmax(short))])}")
            continue
        excess = float(np.max(pg - pn))
        worst = max(worst, excess)
        rep.add(f"candidate_{k}", excess <= tol, excess, tol)
    rep.data["worst_excess"] = worst
    return rep


def sample_feasible(gram: GramForm, A, rng: np.random.Generator, count: int, gamma=None) -> list[np.ndarray]:
    """Measures with potential at least 1 on ``A``.

    Mixes the equilibrium measure plus nonnegative perturbations with random
    measures rescaled just enough to become feasible.
    """
    Am = as_mask(A, gram.n)
    if gamma is None:
        gamma = capacity_dual(gram, Am).gamma
    gamma = gamma.weights if isinstance(gamma, DiscreteMeasure) else np.asarray(gamma, dtype=float)
    out = []
    for k in range(count):
        if k % 2 == 0:
            nu = gamma + rng.exponential(size=gram.n) * (rng.random(gram.n) < 0.5) * rng.uniform(0, 1)
        else:
            nu = rng.exponential(size=gram.n) * (rng.random(gram.n) < 0.6)
            if not nu.any():
                nu[rng.integers(gram.n)] = 1.0
            p = gram.matrix @ nu
            low = float(np.min(p[Am.array]))
            if low <= 0:
                # gamma has potential >= 1 on A, so this lifts every node above zero
                nu = nu + (1.0 - low) * gamma
                p = gram.matrix @ nu
                low = float(np.min(p[Am.array]))
            nu = nu / low
        out.append(nu)
    return out


def mass_positivity_check(gram: GramForm, pairs: Iterable, tol: float = 1e-9) -> Report:
    """Pointwise-dominated potentials have ordered total masses."""
    rep = Report("positivity_of_mass")
    met = skipped = 0
    worst = -math.inf
    for k, (mu, nu) in enumerate(pairs):
        wm = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, dtype=float)
        wn = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, dtype=float)
        if np.any(gram.matrix @ wm > gram.matrix @ wn + tol):
            skipped += 1
            continue
        met += 1
        excess = float(wm.sum() - wn.sum())
        worst = max(worst, excess)
        if excess > tol:
            rep.add(f"pair_{k}", False, excess, tol)
    rep.add("mass_ordered", all(c.passed for c in rep.checks), worst if met else 0.0, tol,
            f"{met} pairs met the premise, {skipped} skipped")
    rep.data.update(premise_met=met, skipped=skipped, worst_excess=worst)
    return rep


def sample_positivity_pairs(gram: GramForm, rng: np.random.Generator, count: int) -> list[tuple]:
    """Pairs ``(t * nu|_S, nu)`` with the largest ``t`` keeping the potentials ordered."""
    pairs = []
    n = gram.n
    while len(pairs) < count:
        nu = rng.exponential(size=n) * (rng.random(n) < 0.7)
        if not nu.any():
            continue
        keep = rng.random(n) < 0.5
        part = np.where(keep, nu, 0.0)
        if not part.any():
            continue
        pp, pn = gram.matrix @ part, gram.matrix @ nu
        pos = pp > 0
        t = float(np.min(pn[pos] / pp[pos]))
        pairs.append((t * part, nu))
    return pairs


def verify_characterizations(gram: GramForm, A, principles: Principles | None = None, tol: float = 1e-7,
                             identity_tol: float = 1e-8) -> Report:
    """Cross-check all characterizations of the capacity and equilibrium measure.

    Runs the five formulations, requires equal capacities and equal
    optimizers within ``tol``, checks ``mass >= energy >= capacity`` and that
    the equilibrium potential equals 1 on ``A``. Every sub-result is itemized.
    """
    Am = as_mask(A, gram.n)
    if principles is None:
        principles = certify(gram)
    rep = Report("characterizations")
    rep.data["frostman"] = principles.frostman.to_json()
    rep.data["domination"] = principles.domination.to_json()
    results = {
        "primal": capacity_primal(gram, Am),
        "dual": capacity_dual(gram, Am),
        "obstacle": capacity_obstacle(gram, Am, frostman=principles.frostman.passed, check_tol=tol,
                                      identity_tol=identity_tol),
    }
    mm = capacity_min_mass(gram, Am, principles)
    if mm.status == "skipped":
        rep.skip("min_mass", mm.info.get("reason", ""))
    else:
        results["min_mass"] = lp_result(gram, Am, mm, "min_mass")
    results["mass_max"] = lp_result(gram, Am, capacity_mass_max(gram, Am), "mass_max")
    ref = results["dual"]
    for name, r in results.items():
        rep.add(f"{name}.converged", r.converged, None, None, "" if r.report is None else r.report.status)
        dc = abs(r.capacity - ref.capacity)
        rep.add(f"{name}.capacity", dc <= tol, dc, tol, f"c={r.capacity:.12g}")
        dg = float(np.max(np.abs(r.gamma.weights - ref.gamma.weights), initial=0.0))
        rep.add(f"{name}.gamma", dg <= tol, dg, tol)
    g = ref.gamma.weights
    mass, en = float(g.sum()), float(g @ gram.matrix @ g)
    rep.add("g_value", abs(ref.diagnostics["g_value"] - ref.capacity) <= tol,
            abs(ref.diagnostics["g_value"] - ref.capacity), tol)
    rep.add("mass_ge_energy", mass >= en - identity_tol, en - mass, identity_tol)
    rep.add("energy_ge_capacity", en >= ref.capacity - identity_tol, ref.capacity - en, identity_tol)
    pot = gram.matrix @ g
    dev = float(np.max(np.abs(pot[Am.array] - 1.0), initial=0.0))
    if principles.frostman.passed:
        rep.add("potential_eq_1_on_A", dev <= tol, dev, tol)
    else:
        rep.skip("potential_eq_1_on_A", "first maximum principle not certified")
    rep.extend(results["obstacle"].checks, "obstacle")
    if "min_mass" in results and "report" in mm.info:
        rep.extend(mm.info["report"], "min_mass")
    rep.data["capacity"] = ref.capacity
    return rep
