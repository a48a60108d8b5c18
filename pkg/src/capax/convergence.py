"""Capacities, equilibrium measures and potentials along monotone set families."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .balayage import sweep_projection
from .capacity import EquilibriumResult, capacity_dual
from .geometry import Exhaustion, SubsetMask, as_mask
from .kernels import GramForm, Principles, certify, check_frostman
from .report import Report

CSV_FIELDS = ("stage", "size", "capacity", "mass", "energy", "distance_to_limit", "max_potential_violation")


@dataclass
class StageRow:
    stage: int
    size: int
    capacity: float
    mass: float
    energy: float
    distance_to_limit: float
    max_potential_violation: float

    def as_tuple(self):
        return tuple(getattr(self, f) for f in CSV_FIELDS)


@dataclass
class ConvergenceReport:
    mode: str
    rows: list[StageRow]
    report: Report
    limit: EquilibriumResult
    results: list[EquilibriumResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.report.passed

    @property
    def capacities(self) -> list[float]:
        return [r.capacity for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_FIELDS)
            for row in self.rows:
                w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row.as_tuple()])

    def to_json(self):
        return {
            "mode": self.mode,
            "passed": self.passed,
            "stages": [dict(zip(CSV_FIELDS, r.as_tuple())) for r in self.rows],
            "report": self.report.to_dict(),
        }


def _stages(family, n) -> list[SubsetMask]:
    seq = family.stages if isinstance(family, Exhaustion) else family
    return [as_mask(s, n) for s in seq]


def _energy_dist2(gram, a, b):
    d = a - b
    return float(d @ gram.matrix @ d)


def _principles(gram, principles):
    return certify(gram) if principles is None else principles


def _run(gram: GramForm, stages: list[SubsetMask], limit_mask: SubsetMask, mode: str,
         principles: Principles | None, tol: float) -> ConvergenceReport:
    principles = _principles(gram, principles)
    limit = capacity_dual(gram, limit_mask)
    gl = limit.gamma.weights
    pl = gram.matrix @ gl
    results = [capacity_dual(gram, s) for s in stages]
    rows = []
    sign = 1.0 if mode == "increasing" else -1.0
    for j, (s, r) in enumerate(zip(stages, results)):
        g = r.gamma.weights
        p = gram.matrix @ g
        rows.append(StageRow(j, len(s), r.capacity, r.mass, r.energy,
                             math.sqrt(max(_energy_dist2(gram, g, gl), 0.0)),
                             float(np.max(sign * (p - pl), initial=0.0))))
    rep = Report(f"convergence[{mode}]")
    caps = [r.capacity for r in rows]
    steps = np.diff(caps) * sign
    worst = float(np.max(-steps, initial=0.0))
    rep.add("capacity_monotone", worst <= tol, worst, tol)
    gap = abs(caps[-1] - limit.capacity)
    rep.add("capacity_limit", gap <= tol, gap, tol)
    d2 = [_energy_dist2(gram, r.gamma.weights, gl) for r in results]
    rise = float(np.max(np.diff(d2), initial=0.0))
    rep.add("distance_nonincreasing", rise <= tol, rise, tol)
    rep.add("distance_limit", d2[-1] <= tol, d2[-1], tol)
    if principles.both:
        pots = np.array([gram.matrix @ r.gamma.weights for r in results])
        worst_step = float(np.max(-np.diff(pots, axis=0) * sign, initial=0.0))
        rep.add("potential_monotone", worst_step <= tol, worst_step, tol)
        worst_bound = float(np.max([row.max_potential_violation for row in rows], initial=0.0))
        rep.add("potential_bounded_by_limit", worst_bound <= tol, worst_bound, tol)
    else:
        rep.skip("potential_monotone", "maximum principles not certified")
        rep.skip("potential_bounded_by_limit", "maximum principles not certified")
    return ConvergenceReport(mode, rows, rep, limit, results)


def run_increasing(gram: GramForm, exhaustion, principles: Principles | None = None,
                   tol: float = 1e-7) -> ConvergenceReport:
    """Solve each stage of an increasing family and compare with its union.

    Checks nondecreasing capacities converging to the capacity of the union,
    equilibrium measures approaching the limit in energy norm and, with both
    maximum principles, potentials increasing to the limit potential.
    """
    stages = _stages(exhaustion, gram.n)
    for a, b in zip(stages, stages[1:]):
        if not a <= b:
            raise ValueError("stages must be nested increasingly")
    target = exhaustion.union_mask if isinstance(exhaustion, Exhaustion) else stages[-1]
    return _run(gram, stages, as_mask(target, gram.n), "increasing", principles, tol)


def run_decreasing(gram: GramForm, stages: Sequence, principles: Principles | None = None,
                   tol: float = 1e-7) -> ConvergenceReport:
    """Solve each stage of a decreasing family and compare with the intersection."""
    masks = _stages(stages, gram.n)
    for a, b in zip(masks, masks[1:]):
        if not b <= a:
            raise ValueError("stages must be nested decreasingly")
    inter = masks[0]
    for m in masks[1:]:
        inter = inter & m
    return _run(gram, masks, inter, "decreasing", principles, tol)


def run_balayage_increasing(gram: GramForm, mu, exhaustion, principles: Principles | None = None,
                            tol: float = 1e-7) -> Report:
    """Sweep ``mu`` onto each stage of an increasing family.

    Checks energy-norm distances to the sweep onto the union decreasing to
    zero and, with the domination principle, potentials increasing.
    """
    principles = _principles(gram, principles)
    stages = _stages(exhaustion, gram.n)
    target = exhaustion.union_mask if isinstance(exhaustion, Exhaustion) else stages[-1]
    limit = sweep_projection(gram, mu, target).swept.weights
    swept = [sweep_projection(gram, mu, s).swept.weights for s in stages]
    rep = Report("balayage_exhaustion")
    d2 = [_energy_dist2(gram, s, limit) for s in swept]
    rise = float(np.max(np.diff(d2), initial=0.0))
    rep.add("distance_nonincreasing", rise <= tol, rise, tol)
    rep.add("distance_limit", d2[-1] <= tol, d2[-1], tol)
    if principles.domination.passed:
        pots = np.array([gram.matrix @ s for s in swept])
        drop = float(np.max(-np.diff(pots, axis=0), initial=0.0))
        rep.add("potential_nondecreasing", drop <= tol, drop, tol)
    else:
        rep.skip("potential_nondecreasing", "domination principle not certified")
    rep.data["distances"] = [math.sqrt(max(v, 0.0)) for v in d2]
    return rep


def energy_gap_check(gram: GramForm, A, H, frostman: bool | None = None, tol: float = 1e-8) -> Report:
    """``|gamma_A - gamma_H|^2 <= |gamma_A|^2 - |gamma_H|^2`` for ``H`` inside ``A``;
    equality is asserted when the first maximum principle holds."""
    Am, Hm = as_mask(A, gram.n), as_mask(H, gram.n)
    if not Hm <= Am:
        raise ValueError("H must be contained in A")
    if frostman is None:
        frostman = check_frostman(gram).passed
    gA = capacity_dual(gram, Am).gamma.weights
    gH = capacity_dual(gram, Hm).gamma.weights
    lhs = _energy_dist2(gram, gA, gH)
    rhs = float(gA @ gram.matrix @ gA - gH @ gram.matrix @ gH)
    rep = Report("energy_gap")
    rep.add("inequality", lhs <= rhs + tol, lhs - rhs, tol, f"lhs={lhs:.12g} rhs={rhs:.12g}")
    if frostman:
        rep.add("equality", abs(lhs - rhs) <= tol, abs(lhs - rhs), tol, f"lhs={lhs:.12g} rhs={rhs:.12g}")
    else:
        rep.skip("equality", "first maximum principle not certified")
    rep.data.update(lhs=lhs, rhs=rhs)
    return rep


def potential_monotonicity_check(gram: GramForm, A, H, principles: Principles | None = None,
                                 tol: float = 1e-7) -> Report:
    """``K gamma_H <= K gamma_A`` at every node for ``H`` inside ``A``."""
    Am, Hm = as_mask(A, gram.n), as_mask(H, gram.n)
    if not Hm <= Am:
        raise ValueError("H must be contained in A")
    principles = _principles(gram, principles)
    rep = Report("potential_monotonicity")
    if not principles.both:
        rep.skip("dominated", "maximum principles not certified")
        return rep
    pA = gram.matrix @ capacity_dual(gram, Am).gamma.weights
    pH = gram.matrix @ capacity_dual(gram, Hm).gamma.weights
    excess = pH - pA
    j = int(np.argmax(excess)) if excess.size else 0
    worst = float(excess.max()) if excess.size else 0.0
    rep.add("dominated", worst <= tol, worst, tol, f"worst node {j}")
    return rep
