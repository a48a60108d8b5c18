"""Exit criteria. Each test prints one PASS/FAIL line with its key numbers."""
import time

import numpy as np
import pytest

from capax.balayage import FORMULATIONS as SWEEPS
from capax.balayage import equilibrium_balayage_consistency, sweep, verify_balayage
from capax.capacity import FORMULATIONS, compute_capacity, equilibrium_checks, mass_positivity_check
from capax.capacity import sample_positivity_pairs
from capax.convergence import energy_gap_check, potential_monotonicity_check, run_decreasing, run_increasing
from capax.geometry import Ball, Sphere, build_exhaustion, discretize
from capax.kernels import GramForm, NewtonianKernel, assemble_gram
from capax.measures import DiscreteMeasure
from capax.oracle import exact_equilibrium
from capax.qp import QpProblem, brute_force_lp, brute_force_oracle, solve_lcp, solve_lp, solve_qp
from support import certified, random_subset

pytestmark = pytest.mark.acceptance

GRAM2 = [[2.0, 1.0], [1.0, 2.0]]


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def instances(count, base, max_n=8):
    rng = np.random.default_rng(base)
    for i in range(count):
        n = int(rng.integers(2, max_n + 1))
        yield i, certified(n, base + i), np.random.default_rng(base + i)


def sphere_capacity(n):
    t0 = time.perf_counter()
    nodes = discretize(Sphere((0.0, 0.0, 0.0), 1.0), n)
    gram = assemble_gram(NewtonianKernel(3), nodes)
    res = compute_capacity(gram, nodes.full_mask, "dual")
    return res, time.perf_counter() - t0


def test_1_newtonian_sphere(capsys):
    coarse, t_coarse = sphere_capacity(400)
    fine, t_fine = sphere_capacity(1600)
    err_coarse, err_fine = abs(coarse.capacity - 1.0), abs(fine.capacity - 1.0)
    ok = (coarse.converged and fine.converged and err_coarse <= 0.05 and err_fine < err_coarse
          and max(t_coarse, t_fine) < 30.0)
    verdict(capsys, 1, ok, f"c(N=400)={coarse.capacity:.6f} err {err_coarse:.2e} ({t_coarse:.1f}s); "
                           f"c(N=1600)={fine.capacity:.6f} err {err_fine:.2e} ({t_fine:.1f}s)")


def test_2_support_on_outer_shell(capsys):
    nodes = discretize(Ball((0.0, 0.0, 0.0), 1.0), 4)
    gram = assemble_gram(NewtonianKernel(3), nodes)
    res = compute_capacity(gram, nodes.full_mask, "obstacle", frostman=False)
    outer = res.gamma.weights[nodes.mask("boundary").array].sum()
    frac = outer / res.mass
    ok = res.converged and frac >= 0.95
    verdict(capsys, 2, ok, f"{len(nodes)} nodes, c={res.capacity:.6f}, outer-shell mass fraction {frac:.6f}")


def test_3_formulation_agreement(capsys):
    t0 = time.perf_counter()
    worst_c = worst_g = 0.0
    unconverged = 0
    for _, ck, rng in instances(200, 30_000):
        A = random_subset(rng, ck.gram.n)
        ref = exact_equilibrium(ck.gram, A)
        for form in FORMULATIONS:
            kw = {"principles": ck.principles} if form == "min_mass" else {}
            if form == "obstacle":
                kw = {"frostman": True}
            res = compute_capacity(ck.gram, A, form, **kw)
            unconverged += not res.converged
            worst_c = max(worst_c, abs(res.capacity - ref.capacity))
            worst_g = max(worst_g, float(np.max(np.abs(res.gamma.weights - ref.gamma.weights))))
    elapsed = time.perf_counter() - t0
    ok = worst_c <= 1e-7 and worst_g <= 1e-7 and unconverged == 0 and elapsed < 60
    verdict(capsys, 3, ok, f"200 instances x 5 formulations: max |dc| {worst_c:.2e}, max |dgamma| {worst_g:.2e}, "
                           f"{unconverged} unconverged, {elapsed:.1f}s")


def test_4_equilibrium_identities(capsys):
    failures = []
    worst_pr1 = 0.0
    for i, ck, rng in instances(200, 30_000):
        A = random_subset(rng, ck.gram.n)
        ref = exact_equilibrium(ck.gram, A)
        rep = equilibrium_checks(ck.gram, A, ref, frostman=True, tol=1e-7, identity_tol=1e-8)
        worst_pr1 = max(worst_pr1, rep["mass_energy"].value)
        if not rep.passed or any(c.skipped for c in rep.checks):
            failures.append((i, [c.name for c in rep.failures]))
    verdict(capsys, 4, not failures, f"200 exact instances, max |mass - energy| {worst_pr1:.2e}, "
                                     f"failures {failures[:3]}")


def test_5_balayage_equivalence(capsys):
    hand = [sweep(GramForm.from_matrix(GRAM2), [1.0, 0.0], [1], f).swept.weights for f in SWEEPS]
    hand_ok = all(np.array_equal(w, [0.0, 0.5]) for w in hand)
    worst = 0.0
    failures = []
    for i, ck, rng in instances(200, 40_000):
        n = ck.gram.n
        A = random_subset(rng, n)
        mu = rng.exponential(size=n) * (rng.random(n) < 0.7)
        mu[rng.integers(n)] += 1.0
        mu = DiscreteMeasure(mu, ck.gram.node_set_id)
        results = [sweep(ck.gram, mu, A, f) for f in SWEEPS]
        ref = results[0].swept.weights
        for r in results:
            worst = max(worst, float(np.max(np.abs(r.swept.weights - ref))))
            rep = verify_balayage(ck.gram, mu, A, r, ck.principles, seed=i)
            if not r.converged or not rep.passed or any(c.skipped for c in rep.checks):
                failures.append((i, r.formulation, [c.name for c in rep.failures]))
    ok = hand_ok and worst <= 1e-7 and not failures
    verdict(capsys, 5, ok, f"hand case {'exact' if hand_ok else [w.tolist() for w in hand]}; "
                           f"max discrepancy {worst:.2e}; failures {failures[:3]}")


def test_6_equilibrium_balayage_consistency(capsys):
    hand = equilibrium_balayage_consistency(GramForm.from_matrix(GRAM2), [0], [0, 1])
    hand_ok = hand.passed and np.allclose(hand.data["swept"], [0.5, 0.0], rtol=0, atol=1e-12)
    worst = 0.0
    failed = 0
    for _, ck, rng in instances(100, 50_000):
        Q = random_subset(rng, ck.gram.n)
        A = Q[rng.random(Q.size) < 0.6]
        rep = equilibrium_balayage_consistency(ck.gram, A, Q)
        worst = max(worst, rep["swept_Q_equals_A"].value)
        failed += not rep.passed
    ok = hand_ok and failed == 0
    verdict(capsys, 6, ok, f"hand case {hand.data['swept']}; 100 nested pairs, max deviation {worst:.2e}, "
                           f"{failed} failed")


def test_7_convergence_harnesses(capsys):
    failures = []
    worst_gap = worst_pot = 0.0
    for i, ck, rng in instances(100, 60_000):
        n = ck.gram.n
        A = random_subset(rng, n, min_size=2)
        stages = int(rng.integers(2, min(4, A.size) + 1))
        inc = run_increasing(ck.gram, build_exhaustion(n, A, stages), ck.principles)
        target = random_subset(rng, n)
        if target.size < n:
            dec = run_decreasing(ck.gram, build_exhaustion(n, target, min(3, n - target.size + 1),
                                                           "decreasing").stages, ck.principles)
        else:
            dec = run_decreasing(ck.gram, [target], ck.principles)
        H = A[rng.random(A.size) < 0.5]
        gap = energy_gap_check(ck.gram, A, H, frostman=True, tol=1e-8)
        pot = potential_monotonicity_check(ck.gram, A, H, ck.principles)
        worst_gap = max(worst_gap, abs(gap.data["lhs"] - gap.data["rhs"]))
        worst_pot = max(worst_pot, pot["dominated"].value)
        for name, rep in (("increasing", inc.report), ("decreasing", dec.report), ("energy_gap", gap),
                          ("potential", pot)):
            if not rep.passed or any(c.skipped for c in rep.checks):
                failures.append((i, name, [c.name for c in rep.failures]))
    ok = not failures
    verdict(capsys, 7, ok, f"100 instances; max energy-gap defect {worst_gap:.2e}; "
                           f"max potential excess {worst_pot:.2e}; failures {failures[:3]}")


def test_8_positivity_of_mass(capsys):
    met = 0
    worst = -np.inf
    failed = 0
    for i, ck, rng in instances(50, 70_000):
        rep = mass_positivity_check(ck.gram, sample_positivity_pairs(ck.gram, rng, 10), tol=1e-9)
        met += rep.data["premise_met"]
        worst = max(worst, rep.data["worst_excess"])
        failed += not rep.passed
    ok = met == 500 and failed == 0
    verdict(capsys, 8, ok, f"{met} premise-satisfying pairs, max mass(mu) - mass(nu) {worst:.2e}")


def _random_pd(rng, n):
    U, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return U @ np.diag(np.exp(rng.uniform(0, np.log(1e3), size=n))) @ U.T


def test_9_solver_soundness(capsys):
    rng = np.random.default_rng(90_000)
    worst = {}
    bad = {}
    for kind in ("nonneg", "simplex", "linear_ineq", "lcp", "lp"):
        worst[kind] = 0.0
        bad[kind] = 0
        for _ in range(500):
            n = int(rng.integers(1, 9))
            if kind == "lp":
                m = int(rng.integers(1, min(8, 16 - n) + 1))
                A = rng.uniform(-0.5, 1.5, size=(m, n))
                x0 = rng.exponential(size=n)
                b = A @ x0 - rng.exponential(size=m)
                c = rng.uniform(0.1, 2.0, size=n)
                got, ref = solve_lp(c, A, b), brute_force_lp(c, A, b)
            else:
                Q, q = _random_pd(rng, n), rng.normal(size=n)
                if kind == "linear_ineq":
                    m = int(rng.integers(1, min(8, 16 - n) + 1))
                    A = rng.normal(size=(m, n))
                    cv = A @ rng.exponential(size=n) - rng.exponential(size=m)
                    problem = QpProblem(Q, q, "linear_ineq", A, cv)
                else:
                    problem = QpProblem(Q, q, "nonneg" if kind == "lcp" else kind)
                ref = brute_force_oracle(problem)
                if kind == "lcp":
                    got = solve_lcp(Q, q)
                    got.objective = problem.objective(got.x)
                else:
                    got = solve_qp(problem)
            diff = abs(got.objective - ref.objective)
            worst[kind] = max(worst[kind], diff)
            bad[kind] += not (got.converged and ref.converged and diff <= 1e-8)
    ok = not any(bad.values())
    detail = ", ".join(f"{k}: max {worst[k]:.1e} ({bad[k]} bad)" for k in worst)
    verdict(capsys, 9, ok, f"500 per class; {detail}")
