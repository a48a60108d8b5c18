import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from capax.capacity import (
    FORMULATIONS,
    capacity_dual,
    capacity_mass_max,
    capacity_min_mass,
    capacity_obstacle,
    capacity_primal,
    compute_capacity,
    mass_positivity_check,
    min_potential_check,
    sample_feasible,
    sample_positivity_pairs,
    verify_characterizations,
)
from capax.kernels import GramForm, certify
from capax.oracle import exact_equilibrium
from support import certified, random_subset

seeds = st.integers(0, 10_000)
sizes = st.integers(2, 8)


class TestExamples:
    def test_primal(self, gram2):
        res = capacity_primal(gram2, [0, 1])
        assert res.robin == pytest.approx(1.5, abs=1e-12)
        assert res.capacity == pytest.approx(2 / 3, abs=1e-12)
        assert_allclose(res.lam.weights, [0.5, 0.5], atol=1e-12)
        assert_allclose(res.gamma.weights, [1 / 3, 1 / 3], atol=1e-12)
        assert_allclose(res.xi.weights, res.lam.weights, atol=0)

    def test_primal_single_node(self, gram2):
        res = capacity_primal(gram2, [0])
        assert res.robin == 2.0 and res.capacity == 0.5
        assert_allclose(res.gamma.weights, [0.5, 0.0], atol=0)

    def test_dual(self, gram2):
        res = capacity_dual(gram2, [0, 1])
        assert res.diagnostics["optimum"] == pytest.approx(2 / 3, abs=1e-12)
        assert_allclose(res.gamma.weights, [1 / 3, 1 / 3], atol=1e-12)
        one = capacity_dual(GramForm.from_matrix([[2.0]]), [0])
        assert one.capacity == pytest.approx(0.5, abs=1e-15)
        assert_allclose(one.gamma.weights, [0.5], atol=1e-15)

    def test_dual_level(self, gram2):
        res = capacity_dual(gram2, [0, 1], level=3.0)
        assert res.diagnostics["optimum"] == pytest.approx(9 * 2 / 3, rel=1e-12)
        assert_allclose(res.diagnostics["scaled_gamma"], [1.0, 1.0], atol=1e-12)
        assert res.capacity == pytest.approx(2 / 3, rel=1e-12)

    def test_obstacle(self, gram2):
        res = capacity_obstacle(gram2, [0, 1])
        assert_allclose(res.gamma.weights, [1 / 3, 1 / 3], atol=1e-12)
        assert res.energy == pytest.approx(2 / 3, abs=1e-12)
        res = capacity_obstacle(gram2, [0])
        assert_allclose(res.gamma.weights, [0.5, 0.0], atol=1e-12)
        assert res.checks.passed

    def test_min_mass(self, gram2):
        rep = capacity_min_mass(gram2, [0, 1])
        assert rep.objective == pytest.approx(2 / 3, abs=1e-12)
        assert_allclose(rep.x, [1 / 3, 1 / 3], atol=1e-12)
        assert rep.info["report"].passed
        one = capacity_min_mass(GramForm.from_matrix([[2.0]]), [0])
        assert one.objective == pytest.approx(0.5, abs=1e-15)

    def test_min_mass_needs_principles(self):
        g = GramForm.from_matrix([[1, 0.6, 0], [0.6, 1, 0.6], [0, 0.6, 1]])
        assert capacity_min_mass(g, [0, 2]).status == "skipped"

    def test_mass_max(self, gram2):
        rep = capacity_mass_max(gram2, [0, 1])
        assert rep.objective == pytest.approx(2 / 3, abs=1e-12)

    def test_empty_target(self, gram2):
        for form in FORMULATIONS:
            res = compute_capacity(gram2, [], form)
            assert res.capacity == 0.0 and res.mass == 0.0

    def test_unknown_formulation(self, gram2):
        with pytest.raises(ValueError):
            compute_capacity(gram2, [0], "nope")

    def test_json_keys(self, gram2):
        payload = capacity_dual(gram2, [0, 1]).to_json()
        assert {"capacity", "robin", "mass", "energy", "potential_min_on_A", "formulation", "status"} <= set(payload)

    def test_characterizations_two_by_two(self, gram2):
        rep = verify_characterizations(gram2, [0, 1])
        assert rep.passed, rep.failures
        assert rep.data["capacity"] == pytest.approx(2 / 3, abs=1e-12)
        assert not any(c.skipped for c in rep.checks)

    def test_characterizations_single_node(self):
        rep = verify_characterizations(GramForm.from_matrix([[2.0]]), [0])
        assert rep.passed
        assert rep.data["capacity"] == pytest.approx(0.5, abs=1e-15)

    def test_min_potential_examples(self, gram2):
        gamma = capacity_dual(gram2, [0, 1]).gamma
        assert min_potential_check(gram2, [0, 1], [np.array([1.0, 1.0])]).passed
        assert min_potential_check(gram2, [0, 1], [gamma]).passed
        rep = min_potential_check(gram2, [0, 1], [np.array([0.1, 0.0])])
        assert rep["candidate_0"].skipped

    def test_mass_positivity_examples(self, gram2):
        rep = mass_positivity_check(gram2, [(np.array([0.5, 0.0]), np.array([1 / 3, 1 / 3]))])
        assert rep.passed and rep.data["premise_met"] == 1
        rep = mass_positivity_check(gram2, [(np.array([0.2, 0.3]), np.array([0.2, 0.3]))])
        assert rep.passed

    def test_obstacle_flags_missing_frostman(self):
        g = GramForm.from_matrix([[1, 0.6, 0], [0.6, 1, 0.6], [0, 0.6, 1]])
        res = capacity_obstacle(g, [0, 2])
        assert res.checks["potential_eq_1_on_A"].skipped
        assert res.checks.passed


class TestProperties:
    @given(sizes, seeds)
    def test_agrees_with_exact_oracle(self, n, seed):
        ck = certified(n, seed)
        A = random_subset(np.random.default_rng(seed), n)
        ref = exact_equilibrium(ck.gram, A)
        for form in FORMULATIONS:
            res = compute_capacity(ck.gram, A, form)
            assert res.capacity == pytest.approx(ref.capacity, abs=1e-7)
            assert_allclose(res.gamma.weights, ref.gamma.weights, atol=1e-7)

    @given(sizes, seeds)
    def test_monotone_in_the_set(self, n, seed):
        g = certified(n, seed).gram
        rng = np.random.default_rng(seed)
        B = random_subset(rng, n)
        A = B[rng.random(B.size) < 0.5]
        assert capacity_dual(g, A).capacity <= capacity_dual(g, B).capacity + 1e-10

    @given(sizes, seeds)
    def test_subadditive(self, n, seed):
        g = certified(n, seed).gram
        rng = np.random.default_rng(seed)
        A, B = random_subset(rng, n), random_subset(rng, n)
        union = np.union1d(A, B)
        assert capacity_dual(g, union).capacity <= capacity_dual(g, A).capacity + capacity_dual(g, B).capacity + 1e-10

    @given(sizes, seeds, st.floats(0.01, 100))
    def test_scale_covariance(self, n, seed, t):
        g = certified(n, seed).gram
        A = random_subset(np.random.default_rng(seed), n)
        scaled = GramForm.from_matrix(t * g.matrix)
        assert capacity_dual(scaled, A).capacity == pytest.approx(capacity_dual(g, A).capacity / t, rel=1e-8)

    @given(sizes, seeds)
    def test_equilibrium_identities(self, n, seed):
        g = certified(n, seed).gram
        A = random_subset(np.random.default_rng(seed), n)
        res = capacity_obstacle(g, A, frostman=True)
        assert res.checks.passed, res.checks.failures
        pot = g.matrix @ res.gamma.weights
        assert np.all(pot <= 1 + 1e-7)
        assert_allclose(pot[A], 1.0, atol=1e-7)

    @given(sizes, seeds)
    def test_capacity_bounds(self, n, seed):
        # c(A) is at least the capacity of any single node and at most
        # the mass of any measure whose potential reaches 1 on A
        g = certified(n, seed).gram
        A = random_subset(np.random.default_rng(seed), n)
        c = capacity_dual(g, A).capacity
        assert c >= max(1.0 / g.matrix[i, i] for i in A) - 1e-12
        for nu in sample_feasible(g, A, np.random.default_rng(seed), 10):
            assert c <= nu.sum() + 1e-9

    @given(sizes, seeds)
    def test_min_potential_sampling(self, n, seed):
        g = certified(n, seed).gram
        A = random_subset(np.random.default_rng(seed), n)
        cands = sample_feasible(g, A, np.random.default_rng(seed + 1), 30)
        assert min_potential_check(g, A, cands).passed

    @given(sizes, seeds)
    def test_positivity_of_mass(self, n, seed):
        g = certified(n, seed).gram
        pairs = sample_positivity_pairs(g, np.random.default_rng(seed), 20)
        rep = mass_positivity_check(g, pairs)
        assert rep.passed and rep.data["premise_met"] == 20

    @given(sizes, seeds)
    def test_characterizations(self, n, seed):
        ck = certified(n, seed)
        A = random_subset(np.random.default_rng(seed), n)
        rep = verify_characterizations(ck.gram, A, ck.principles)
        assert rep.passed, rep.failures


def test_principles_gate_is_reported():
    g = GramForm.from_matrix([[1, 0.6, 0], [0.6, 1, 0.6], [0, 0.6, 1]])
    rep = verify_characterizations(g, [0, 2], certify(g))
    assert rep["min_mass"].skipped
    assert rep["potential_eq_1_on_A"].skipped
