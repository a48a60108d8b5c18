import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from capax.balayage import (
    FORMULATIONS,
    equilibrium_balayage_consistency,
    sweep,
    sweep_constrained,
    sweep_potential_eq,
    sweep_projection,
    verify_balayage,
)
from capax.kernels import certify
from capax.measures import DiscreteMeasure, energy
from support import certified, random_subset

seeds = st.integers(0, 10_000)
sizes = st.integers(2, 8)


def instance(n, seed):
    ck = certified(n, seed)
    rng = np.random.default_rng(seed)
    A = random_subset(rng, n)
    mu = rng.exponential(size=n) * (rng.random(n) < 0.7)
    mu[rng.integers(n)] += 1.0
    return ck, A, DiscreteMeasure(mu, ck.gram.node_set_id)


class TestExamples:
    def test_projection(self, gram2):
        assert_allclose(sweep_projection(gram2, [1.0, 0.0], [1]).swept.weights, [0.0, 0.5], atol=1e-12)
        assert_allclose(sweep_projection(gram2, [1 / 3, 1 / 3], [0]).swept.weights, [0.5, 0.0], atol=1e-12)

    def test_constrained(self, gram2):
        res = sweep_constrained(gram2, [1.0, 0.0], [1])
        assert_allclose(res.swept.weights, [0.0, 0.5], atol=1e-12)
        assert energy(gram2, res.swept) == pytest.approx(0.5, abs=1e-12)
        assert res.diagnostics["mass_off_A"] == 0.0

    def test_potential_equation(self, gram2):
        assert_allclose(sweep_potential_eq(gram2, [1.0, 0.0], [1]).swept.weights, [0.0, 0.5], atol=1e-12)

    @pytest.mark.parametrize("form", FORMULATIONS)
    def test_measure_on_target_is_fixed(self, gram2, form):
        assert_allclose(sweep(gram2, [0.3, 0.7], [0, 1], form).swept.weights, [0.3, 0.7], atol=1e-10)
        assert_allclose(sweep(gram2, [0.3, 0.0], [0], form).swept.weights, [0.3, 0.0], atol=1e-10)

    def test_verify_hand_case(self, gram2):
        mu = DiscreteMeasure([1.0, 0.0])
        res = sweep_projection(gram2, mu, [1])
        rep = verify_balayage(gram2, mu, [1], res)
        assert rep.passed, rep.failures
        assert not any(c.skipped for c in rep.checks)
        assert rep["mass_not_increased"].value == pytest.approx(-0.5, abs=1e-12)

    def test_verify_on_target(self, gram2):
        mu = DiscreteMeasure([0.2, 0.4])
        rep = verify_balayage(gram2, mu, [0, 1], sweep_projection(gram2, mu, [0, 1]))
        assert rep.passed
        assert "min-mass non-unique" not in rep.flags

    def test_min_mass_non_unique_flag(self, mass_preserving):
        # no killing off {0, 1}: sweeping keeps all the mass
        principles = certify(mass_preserving)
        assert principles.both
        for w in ([0, 0, 1.0, 0], [0, 0, 0.3, 1.2]):
            mu = DiscreteMeasure(w)
            res = sweep_projection(mass_preserving, mu, [0, 1])
            assert res.diagnostics["mass_ratio"] == pytest.approx(1.0, abs=1e-12)
            rep = verify_balayage(mass_preserving, mu, [0, 1], res, principles)
            assert rep.passed
            assert "min-mass non-unique" in rep.flags

    def test_mass_preserving_sweep_value(self, mass_preserving):
        res = sweep_projection(mass_preserving, [0, 0, 1.0, 0], [0, 1])
        assert_allclose(res.swept.weights, [0.5, 0.5, 0, 0], atol=1e-12)

    def test_consistency_hand_case(self, gram2):
        rep = equilibrium_balayage_consistency(gram2, [0], [0, 1])
        assert rep.passed
        assert_allclose(rep.data["swept"], [0.5, 0.0], atol=1e-12)
        assert equilibrium_balayage_consistency(gram2, [0, 1], [0, 1]).passed

    def test_consistency_needs_nesting(self, gram2):
        with pytest.raises(ValueError):
            equilibrium_balayage_consistency(gram2, [0, 1], [0])

    def test_unknown_formulation(self, gram2):
        with pytest.raises(ValueError):
            sweep(gram2, [1.0, 0.0], [1], "nope")


class TestProperties:
    @given(sizes, seeds)
    def test_formulations_agree(self, n, seed):
        ck, A, mu = instance(n, seed)
        ref = sweep_projection(ck.gram, mu, A).swept.weights
        for form in FORMULATIONS[1:]:
            assert_allclose(sweep(ck.gram, mu, A, form).swept.weights, ref, atol=1e-7)

    @given(sizes, seeds)
    def test_verification_passes(self, n, seed):
        ck, A, mu = instance(n, seed)
        for form in FORMULATIONS:
            rep = verify_balayage(ck.gram, mu, A, sweep(ck.gram, mu, A, form), ck.principles, seed=seed)
            assert rep.passed, (form, rep.failures)

    @given(sizes, seeds)
    def test_idempotent(self, n, seed):
        ck, A, mu = instance(n, seed)
        once = sweep_projection(ck.gram, mu, A).swept
        twice = sweep_projection(ck.gram, once, A).swept
        assert_allclose(twice.weights, once.weights, atol=1e-9)

    @given(sizes, seeds)
    def test_energy_contraction(self, n, seed):
        # the projection onto a convex cone through the origin is 1-Lipschitz
        ck, A, mu = instance(n, seed)
        _, _, nu = instance(n, seed + 1)
        nu = DiscreteMeasure(nu.weights, ck.gram.node_set_id)
        a = sweep_projection(ck.gram, mu, A).swept.weights
        b = sweep_projection(ck.gram, nu, A).swept.weights
        d = a - b
        e = mu.weights - nu.weights
        assert d @ ck.gram.matrix @ d <= e @ ck.gram.matrix @ e + 1e-10

    @given(sizes, seeds, st.floats(0.01, 100))
    def test_positively_homogeneous(self, n, seed, t):
        ck, A, mu = instance(n, seed)
        a = sweep_projection(ck.gram, mu, A).swept.weights
        b = sweep_projection(ck.gram, mu.scaled(t), A).swept.weights
        assert_allclose(b, t * a, atol=1e-8 * max(1.0, t))

    @given(sizes, seeds)
    def test_iterated_sweep(self, n, seed):
        # sweeping onto B and then onto A inside B equals sweeping onto A
        ck, B, mu = instance(n, seed)
        rng = np.random.default_rng(seed + 7)
        A = B[rng.random(B.size) < 0.6]
        direct = sweep_projection(ck.gram, mu, A).swept.weights
        via = sweep_projection(ck.gram, sweep_projection(ck.gram, mu, B).swept, A).swept.weights
        assert_allclose(via, direct, atol=1e-7)

    @given(sizes, seeds)
    def test_consistency(self, n, seed):
        ck = certified(n, seed)
        rng = np.random.default_rng(seed)
        Q = random_subset(rng, n)
        A = Q[rng.random(Q.size) < 0.6]
        assert equilibrium_balayage_consistency(ck.gram, A, Q).passed
