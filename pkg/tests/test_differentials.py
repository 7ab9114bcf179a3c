"""
Differentials Tests
Description: Wasserstein gradients, the norm identity and convergence of envelope gradients
"""

import numpy as np
import pytest

from moreau_w2.core.differentials import (
    dirac_gradient_error,
    gradient_convergence_experiment,
    norm_identity_check,
    superdifferential_check,
    w2_gradient,
)
from moreau_w2.core.measures import EmpiricalCloud, lifted_norm, validate_cloud
from moreau_w2.core.ot_exact import w2_assignment
from moreau_w2.utils.errors import Degenerate

TIED_SOURCE = [5.0, 5.0, 0.0]
TIED_TARGET = [0.0, 6.0, 6.0]


def scaled_pair(seed, n=20, d=2):
    """Target is 2 x + (1, 0, ...), so the identity is the unique optimal matching"""
    x0 = EmpiricalCloud(points=np.random.default_rng(seed).standard_normal((n, d)))
    shift = np.zeros(d)
    shift[0] = 1.0
    return x0, EmpiricalCloud(points=2.0 * x0.points + shift)


def noisy_pair(seed, n=20, d=2):
    """Target is an expansion of the source plus independent noise"""
    rng = np.random.default_rng(seed)
    x0 = EmpiricalCloud(points=rng.standard_normal((n, d)))
    shift = np.zeros(d)
    shift[0] = 1.0
    return x0, EmpiricalCloud(points=2.0 * x0.points + shift + 0.3 * rng.standard_normal((n, d)))


def keeps_matching(x0, nu, field, step):
    """The optimal matching of x0 is still optimal after moving each atom by step (x - T x)"""
    moved = x0.points + step * (x0.points - nu.points[field.plan.permutation])
    plan = w2_assignment(EmpiricalCloud(points=moved), nu, tie_break=False)
    return np.array_equal(plan.permutation, field.plan.permutation)


class TestW2Gradient:
    """Gradient field 2 (x - T x)"""

    def test_two_point_example(self):
        """{0,1} to {2,5}: vectors (-4, -8)"""
        field = w2_gradient(validate_cloud([0.0, 1.0]), validate_cloud([2.0, 5.0]))
        assert np.allclose(field.vectors[:, 0], [-4.0, -8.0])
        assert field.assignment_gap == pytest.approx(3.0)
        assert not field.degenerate

    def test_dirac(self):
        """{0} to {3}: vector -6"""
        field = w2_gradient(validate_cloud([0.0]), validate_cloud([3.0]))
        assert field.vectors[0, 0] == pytest.approx(-6.0)
        assert not field.degenerate

    def test_tied_matching_is_flagged(self):
        """A tie in the optimal matching marks the field degenerate"""
        field = w2_gradient(validate_cloud(TIED_SOURCE), validate_cloud(TIED_TARGET))
        assert field.degenerate


class TestNormIdentity:
    """E|D W2^2|^2 = 4 W2^2"""

    def test_random_clouds(self):
        """Identity holds to rounding on seeded clouds"""
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = int(rng.integers(2, 30))
            mu = EmpiricalCloud(points=rng.standard_normal((n, 3)))
            nu = EmpiricalCloud(points=rng.standard_normal((n, 3)) + 1.0)
            _, _, rel_err = norm_identity_check(mu, nu)
            assert rel_err < 1e-10

    def test_degenerate_raises(self):
        """No gradient at a tied matching"""
        with pytest.raises(Degenerate):
            norm_identity_check(validate_cloud(TIED_SOURCE), validate_cloud(TIED_TARGET))


class TestSuperdifferential:
    """1-semi-concavity of W2^2(., nu)"""

    def test_remainder_bounded(self):
        """Remainder never exceeds E|H|^2"""
        rng = np.random.default_rng(9)
        mu = EmpiricalCloud(points=rng.standard_normal((12, 2)))
        nu = EmpiricalCloud(points=rng.standard_normal((12, 2)))
        for scale in (1e-3, 1e-1, 1.0, 5.0):
            result = superdifferential_check(mu, nu, scale * rng.standard_normal((12, 2)))
            assert result.holds
            assert result.remainder <= result.bound + 1e-12

    def test_zero_direction(self):
        """H = 0 gives a zero increment"""
        mu = validate_cloud([0.0, 1.0])
        result = superdifferential_check(mu, validate_cloud([2.0, 5.0]), np.zeros((2, 1)))
        assert result.increment == pytest.approx(0.0, abs=1e-15)
        assert result.bound == 0.0


class TestGradientConvergence:
    """grad U_delta(X_delta) -> grad U(X0)"""

    def test_dirac_closed_form(self):
        """With zero radius the error is 2|a - b| delta/(1 - delta)"""
        deltas = [0.5, 0.1, 0.01]
        rows = gradient_convergence_experiment(validate_cloud([0.0]), validate_cloud([3.0]), deltas, radius=0.0)
        assert [r.delta for r in rows] == sorted(deltas, reverse=True)
        for r in rows:
            assert r.error == pytest.approx(dirac_gradient_error(0.0, 3.0, r.delta), rel=0.05)
            assert r.radius == 0.0

    def test_dirac_formula(self):
        """{0} against {3}: 6 delta/(1 - delta)"""
        assert dirac_gradient_error(0.0, 3.0, 0.5) == pytest.approx(6.0)

    def test_error_shrinks(self):
        """Error at the smallest delta is within 5% of |grad U|"""
        x0, nu = scaled_pair(seed=3)
        rows = gradient_convergence_experiment(x0, nu, [0.25, 0.1, 0.01], seed=0)
        reference = lifted_norm(w2_gradient(x0, nu).vectors)
        assert rows[-1].error <= 0.05 * reference
        assert rows[-1].error < rows[0].error

    def test_generic_clouds(self):
        """Seeded generic clouds whose matching survives the smallest step end within 5% of |grad U|"""
        deltas = [0.2, 0.1, 0.05, 0.02, 0.01]
        kept = 0
        for seed in range(12):
            x0, nu = noisy_pair(seed)
            field = w2_gradient(x0, nu)
            if field.assignment_gap <= 1e-6 or not keeps_matching(x0, nu, field, 3.0 * 0.01 / 0.99):
                continue
            rows = gradient_convergence_experiment(x0, nu, deltas, seed=seed)
            assert [r.delta for r in rows] == deltas
            assert all(r.radius <= r.delta ** 2 and r.converged for r in rows)
            assert rows[-1].error < 0.05 * lifted_norm(field.vectors)
            assert rows[-1].below_error_tol
            kept += 1
        assert kept >= 3

    def test_error_tolerance_flag(self):
        """An explicit error tolerance is applied row by row"""
        rows = gradient_convergence_experiment(
            validate_cloud([0.0]), validate_cloud([3.0]), [0.5, 0.01], radius=0.0, error_tol=1.0
        )
        assert [r.below_error_tol for r in rows] == [False, True]

    def test_perturbations_are_reproducible(self):
        """The same root seed gives the same per-delta perturbations"""
        x0, nu = scaled_pair(seed=5, n=8, d=2)
        rows = gradient_convergence_experiment(x0, nu, [0.3, 0.2], radius=1e-3, seed=1)
        assert all(r.displacement == pytest.approx(r.radius) for r in rows)
        again = gradient_convergence_experiment(x0, nu, [0.3, 0.2], radius=1e-3, seed=1)
        assert [r.error for r in again] == [r.error for r in rows]

    def test_perturbation_keeps_matching(self):
        """Radius never exceeds delta^2 and every row satisfies the norm bound"""
        x0, nu = scaled_pair(seed=4, n=10, d=3)
        rows = gradient_convergence_experiment(x0, nu, [0.3, 0.05], seed=2)
        for r in rows:
            assert r.radius <= r.delta ** 2
            assert r.displacement == pytest.approx(r.radius, rel=1e-9, abs=1e-15)
            assert r.norm_bound_holds
            assert r.converged

    def test_degenerate_base(self):
        """A tied base cloud is rejected"""
        with pytest.raises(Degenerate):
            gradient_convergence_experiment(validate_cloud(TIED_SOURCE), validate_cloud(TIED_TARGET), [0.1])
