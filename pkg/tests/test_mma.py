"""Optimizer update tests.

Closed-form 1 and 2 variable problems pin the MMA step against analytic
optima; the OC updater is checked against its bisection postcondition
and an independently coded textbook OC loop on a small cantilever.
"""

import numpy as np
import pytest

from topograd.mma import BisectionError, ConstraintSpec, MmaState, mma_update, oc_update
from topograd.simp import DensityField, evaluate, volume_fraction
from topograd.fem import StructuredGrid

from conftest import make_cantilever


def field(values):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return DensityField(values, StructuredGrid(values.size, 1))


class TestMmaClosedForm:
    def test_single_variable_quadratic_inactive_constraint(self):
        # min (x - 0.3)^2 with a volume bound that never binds
        spec = ConstraintSpec(volume_target=0.9, move_limit=0.2, sense="inequality")
        state = MmaState()
        x = field([0.5])
        for _ in range(50):
            dfdx = 2.0 * (x.values - 0.3)
            g = float(np.mean(x.values) - spec.volume_target)
            x = mma_update(x, dfdx, g, np.ones(1), state, spec)
        assert abs(x.values[0] - 0.3) <= 1e-3

    def test_two_variable_quadratic_with_volume_equality(self):
        # min (x1-0.9)^2 + 4 (x2-0.9)^2  s.t. mean(x) = 0.5
        # Lagrange stationarity gives x* = (0.26, 0.74).
        spec = ConstraintSpec(volume_target=0.5, move_limit=0.2)
        state = MmaState()
        x = field([0.5, 0.5])
        for _ in range(50):
            dfdx = np.array([2.0 * (x.values[0] - 0.9), 8.0 * (x.values[1] - 0.9)])
            g = float(np.mean(x.values) - spec.volume_target)
            x = mma_update(x, dfdx, g, np.full(2, 0.5), state, spec)
        np.testing.assert_allclose(x.values, [0.26, 0.74], atol=1e-3)

    def test_zero_gradient_returns_unchanged(self):
        spec = ConstraintSpec(volume_target=0.5)
        state = MmaState()
        x = field([0.2, 0.8, 0.5])
        out = mma_update(x, np.zeros(3), 0.0, np.full(3, 1 / 3), state, spec)
        np.testing.assert_array_equal(out.values, x.values)


class TestMmaInvariants:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.n = 40
        self.x = DensityField(np.full(self.n, 0.5), StructuredGrid(self.n, 1))
        self.dfdx = -rng.uniform(0.1, 2.0, self.n)
        self.dgdx = np.full(self.n, 1.0 / self.n)

    def run_one(self, dfdx, dgdx, state=None):
        state = state or MmaState()
        g = float(np.mean(self.x.values) - 0.5)
        return mma_update(self.x, dfdx, g, dgdx, state, ConstraintSpec(volume_target=0.5))

    def test_feasibility_box_and_move_limits(self):
        out = self.run_one(self.dfdx, self.dgdx)
        assert np.all(out.values >= 0.0) and np.all(out.values <= 1.0)
        assert np.all(np.abs(out.values - self.x.values) <= 0.2 + 1e-12)

    def test_volume_satisfied_at_subproblem_optimum(self):
        out = self.run_one(self.dfdx, self.dgdx)
        assert abs(np.mean(out.values) - 0.5) <= 1e-6

    def test_gradient_scaling_invariance(self):
        out1 = self.run_one(self.dfdx, self.dgdx)
        out2 = self.run_one(137.0 * self.dfdx, 137.0 * self.dgdx)
        np.testing.assert_allclose(out1.values, out2.values, atol=1e-9)

    def test_asymptotes_strictly_bracket_iterates(self):
        state = MmaState()
        x = self.x
        for step in range(6):
            dfdx = -np.abs(np.sin(np.arange(self.n) + step)) - 0.05
            g = float(np.mean(x.values) - 0.5)
            x = mma_update(x, dfdx, g, self.dgdx, state, ConstraintSpec(volume_target=0.5))
            assert np.all(state.lower < x.values) and np.all(x.values < state.upper)

    def test_history_advances(self):
        state = MmaState()
        x1 = self.run_one(self.dfdx, self.dgdx, state)
        assert state.iteration == 1
        np.testing.assert_array_equal(state.x_prev, self.x.values)

    def test_mismatched_gradient_length_rejected(self):
        with pytest.raises(ValueError):
            self.run_one(self.dfdx[:-1], self.dgdx)


class TestOcUpdate:
    def test_uniform_sensitivity_gives_uniform_target(self):
        n = 30
        x = DensityField(np.full(n, 0.45), StructuredGrid(n, 1))
        out = oc_update(x, np.full(n, -2.0), volume_target=0.4, move=0.2)
        np.testing.assert_allclose(out.values, np.full(n, 0.4), atol=1e-6)

    def test_volume_postcondition_on_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(10, 80))
            x = DensityField(rng.uniform(0.3, 0.7, n), StructuredGrid(n, 1))
            dfdx = -rng.uniform(0.01, 5.0, n)
            target = float(np.clip(np.mean(x.values) + rng.uniform(-0.1, 0.1), 0.2, 0.8))
            out = oc_update(x, dfdx, volume_target=target, move=0.2)
            assert abs(np.mean(out.values) - target) <= 1e-6

    def test_positive_sensitivity_rejected(self):
        x = field([0.5, 0.5])
        with pytest.raises(ValueError):
            oc_update(x, np.array([-1.0, 0.5]), volume_target=0.5)

    def test_unreachable_target_raises(self):
        x = field([0.1, 0.1])
        with pytest.raises(BisectionError):
            oc_update(x, np.array([-1.0, -1.0]), volume_target=0.9, move=0.05)


def textbook_oc_loop(problem, iterations, move=0.2):
    """Self-contained classic OC loop (multiplicative update, own bisection)."""
    x = problem.uniform_design()
    history = []
    for _ in range(iterations):
        ev = evaluate(x, problem)
        history.append(ev.objective)
        dc = np.minimum(ev.gradient, 0.0)
        l1, l2 = 0.0, 1e9
        lo = np.maximum(0.0, x.values - move)
        hi = np.minimum(1.0, x.values + move)
        while (l2 - l1) / (l1 + l2 + 1e-30) > 1e-9:
            lmid = 0.5 * (l1 + l2)
            xnew = np.clip(x.values * np.sqrt(-dc / lmid), lo, hi)
            if np.mean(xnew) > problem.volume_fraction:
                l1 = lmid
            else:
                l2 = lmid
        x = x.copy_with(xnew)
    return x, history


class TestOcAgainstTextbookLoop:
    def test_small_cantilever_trajectory(self):
        problem = make_cantilever(16, 6, volfrac=0.4)
        x_ref, hist_ref = textbook_oc_loop(problem, 30)

        x = problem.uniform_design()
        for _ in range(30):
            ev = evaluate(x, problem)
            x = oc_update(x, np.minimum(ev.gradient, 0.0), problem.volume_fraction, move=0.2)
        final = evaluate(x, problem).objective
        final_ref = evaluate(x_ref, problem).objective
        assert final == pytest.approx(final_ref, rel=0.02)
        assert volume_fraction(x) == pytest.approx(problem.volume_fraction, abs=1e-6)

    def test_objective_decreases_from_uniform(self):
        problem = make_cantilever(16, 6, volfrac=0.4)
        _, hist = textbook_oc_loop(problem, 30)
        assert hist[-1] < hist[0]
