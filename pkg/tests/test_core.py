import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctmc_waiting import core, fixtures
from ctmc_waiting.core import CtmcModel
from ctmc_waiting.errors import AbsoluteContinuityError, DomainError, NumericError, ValidationError

import oracles

# closed forms frozen from hand derivations
S_TWO_STATE = 1.0 / 3.0
S_CYCLE = 0.8 * math.log(9.0)  # (2q-1) log(q/(1-q)), q=0.9
THETA2_TWO_STATE = 16.0 / 27.0  # E''(0) for the 2-state pair, 0.592593


def _random_models(seed, size):
    rng = np.random.default_rng(seed)
    return fixtures.random_chain(size, rng), fixtures.random_chain(size, rng)


chain_seeds = st.integers(0, 2**32 - 1)
sizes = st.integers(2, 5)


class TestModel:
    def test_generator_two_state(self):
        gen = core.build_generator(fixtures.two_state(1, 2))
        np.testing.assert_array_equal(gen, [[-1, 1], [2, -2]])

    def test_generator_cycle_entries(self, cycle):
        gen = core.build_generator(cycle)
        assert gen[0, 1] == pytest.approx(0.9)
        assert gen[0, 2] == pytest.approx(0.1)
        assert gen[0, 0] == -1

    @given(chain_seeds, sizes)
    def test_generator_rows_sum_to_zero(self, seed, size):
        gen = core.build_generator(_random_models(seed, size)[0])
        assert np.abs(gen.sum(axis=1)).max() <= 1e-12

    def test_row_stochasticity_violation_is_named(self):
        with pytest.raises(ValidationError, match="row 0 .*row-stochasticity"):
            CtmcModel((0, 1), (1, 1), [[0, 0.9], [1, 0]])

    @pytest.mark.parametrize(
        "rates, jump, message",
        [
            ((0.0, 1.0), [[0, 1], [1, 0]], "escape rate"),
            ((1.0, 1.0), [[0.5, 0.5], [1, 0]], "self-jumps"),
            ((1.0, 1.0, 1.0), [[0, 1, 0], [1, 0, 0], [0, 1, 0]], "irreducib"),
        ],
    )
    def test_invalid_models(self, rates, jump, message):
        with pytest.raises(ValidationError, match=message):
            CtmcModel(tuple(range(len(rates))), rates, jump)

    def test_dict_round_trip(self, cycle):
        assert CtmcModel.from_dict(cycle.to_dict()) == cycle

    def test_missing_key(self):
        with pytest.raises(ValidationError, match="jump_matrix"):
            CtmcModel.from_dict({"states": [0, 1], "escape_rates": [1, 1]})


class TestStationary:
    def test_two_state(self):
        mu = core.stationary_distribution(np.array([[-1.0, 1.0], [2.0, -2.0]]))
        np.testing.assert_allclose(mu, [2 / 3, 1 / 3], atol=1e-14)

    @pytest.mark.parametrize("q", [0.1, 0.5, 0.9])
    def test_cycle_uniform(self, q):
        np.testing.assert_allclose(core.stationary(fixtures.cycle(q)), [1 / 3] * 3, atol=1e-14)

    def test_symmetric_two_state(self):
        np.testing.assert_allclose(core.stationary(fixtures.two_state(3.7, 3.7)), [0.5, 0.5])

    @given(chain_seeds, sizes)
    def test_matches_eigenvector_oracle(self, seed, size):
        model = _random_models(seed, size)[0]
        gen = core.build_generator(model)
        mu = core.stationary_distribution(gen)
        assert (mu > 0).all()
        assert abs(mu.sum() - 1) <= 1e-12
        assert np.abs(mu @ gen).max() <= 1e-10
        np.testing.assert_allclose(mu, oracles.stationary_eig(gen), atol=1e-10)


class TestReverse:
    def test_reversible_two_state_is_fixed(self):
        m = fixtures.two_state(1, 2)
        assert core.reverse(m).allclose(m)

    def test_cycle_reverses_direction(self, cycle):
        rev = core.reverse(cycle)
        np.testing.assert_allclose(rev.jump_matrix[0], [0, 0.1, 0.9], atol=1e-12)
        np.testing.assert_allclose(rev.escape_rates, 1.0, atol=1e-12)

    @given(chain_seeds, sizes)
    def test_involution_preserves_mu(self, seed, size):
        m = _random_models(seed, size)[0]
        rev = core.reverse(m)
        assert core.reverse(rev).allclose(m, atol=1e-12)
        np.testing.assert_allclose(core.stationary(rev), core.stationary(m), atol=1e-10)


class TestRelativeEntropy:
    def test_two_state_closed_form(self, pair):
        assert core.relative_entropy_rate(*pair) == pytest.approx(S_TWO_STATE, abs=1e-12)

    def test_cycle_closed_form(self, cycle):
        assert core.relative_entropy_rate(cycle, core.reverse(cycle)) == pytest.approx(S_CYCLE, abs=1e-10)

    def test_identity(self, cycle):
        assert core.relative_entropy_rate(cycle, cycle) == 0.0

    @given(chain_seeds, sizes)
    def test_matches_loop_oracle_and_is_nonnegative(self, seed, size):
        mx, my = _random_models(seed, size)
        s = core.relative_entropy_rate(mx, my)
        assert s == pytest.approx(oracles.relative_entropy_closed_form(mx.rates, my.rates), abs=1e-10)
        assert s > 0

    def test_absolute_continuity(self):
        mx = fixtures.cycle(0.9)
        my = CtmcModel((0, 1, 2), (1, 1, 1), [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
        with pytest.raises(AbsoluteContinuityError):
            core.relative_entropy_rate(mx, my)


class TestEntropyProduction:
    @given(st.floats(0.01, 100), st.floats(0.01, 100))
    def test_two_state_is_zero(self, a, b):
        assert abs(core.entropy_production_rate(fixtures.two_state(a, b))) <= 1e-12

    def test_cycle(self, cycle):
        assert core.entropy_production_rate(cycle) == pytest.approx(S_CYCLE, abs=1e-10)

    def test_symmetric_cycle_is_zero(self):
        assert abs(core.entropy_production_rate(fixtures.cycle(0.5))) <= 1e-12

    @given(chain_seeds, st.integers(2, 6))
    def test_zero_iff_detailed_balance(self, seed, size):
        rng = np.random.default_rng(seed)
        rev = fixtures.random_reversible(size, rng, density=0.7)
        assert core.is_reversible(rev)
        assert abs(core.entropy_production_rate(rev)) <= 1e-12
        generic = fixtures.random_chain(max(size, 3), rng)
        assert not core.is_reversible(generic)
        assert core.entropy_production_rate(generic) > 0


class TestDiscretization:
    def test_two_state_closed_form(self):
        pd = core.discretized_transition_matrix(fixtures.two_state(1, 2), 0.1)
        a = (1 - math.exp(-0.3)) / 3
        assert pd[0, 1] == pytest.approx(a, abs=1e-15)
        assert pd[1, 0] == pytest.approx(2 * a, abs=1e-15)
        assert pd[0, 1] == pytest.approx(0.0863940, abs=1e-7)
        assert pd[1, 0] == pytest.approx(0.1727879, abs=1e-7)

    @given(chain_seeds, sizes, st.floats(1e-3, 20))
    def test_matches_scipy(self, seed, size, delta):
        m = _random_models(seed, size)[0]
        pd = core.discretized_transition_matrix(m, delta)
        np.testing.assert_allclose(pd, oracles.transition(m.rates, delta), atol=1e-12)
        assert np.abs(pd.sum(axis=1) - 1).max() <= 1e-12
        assert (pd >= 0).all()

    def test_small_delta_recovers_generator(self, cycle):
        d = 1e-6
        pd = core.discretized_transition_matrix(cycle, d)
        np.testing.assert_allclose((pd - np.eye(3)) / d, core.build_generator(cycle), atol=1e-5)

    @pytest.mark.parametrize("delta", [0.0, -0.1])
    def test_nonpositive_delta(self, cycle, delta):
        with pytest.raises(ValidationError):
            core.discretized_transition_matrix(cycle, delta)


class TestSpectralGap:
    def test_two_state(self):
        assert core.spectral_gap(np.array([[-1.0, 1.0], [2.0, -2.0]])) == pytest.approx(3.0)

    def test_symmetric_cycle(self):
        assert core.spectral_gap(core.build_generator(fixtures.cycle(0.5))) == pytest.approx(1.5)

    def test_scaling(self, cycle):
        g1 = core.spectral_gap(core.build_generator(cycle))
        g2 = core.spectral_gap(core.build_generator(cycle.scaled(2.0)))
        assert g2 == pytest.approx(2 * g1, rel=1e-12)


class TestScgf:
    def test_endpoints_vanish(self, pair, cycle):
        for mx, my in (pair, (cycle, core.reverse(cycle))):
            assert abs(core.scgf_value(mx, my, 0.0)) <= 1e-10
            assert abs(core.scgf_value(mx, my, -1.0)) <= 1e-10

    def test_fluctuation_symmetry(self, cycle):
        rev = core.reverse(cycle)
        grid = np.round(np.arange(-0.9, 0.95, 0.1), 10)
        e = core.continuous_scgf(cycle, rev, grid)
        mirror = core.continuous_scgf(cycle, rev, -1 - grid)
        assert np.abs(e.values - mirror.values).max() <= 1e-10

    def test_matches_dense_eigensolver(self, pair):
        for p in (-0.7, 0.3, 0.9):
            dense = np.linalg.eigvals(core.tilted_generator(*pair, p)).real.max()
            assert core.scgf_value(*pair, p) == pytest.approx(dense, abs=1e-11)

    def test_convex_and_derivative(self, pair, cycle):
        for mx, my in (pair, (cycle, core.reverse(cycle))):
            curve = core.continuous_scgf(mx, my)
            assert curve.is_convex()
            assert core.scgf_derivative_at_zero(mx, my) == pytest.approx(core.relative_entropy_rate(mx, my), abs=1e-6)

    def test_theta2_two_state(self, pair):
        assert core.continuous_variance(*pair) == pytest.approx(THETA2_TWO_STATE, rel=1e-6)

    def test_discrete_trivial_cases(self, pair, cycle):
        pdx = core.discretized_transition_matrix(cycle, 0.1)
        same = core.discrete_scgf(pdx, pdx, None, 0.1)
        assert np.abs(same.values).max() <= 1e-12
        pdy = core.discretized_transition_matrix(pair[1], 0.1)
        f = core.discrete_scgf(core.discretized_transition_matrix(pair[0], 0.1), pdy, None, 0.1, [0.0])
        assert abs(f.values[0]) <= 1e-10

    @pytest.mark.parametrize("p", [1.0, -1.0, 1.5])
    def test_discrete_domain(self, pair, p):
        pd = core.discretized_transition_matrix(pair[0], 0.1)
        with pytest.raises(DomainError, match="infinity for \\|p\\| >= 1"):
            core.discrete_scgf(pd, pd, None, 0.1, [p])

    def test_discrete_absolute_continuity(self):
        with pytest.raises(AbsoluteContinuityError):
            core.discrete_scgf(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([[1.0, 0.0], [0.5, 0.5]]), None, 1.0, [0.2])

    def test_discrete_converges_at_rate_delta(self, cycle):
        rev = core.reverse(cycle)
        grid = [-0.75, -0.5, -0.25, 0.25, 0.5, 0.75]
        e = core.continuous_scgf(cycle, rev, grid).values
        errs = []
        for d in (0.1, 0.05, 0.025):
            f = core.discrete_scgf(core.discretized_transition_matrix(cycle, d),
                                   core.discretized_transition_matrix(rev, d), None, d, grid).values
            errs.append(np.abs(f - e))
        assert (errs[1] <= 0.7 * errs[0]).all()
        assert (errs[2] <= 0.7 * errs[1]).all()

    def test_two_state_error_ratio_at_p_half(self, pair):
        # dense-eigensolver oracle: the error is O(delta^2) for this pair, ratio 0.2503
        e = core.scgf_value(*pair, 0.5)
        errs = []
        for d in (0.05, 0.025):
            f = core.discrete_scgf(core.discretized_transition_matrix(pair[0], d),
                                   core.discretized_transition_matrix(pair[1], d), None, d, [0.5]).values[0]
            errs.append(abs(f - e))
        assert errs[1] / errs[0] == pytest.approx(0.2503, abs=0.002)
        assert errs[1] <= 0.7 * errs[0]


class TestLegendre:
    def test_zero_curve_degenerates(self, cycle):
        curve = core.continuous_scgf(cycle, cycle)
        rate = core.legendre_transform(curve)
        assert rate.q.size == 1
        assert rate(0.0) == pytest.approx(0.0, abs=1e-12)

    def test_minimum_at_mean(self, pair):
        curve = core.continuous_scgf(*pair, np.linspace(-0.95, 0.95, 381))
        rate = core.legendre_transform(curve)
        assert (rate.values >= -1e-12).all()
        assert rate(core.relative_entropy_rate(*pair)) <= 1e-6

    def test_gallavotti_cohen(self, cycle):
        grid = np.linspace(-0.95, -0.05, 181)  # closed under p -> -1 - p
        rate = core.legendre_transform(core.continuous_scgf(cycle, core.reverse(cycle), grid))
        q = np.linspace(-1.0, 1.0, 21)
        np.testing.assert_allclose(rate(-q), rate(q) + q, atol=1e-6)

    def test_non_convex_rejected(self):
        curve = core.ScgfCurve(np.array([-0.5, 0.0, 0.5]), np.array([0.0, 0.1, 0.0]), "E", None, None)
        with pytest.raises(NumericError):
            core.legendre_transform(curve)


class TestMeanVariance:
    def _mats(self, mx, my, d):
        return core.discretized_transition_matrix(mx, d), core.discretized_transition_matrix(my, d)

    def test_identity(self, cycle):
        pd = core.discretized_transition_matrix(cycle, 0.1)
        assert core.discrete_mean_and_variance(pd, pd, core.stationary(cycle), 0.1) == (0.0, 0.0)

    def test_mean_rate_limit(self, pair):
        pdx, pdy = self._mats(*pair, 0.01)
        m, _ = core.discrete_mean_and_variance(pdx, pdy, core.stationary(pair[0]), 0.01)
        assert abs(m / 0.01 - S_TWO_STATE) <= 0.01

    def test_variance_matches_autocovariance_oracle(self, pair, cycle):
        for mx, my in (pair, (cycle, core.reverse(cycle))):
            pdx, pdy = self._mats(mx, my, 0.1)
            mu = core.stationary(mx)
            _, v = core.discrete_mean_and_variance(pdx, pdy, mu, 0.1)
            ref = oracles.autocovariance_variance(pdx, mu, np.log(pdx / pdy))
            assert v == pytest.approx(ref, rel=1e-5)

    def test_variance_over_delta_tends_to_theta2(self, pair):
        ratios = []
        for d in (0.04, 0.02, 0.01):
            pdx, pdy = self._mats(*pair, d)
            ratios.append(core.discrete_mean_and_variance(pdx, pdy, core.stationary(pair[0]), d)[1] / d)
        gaps = [abs(r - THETA2_TWO_STATE) for r in ratios]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] <= 0.05 * THETA2_TWO_STATE
