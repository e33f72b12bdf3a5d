import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aisel.core import (
    AnnealingSchedule,
    ContractViolation,
    DegenerateWeightsError,
    Ensemble,
    ess,
    ess_from_log_weights,
    make_schedule,
    multinomial_indices,
    normalize,
    parse_ladder,
    resample,
    systematic_indices,
    tau,
)
from aisel.params import ParamLayout, Support

LAYOUT1 = ParamLayout(("x",), (Support.real(),))


class TestSchedule:
    def test_linear_and_cubic_points(self):
        np.testing.assert_allclose(make_schedule(T=4).points, [0, 0.25, 0.5, 0.75, 1])
        np.testing.assert_allclose(make_schedule(T=2, exponent=3).points, [0, 0.125, 1])

    @pytest.mark.parametrize("pts", [[0.1, 1.0], [0, 0.5], [0, 0.5, 0.5, 1], [0, 0.7, 0.3, 1], [1.0]])
    def test_invalid_ladders_rejected(self, pts):
        with pytest.raises(ValueError):
            AnnealingSchedule(pts)

    def test_bad_T(self):
        with pytest.raises(ValueError):
            make_schedule(T=0)

    @pytest.mark.parametrize("T", [1, 2, 5, 10, 37])
    def test_tau_linear_is_one_over_T(self, T):
        assert tau(make_schedule(T=T)) == pytest.approx(1 / T, abs=1e-14)

    def test_tau_single_step(self):
        assert tau(AnnealingSchedule([0, 1])) == 1.0

    def test_tau_cubic_15(self):
        assert tau(make_schedule(T=15, exponent=3)) == pytest.approx(0.11969, abs=1e-4)

    @given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=30, unique=True))
    def test_tau_equals_sum_of_squared_steps(self, interior):
        pts = np.concatenate([[0.0], np.sort(interior), [1.0]])
        s = AnnealingSchedule(pts)
        assert tau(s) == pytest.approx(np.sum(np.diff(pts) ** 2), abs=1e-12)

    def test_parse_ladder(self):
        assert parse_ladder("linear:5").T == 5
        np.testing.assert_allclose(parse_ladder("power3:15").points, make_schedule(T=15, exponent=3).points)
        np.testing.assert_allclose(parse_ladder("cubic:15").points, make_schedule(T=15, exponent=3).points)
        for bad in ["linear", "square:3", "powerx:3", "linear:x"]:
            with pytest.raises(ValueError):
                parse_ladder(bad)


class TestNormalize:
    def test_large_offsets_are_stable(self):
        w, ls = normalize([1000.0, 1000.0])
        np.testing.assert_allclose(w, [0.5, 0.5])
        assert ls == pytest.approx(1000 + np.log(2))

    def test_neg_inf_entries_get_zero_weight(self):
        w, _ = normalize([0.0, -np.inf, 0.0])
        np.testing.assert_allclose(w, [0.5, 0, 0.5])

    def test_all_neg_inf_is_degenerate(self):
        with pytest.raises(DegenerateWeightsError):
            normalize([-np.inf, -np.inf])

    @pytest.mark.parametrize("bad", [[0.0, np.nan], [0.0, np.inf]])
    def test_nan_and_pos_inf_rejected(self, bad):
        with pytest.raises(ValueError):
            normalize(bad)

    @given(st.lists(st.floats(-700, 700), min_size=1, max_size=50), st.floats(-1e3, 1e3))
    def test_shift_invariance(self, lw, c):
        w1, _ = normalize(lw)
        w2, _ = normalize(np.asarray(lw) + c)
        np.testing.assert_allclose(w1, w2, atol=1e-9)
        assert w1.sum() == pytest.approx(1.0)


class TestEss:
    def test_uniform(self):
        assert ess(np.full(100, 0.01)) == pytest.approx(100)

    def test_point_mass(self):
        w = np.zeros(10)
        w[3] = 1
        assert ess(w) == 1.0

    def test_requires_normalised(self):
        with pytest.raises(ContractViolation):
            ess(np.array([0.5, 0.6]))

    def test_ensemble_input(self):
        e = Ensemble.uniform(np.zeros((4, 1)), np.zeros(4), LAYOUT1)
        assert ess(e) == pytest.approx(4)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=60))
    def test_bounds(self, lw):
        e = ess_from_log_weights(lw)
        assert 1 - 1e-9 <= e <= len(lw) + 1e-9


class TestResampling:
    def test_systematic_counts_are_floor_or_ceil(self):
        rng = np.random.default_rng(0)
        w = rng.dirichlet(np.ones(50))
        for _ in range(20):
            counts = np.bincount(systematic_indices(w, rng), minlength=50)
            assert np.all(np.abs(counts - 50 * w) < 1 + 1e-9)

    def test_multinomial_unbiased(self):
        rng = np.random.default_rng(1)
        w = np.array([0.1, 0.2, 0.7])
        counts = np.bincount(multinomial_indices(w, rng, size=100_000), minlength=3) / 100_000
        np.testing.assert_allclose(counts, w, atol=0.005)

    def test_point_mass_resamples_to_copies(self):
        rng = np.random.default_rng(2)
        lw = np.full(5, -np.inf)
        lw[2] = 0.0
        e = Ensemble(np.arange(5.0)[:, None], np.arange(5.0) * 10, lw, LAYOUT1)
        out = resample(e, "systematic", rng)
        assert np.all(out.theta[:, 0] == 2.0)
        assert np.all(out.log_lhat == 20.0)  # stored estimates travel with theta
        assert np.allclose(out.weights, 0.2)

    def test_unknown_method(self):
        e = Ensemble.uniform(np.zeros((2, 1)), np.zeros(2), LAYOUT1)
        with pytest.raises(ValueError):
            resample(e, "stratified-ish", np.random.default_rng())


class TestEnsemble:
    def test_item_and_mean(self):
        e = Ensemble.uniform(np.array([[0.0], [2.0]]), [1.0, 2.0], LAYOUT1)
        assert e.M == 2 and e.normalized
        p = e[1]
        assert p.log_lhat == 2.0 and p.theta.values[0] == 2.0
        assert e.mean()[0] == pytest.approx(1.0)

    def test_single_particle_weight_one(self):
        e = Ensemble.uniform(np.zeros((1, 1)), [0.0], LAYOUT1)
        assert e.weights[0] == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Ensemble.uniform(np.zeros((3, 2)), np.zeros(3), LAYOUT1)
