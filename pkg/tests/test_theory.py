import numpy as np
import pytest

from aisel.core import ContractViolation, Ensemble, make_schedule, tau
from aisel.models import GaussianToy
from aisel.params import ParamLayout, Support
from aisel.theory import (
    NoiseSpec,
    closed_form_variance,
    default_theory_toy,
    perfect_mixing_ais,
    validate_theory,
    write_theory_csv,
)

LAYOUT = ParamLayout(("x",), (Support.real(),))


class TestPerfectMixing:
    def test_no_noise_means_no_penalty(self):
        res = perfect_mixing_ais(default_theory_toy(), make_schedule(T=5), 2000, NoiseSpec(0.0), np.random.default_rng(0))
        assert res.ess_ratio == 1.0

    def test_single_step_ladder(self):
        # tau = 1 for the ladder (0, 1)
        sched = make_schedule(T=1)
        assert tau(sched) == pytest.approx(1.0)
        res = perfect_mixing_ais(default_theory_toy(), sched, 200_000, NoiseSpec(0.5), np.random.default_rng(1))
        assert res.ess_ratio == pytest.approx(np.exp(-0.5), rel=0.02)

    def test_tilted_noise_keeps_weights_unbiased(self):
        toy = GaussianToy([0.2, -0.1])
        sched = make_schedule(T=4)
        res = perfect_mixing_ais(toy, sched, 400_000, NoiseSpec(1.0), np.random.default_rng(2))
        ratio = np.exp(res.log_w_noisy - res.log_w)
        # E[w_noisy] = E[w], and the ratio's mean under w-weighting is 1
        w = np.exp(res.log_w - res.log_w.max())
        m = np.sum(w * ratio) / w.sum()
        assert m == pytest.approx(1.0, abs=0.02)

    def test_finer_ladder_lessens_penalty(self):
        toy, rng = default_theory_toy(), np.random.default_rng(3)
        coarse = perfect_mixing_ais(toy, make_schedule(T=3), 50_000, NoiseSpec(1.0), rng).ess_ratio
        fine = perfect_mixing_ais(toy, make_schedule(T=30), 50_000, NoiseSpec(1.0), rng).ess_ratio
        assert fine > coarse

    def test_noise_spec(self):
        with pytest.raises(ValueError):
            NoiseSpec(-0.1)
        z = NoiseSpec(2.0).sample(400_000, np.random.default_rng(4))
        assert np.exp(z).mean() == pytest.approx(1.0, abs=0.02)
        assert NoiseSpec(2.0).sample(400_000, np.random.default_rng(5), tilt=1.0).mean() == pytest.approx(1.0, abs=0.01)


class TestClosedFormVariance:
    def test_uniform_two_points(self):
        e = Ensemble.uniform(np.array([[0.0], [2.0]]), np.zeros(2), LAYOUT)
        np.testing.assert_allclose(closed_form_variance(e), [1.0])

    def test_constant_function(self):
        e = Ensemble(np.random.default_rng(6).normal(size=(10, 1)), np.zeros(10), np.arange(10.0), LAYOUT)
        np.testing.assert_allclose(closed_form_variance(e, lambda th: np.ones_like(th)), [0.0])

    def test_refuses_after_resampling(self):
        e = Ensemble.uniform(np.zeros((3, 1)), np.zeros(3), LAYOUT)
        with pytest.raises(ContractViolation):
            closed_form_variance(e, resampled=True)

    def test_matches_replicate_variance(self):
        rng = np.random.default_rng(7)
        M, R = 500, 100
        est, cf = [], []
        for _ in range(R):
            x = rng.normal(size=(M, 1))
            lw = -0.5 * (x[:, 0] - 1.0) ** 2 + 0.5 * x[:, 0] ** 2  # target N(1, 1), proposal N(0, 1)
            e = Ensemble(x, np.zeros(M), lw, LAYOUT)
            est.append(float(np.sum(e.weights * x[:, 0]) / e.weights.sum()))
            cf.append(closed_form_variance(e)[0] / M)
        ratio = np.var(est, ddof=1) / np.mean(cf)
        assert 0.5 <= ratio <= 2.0


def test_validate_and_csv(tmp_path):
    ladders = {"linear:5": make_schedule(T=5), "cubic:5": make_schedule(T=5, exponent=3)}
    rows = validate_theory([0.0, 1.0], ladders, 20_000, np.random.default_rng(8))
    assert len(rows) == 4
    for r in rows:
        assert r.ess_ratio_theory == pytest.approx(np.exp(-r.tau * r.sigma2))
        assert r.rel_error < 0.1
    write_theory_csv(rows, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "ladder,sigma2,tau,ess_ratio_measured,ess_ratio_theory" and len(lines) == 5
