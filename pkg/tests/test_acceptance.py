"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line through the ``verdict`` fixture; the
lines are repeated in the pytest terminal summary.  Tolerances are pinned
here and never adjusted to make a run pass.
"""
import time

import numpy as np
import pytest

from aisel.core import AnnealingSchedule, make_schedule, tau
from aisel.models import GaussianToy, GlmmModel, GlmmSpec, SvModel, SvSpec, simulate_glmm, simulate_sv
from aisel.models.base import PriorInitial
from aisel.particle_filter import (
    LinearGaussianParams,
    bootstrap_pf,
    kalman_loglik,
    linear_gaussian_state_space,
    simulate_linear_gaussian,
)
from aisel.runner import run_batches, tnv_sweep
from aisel.sampler import FixedN, SamplerConfig, aisel_run
from aisel import sampler as sampler_mod
from aisel.theory import NoiseSpec, perfect_mixing_ais, default_theory_toy
from aisel.tuning import fit_timing, n_opt, sigma2_opt
from helpers import CountingModel

pytestmark = pytest.mark.acceptance

GLMM_N_VALUES = (1, 7, 10, 20, 50)
GLMM_PROPOSAL = "prior"
TRUE_BETA = np.array([-3.0, 2.0, -2.0, 2.0])
REFERENCE_BETA_SD = np.array([0.40, 0.08, 0.05, 0.08])


def test_ess_penalty_matches_exp_minus_tau_sigma2(verdict):
    t0 = time.perf_counter()
    toy = default_theory_toy()
    rng = np.random.default_rng(1)
    ladders = {"linear T=5": make_schedule(T=5), "linear T=20": make_schedule(T=20),
               "cubic T=15": make_schedule(T=15, exponent=3)}
    worst, where = 0.0, ""
    for name, sched in ladders.items():
        for s2 in (0.5, 1.0, 2.0):
            res = perfect_mixing_ais(toy, sched, 100_000, NoiseSpec(s2), rng)
            err = abs(res.ess_ratio / np.exp(-tau(sched) * s2) - 1)
            if err > worst:
                worst, where = err, f"{name}, sigma2={s2}"
    secs = time.perf_counter() - t0
    ok = verdict(1, worst <= 0.10 and secs < 60,
                 f"ESS ratio vs exp(-tau sigma2): worst rel. error {worst:.4f} ({where}), {secs:.1f}s")
    assert ok


def test_tau_identities(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    linear_err = max(abs(tau(make_schedule(T=T)) - 1 / T) for T in range(1, 201))
    random_err = 0.0
    for _ in range(100):
        inner = np.sort(rng.uniform(size=rng.integers(1, 50)))
        sched = AnnealingSchedule(np.concatenate([[0.0], inner, [1.0]]))
        random_err = max(random_err, abs(tau(sched) - np.sum(sched.deltas**2)))
    secs = time.perf_counter() - t0
    ok = verdict(2, linear_err <= 1e-15 and random_err <= 1e-12 and secs < 1,
                 f"|tau(linear T) - 1/T| <= {linear_err:.1e}, random ladders {random_err:.1e}, {secs:.2f}s")
    assert ok


def test_tuner_constants(verdict):
    t0 = time.perf_counter()
    timing = fit_timing([(10, 0.0131), (20, 0.0190)])
    s2 = sigma2_opt(0.1, timing, 17.7)
    n = n_opt(0.1, timing, 17.7)
    secs = time.perf_counter() - t0
    fitted = abs(timing.tau0 - 7.2e-3) < 1e-12 and abs(timing.tau1 - 5.9e-4) < 1e-12
    ok = verdict(3, fitted and abs(s2 - 2.6) <= 0.05 and n == 7 and secs < 1,
                 f"tau0={timing.tau0:.2e} tau1={timing.tau1:.2e} sigma2_opt={s2:.3f} (want 2.6+-0.05) "
                 f"N_opt={n} (want 7)")
    assert ok


@pytest.fixture(scope="module")
def glmm_sweep():
    data = simulate_glmm(GlmmSpec(), np.random.default_rng(20240611))
    model = GlmmModel(data, proposal=GLMM_PROPOSAL)
    cfg = SamplerConfig(5000, make_schedule(T=10), n_policy=FixedN(10))
    return model, tnv_sweep(model, cfg, GLMM_N_VALUES, R=20, seed=7)


@pytest.mark.slow
def test_glmm_tnv_sweep_shape(glmm_sweep, verdict):
    _, rows = glmm_sweep
    tnvs = {r.N: r.tnv for r in rows}
    best = min(tnvs, key=tnvs.get)
    ok = best in (7, 10) and tnvs[1] > 3 * tnvs[best]
    table = ", ".join(f"N={k}: {v:.3g}" for k, v in tnvs.items())
    verdict(4, ok, f"TNV argmin N={best} (want 7 or 10), TNV(1)/TNV(argmin)={tnvs[1] / tnvs[best]:.2f} (want > 3); {table}")
    assert ok


@pytest.mark.slow
def test_glmm_posterior_recovery(glmm_sweep, verdict):
    model, rows = glmm_sweep
    rep = next(r.report for r in rows if r.N == 10)
    mean, sd = rep.mean, rep.posterior_sd
    z = np.abs(mean[:4] - TRUE_BETA) / sd[:4]
    var_ok = bool(np.all(mean[4:] > 0) and np.all(np.abs(np.log10(mean[4:] / np.array([2.0, 1.0]))) < 1))
    ok = bool(np.all(z <= 3)) and var_ok
    z_ref = np.abs(mean[:4] - TRUE_BETA) / REFERENCE_BETA_SD
    verdict(5, ok, f"beta means {np.round(mean[:4], 3)}, |error|/posterior sd {np.round(z, 2)} (want <= 3); "
                   f"sigma2 means {np.round(mean[4:], 3)}; against the reference SDs (0.40, 0.08, 0.05, 0.08) {np.round(z_ref, 2)}")
    assert ok


def test_noise_invariance(verdict):
    y = np.random.default_rng(3).normal(0.5, 1.0, 20)
    cfg = SamplerConfig(5000, make_schedule(T=10), n_policy=FixedN(1))
    clean = run_batches(GaussianToy(y), cfg, R=20, seed=4)
    noisy = run_batches(GaussianToy(y, noise_sigma2=1.0), cfg, R=20, seed=5)
    diff = abs(noisy.mean[0] - clean.mean[0])
    se = float(np.hypot(noisy.se[0], clean.se[0]))
    ok = verdict(6, diff < 3 * se, f"|mean(sigma2=1) - mean(sigma2=0)| = {diff:.4f}, 3 combined SE = {3 * se:.4f}")
    assert ok


def test_evidence_oracle(verdict):
    t0 = time.perf_counter()
    toy = GaussianToy.simulate(20, np.random.default_rng(6))
    cfg = SamplerConfig(10_000, make_schedule(T=50), n_policy=FixedN(1))
    _, _, rep = aisel_run(toy, cfg, np.random.default_rng(7), pi0=PriorInitial(toy))
    err = abs(rep.log_ml - toy.log_evidence())
    secs = time.perf_counter() - t0
    ok = verdict(7, err < 0.05 and secs < 30,
                 f"log ML {rep.log_ml:.4f} vs analytic {toy.log_evidence():.4f}: error {err:.4f} (want < 0.05), {secs:.1f}s")
    assert ok


def test_particle_filter_unbiased(verdict):
    theta = LinearGaussianParams()
    ssm = linear_gaussian_state_space()
    y = simulate_linear_gaussian(theta, 20, np.random.default_rng(8))
    exact = kalman_loglik(y, theta)
    rng = np.random.default_rng(9)
    ratio = np.exp([bootstrap_pf(ssm, y, theta, 2000, rng).log_lhat - exact for _ in range(500)])
    se = ratio.std(ddof=1) / np.sqrt(ratio.size)
    n_grid = np.array([50, 100, 200, 400, 800, 1600])
    var_log = [np.var([bootstrap_pf(ssm, y, theta, int(N), rng).log_lhat for _ in range(300)], ddof=1) for N in n_grid]
    slope = np.polyfit(np.log(n_grid), np.log(var_log), 1)[0]
    ok = abs(ratio.mean() - 1) <= 3 * se and abs(slope + 1) <= 0.2
    verdict(8, ok, f"mean ratio {ratio.mean():.4f} (1 +- {3 * se:.4f}), Var(log) slope {slope:.3f} (want -1 +- 0.2)")
    assert ok


@pytest.mark.slow
def test_sv_synthetic_recovery(verdict):
    spec = SvSpec()
    y, _ = simulate_sv(spec, 945, np.random.default_rng(10))
    y = y - y.mean()
    cfg = SamplerConfig(1000, make_schedule(T=15, exponent=3), n_policy=FixedN(24))
    truth = {"mu": spec.mu, "phi": spec.phi, "sigma_eta": spec.sigma_eta, "rho": 0.0}
    lines, ok, log_ml = [], True, {}
    for leverage in (False, True):
        model = SvModel(y, leverage=leverage)
        rep = run_batches(model, cfg, R=5, seed=11)
        assert not rep.failures
        for name, m, s in zip(model.layout.names, rep.mean, rep.posterior_sd):
            z = abs(m - truth[name]) / s
            ok &= bool(z <= 3)
            lines.append(f"{'svl' if leverage else 'sv'}.{name}={m:.3f} ({z:.1f} sd)")
        log_ml["svl" if leverage else "sv"] = float(np.mean(rep.log_ml))
    verdict(9, ok, "synthetic data, recovery within 3 posterior SDs: " + ", ".join(lines)
            + f"; log ML sv {log_ml['sv']:.4g}, svl {log_ml['svl']:.4g} (informational)")
    assert ok


def test_stored_estimate_discipline(verdict, monkeypatch):
    model = CountingModel(GaussianToy(np.random.default_rng(12).normal(size=10), noise_sigma2=0.5))
    in_reweight = []
    original = sampler_mod.reweight

    def watched(ens, m, pi0, a_prev, a_curr):
        before = model.rows
        out = original(ens, m, pi0, a_prev, a_curr)
        in_reweight.append(model.rows - before)
        return out

    monkeypatch.setattr(sampler_mod, "reweight", watched)
    M, T, reps = 300, 8, 5
    _, trace, rep = aisel_run(model, SamplerConfig(M, make_schedule(T=T), mh_reps=reps, n_policy=FixedN(1)),
                              np.random.default_rng(13))
    proposals = M * T * reps
    ok = (len(in_reweight) == T and sum(in_reweight) == 0
          and sum(r.auto_rejected for r in trace.records) == 0 and model.rows == M + proposals)
    verdict(10, ok, f"reweight estimator calls {sum(in_reweight)}, estimates {model.rows} = M {M} + proposals {proposals}")
    assert ok
