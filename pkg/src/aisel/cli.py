"""Command-line entry point: ``aisel <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical degeneracy.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .core import ContractViolation, DegenerateWeightsError, make_schedule, parse_ladder, tau
from .io import read_kv, write_kv, write_posterior_csv, write_trace_csv
from .marglik import EvidenceTrace
from .models import GaussianToy, GlmmModel, GlmmSpec, SvModel, SvSpec, read_glmm_csv, simulate_glmm, simulate_sv, write_glmm_csv
from .particle_filter import load_returns
from .runner import run_batches, tnv_sweep, write_sweep_csv
from .sampler import AdaptiveN, FixedN, SamplerConfig, aisel_run
from .theory import validate_theory, write_theory_csv
from .tuning import TimingModel, estimate_gamma_bar2, fit_timing, measure_timing, n_opt, n_opt_display, sigma2_opt

EXIT_CONFIG = 2
EXIT_DEGENERATE = 3

MODELS = ("glmm", "sv", "svl", "toy")

DEFAULTS = {
    "M": "1000",
    "T": "10",
    "ladder": "",
    "N": "10",
    "sigma2_target": "",
    "ess_fraction": "0.5",
    "mh_reps": "5",
    "initial_scale": "",
    "resampler": "systematic",
    "R": "1",
    "seed": "0",
    "workers": "1",
    "demean": "true",
    "noise_sigma2": "0",
    "proposal": "prior",
    "sv_noise_prior": "variance",
}


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def load_config(path: str | None, overrides: list[str]) -> dict[str, str]:
    cfg = dict(DEFAULTS)
    if path:
        cfg.update(read_kv(path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = v.strip()
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def sampler_config(cfg: dict[str, str]) -> SamplerConfig:
    try:
        schedule = parse_ladder(cfg["ladder"]) if cfg["ladder"] else make_schedule("power", int(cfg["T"]))
        policy = AdaptiveN(float(cfg["sigma2_target"])) if cfg["sigma2_target"] else FixedN(int(cfg["N"]))
        return SamplerConfig(
            M=int(cfg["M"]),
            schedule=schedule,
            ess_fraction=float(cfg["ess_fraction"]),
            mh_reps=int(cfg["mh_reps"]),
            initial_scale=float(cfg["initial_scale"]) if cfg["initial_scale"] else None,
            n_policy=policy,
            resampler=cfg["resampler"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_model(kind: str, data_path: str, cfg: dict[str, str]):
    if kind == "glmm":
        return GlmmModel(read_glmm_csv(data_path), proposal=cfg["proposal"])
    if kind in ("sv", "svl"):
        return SvModel(load_returns(data_path, demean=_bool(cfg["demean"])), leverage=kind == "svl",
                       noise_prior=cfg["sv_noise_prior"])
    if kind == "toy":
        return GaussianToy(load_returns(data_path, demean=False), noise_sigma2=float(cfg["noise_sigma2"]))
    raise ConfigError(f"unknown model {kind!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    if args.model == "glmm":
        write_glmm_csv(simulate_glmm(GlmmSpec(m=args.n or 50), rng), out)
    elif args.model in ("sv", "svl"):
        rho = args.rho if args.model == "svl" else None
        y, _ = simulate_sv(SvSpec(args.mu, args.phi, args.sigma_eta, rho), args.n or 945, rng)
        out.write_text("\n".join(repr(float(v)) for v in y) + "\n")
    else:
        toy = GaussianToy.simulate(args.n or 20, rng, theta=args.mu)
        out.write_text("\n".join(repr(float(v)) for v in toy.y) + "\n")
    return 0


def cmd_tune(args) -> int:
    cfg = load_config(args.config, args.set)
    sc = sampler_config(cfg)
    t = tau(sc.schedule)
    if args.tau0 is not None and args.tau1 is not None:
        timing = TimingModel(args.tau0, args.tau1)
    elif args.timing_samples:
        pts = [tuple(map(float, p.split(":"))) for p in args.timing_samples.split(",")]
        timing = fit_timing(pts)
    else:
        if not (args.model and args.data):
            raise ConfigError("tune needs --model/--data, --timing-samples or --tau0/--tau1")
        model = build_model(args.model, args.data, cfg)
        rng = np.random.default_rng(int(cfg["seed"]))
        timing = fit_timing(measure_timing(model, model.default_pi0(), _floats(args.n_timing), rng))
    if args.gamma_bar2 is not None:
        g2 = args.gamma_bar2
    else:
        if not (args.model and args.data):
            raise ConfigError("tune needs --gamma-bar2 or --model/--data to estimate it")
        model = build_model(args.model, args.data, cfg)
        rng = np.random.default_rng(int(cfg["seed"]) + 1)
        g2 = estimate_gamma_bar2(model, model.default_pi0(), args.J, args.N0, rng)
    out = {"tau0": timing.tau0, "tau1": timing.tau1, "gamma_bar2": g2, "tau": t}
    if g2 > 0:
        out["sigma2_opt"] = sigma2_opt(t, timing, g2)
        out["n_opt"] = n_opt(t, timing, g2)
        out["n_opt_display"] = n_opt_display(t, timing, g2)
    else:
        out["n_opt"] = 1
    _emit(out, args.out)
    return 0


def _emit(mapping, out):
    if out:
        write_kv(mapping, out)
    for k, v in mapping.items():
        print(f"{k} = {v}")


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    sc = sampler_config(cfg)
    model = build_model(args.model, args.data, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    R = int(cfg["R"])
    rep = run_batches(model, sc, R, int(cfg["seed"]), workers=int(cfg["workers"]), split=R > 1)
    if rep.R == 0:
        print("all batches failed: " + "; ".join(m for _, m in rep.failures), file=sys.stderr)
        return EXIT_DEGENERATE
    first, trace = rep.runs[0]
    kv = rep.as_dict()
    kv["log_ml"] = first.log_ml
    write_kv(kv, out / "report.kv")
    write_posterior_csv(model.layout.names, rep.mean, rep.posterior_sd, out / "posterior.csv")
    write_trace_csv(trace, out / "trace.csv")
    first.evidence.write_csv(out / "evidence.csv")
    for n, m, s in zip(model.layout.names, rep.mean, rep.posterior_sd):
        print(f"{n:>10s}  mean {m: .4f}  sd {s:.4f}")
    print(f"log marginal likelihood {first.log_ml:.4f}")
    return 0


def cmd_evidence(args) -> int:
    if args.from_csv:
        print(f"log_ml = {EvidenceTrace.read_csv(args.from_csv).log_ml!r}")
        return 0
    if not (args.model and args.data):
        raise ConfigError("evidence needs --from-csv or --model/--data")
    cfg = load_config(args.config, args.set)
    model = build_model(args.model, args.data, cfg)
    _, _, rep = aisel_run(model, sampler_config(cfg), np.random.default_rng(int(cfg["seed"])))
    if args.out:
        rep.evidence.write_csv(args.out)
    print(f"log_ml = {rep.log_ml!r}")
    return 0


def cmd_tnv_sweep(args) -> int:
    cfg = load_config(args.config, args.set)
    model = build_model(args.model, args.data, cfg)
    rows = tnv_sweep(model, sampler_config(cfg), [int(x) for x in _floats(args.n_list)], args.batches,
                     int(cfg["seed"]), workers=int(cfg["workers"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    for r in rows:
        print(f"N={r.N:4d}  tnv {r.tnv:.4g}  var {r.var:.4g}  cpu {r.seconds:.1f}s")
    return 0


def cmd_validate_theory(args) -> int:
    ladders = {name: parse_ladder(name) for name in args.ladders.split(",") if name.strip()}
    rows = validate_theory(_floats(args.sigma2_list), ladders, args.M, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_theory_csv(rows, out / "theorem1.csv")
    for r in rows:
        print(f"{r.ladder:>10s} sigma2={r.sigma2:<4g} measured {r.ess_ratio_measured:.4f} theory {r.ess_ratio_theory:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aisel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp, required=True):
        sp.add_argument("--model", choices=MODELS, required=required)
        sp.add_argument("--data", required=required)
        sp.add_argument("--config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")

    s = sub.add_parser("simulate-data", help="write a synthetic dataset")
    s.add_argument("--model", choices=MODELS, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, help="clusters (glmm) or observations (sv, svl, toy)")
    s.add_argument("--mu", type=float, default=-0.6)
    s.add_argument("--phi", type=float, default=0.98)
    s.add_argument("--sigma-eta", type=float, default=0.16)
    s.add_argument("--rho", type=float, default=0.0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("tune", help="timing model, gamma_bar2 and the optimal N")
    model_args(s, required=False)
    s.add_argument("--tau0", type=float)
    s.add_argument("--tau1", type=float)
    s.add_argument("--timing-samples", help="N:seconds pairs, e.g. 10:0.0131,20:0.0190")
    s.add_argument("--n-timing", default="10,20,50")
    s.add_argument("--gamma-bar2", type=float)
    s.add_argument("--J", type=int, default=20)
    s.add_argument("--N0", type=int, default=50)
    s.add_argument("--out")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("run", help="run the sampler (in R batches)")
    model_args(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("evidence", help="log marginal likelihood")
    model_args(s, required=False)
    s.add_argument("--from-csv", help="recompute from an evidence.csv")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evidence)

    s = sub.add_parser("tnv-sweep", help="time-normalised variance over a list of N")
    model_args(s)
    s.add_argument("--n-list", default="1,7,10,20,50")
    s.add_argument("--batches", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tnv_sweep)

    s = sub.add_parser("validate-theory", help="measured vs predicted ESS ratio")
    s.add_argument("--sigma2-list", default="0.5,1,2")
    s.add_argument("--ladders", default="linear:5,linear:20,power3:15")
    s.add_argument("--M", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_validate_theory)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DegenerateWeightsError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, OSError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
