"""Command-line interface: ``entrynav <command> [options]``.

Commands: ``gen-atmos``, ``fit-exp``, ``train``, ``simulate``,
``montecarlo`` and ``report``. Exit status is 0 on success, 1 on a runtime
failure and 2 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .atmos import ExpModel, TabulatedProfile, fit_exponential, sample_truth_atmosphere
from .config import FILTER_NAMES, McConfig, load_config
from .dynamics import STATE_NAMES
from .errors import ConfigError, EntryNavError
from .mc import (OnboardModels, run_case, run_montecarlo, write_filter_log,
                 write_measurements)
from .net import MlpDensityNet, offline_train

log = logging.getLogger("entrynav")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
MAX_PROFILES_PER_SEED = 10_000
FAIL_FRACTION_LIMIT = 0.10

# display units for the RMSE table
_DEG_STATES = {"phi", "theta", "gamma", "psi"}
_UNITS = {"r": "m", "phi": "deg", "theta": "deg", "v": "m/s", "gamma": "deg", "psi": "deg",
          "B": "m^2/kg", "LoD": "-"}


class UsageError(Exception):
    """Bad arguments or missing inputs; maps to exit status 2."""


def _json_dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


# -- setup -------------------------------------------------------------------

class Context:
    """Resolved configuration plus paths for one invocation."""

    def __init__(self, args):
        raw, cfg = load_config(args.config)
        base = Path(args.config).resolve().parent if args.config else Path.cwd()
        paths = raw["paths"]
        self.atmos_dir = base / paths["atmos_dir"]
        self.network = base / paths["network"]
        self.out_dir = Path(args.out) if args.out else base / paths["out_dir"]
        overrides = {}
        if getattr(args, "runs", None) is not None:
            overrides["n_runs"] = args.runs
        if getattr(args, "seed", None) is not None:
            overrides["seed"] = args.seed
        if getattr(args, "workers", None) is not None:
            overrides["workers"] = args.workers
        if getattr(args, "filters", None):
            overrides["filters"] = _parse_filters(args.filters)
        self.cfg: McConfig = cfg.replace(**overrides) if overrides else cfg
        self.raw = raw
        logging.basicConfig(level=getattr(logging, str(raw["log_level"]).upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s")


def _parse_filters(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    unknown = [n for n in names if n not in FILTER_NAMES]
    if not names or unknown:
        raise ConfigError(f"--filters must be a comma list of {', '.join(FILTER_NAMES)}")
    return names


def _load_profiles(atmos_dir: Path):
    if not atmos_dir.is_dir():
        raise UsageError(f"atmosphere directory not found: {atmos_dir}")
    files = sorted(atmos_dir.glob("atmos_*.csv"))
    if not files:
        raise UsageError(f"no atmos_*.csv profiles in {atmos_dir}")
    return [TabulatedProfile.from_csv(f) for f in files]


def _fit_from_dir(atmos_dir: Path) -> ExpModel:
    return fit_exponential(_load_profiles(atmos_dir))


def _onboard_models(ctx: Context) -> OnboardModels:
    fit = _fit_from_dir(ctx.atmos_dir)
    net = None
    if "uskf_nn" in ctx.cfg.filters:
        if not ctx.network.is_file():
            raise UsageError(f"trained network not found: {ctx.network} (run `train` first)")
        net = MlpDensityNet.load(ctx.network)
    return OnboardModels(fit, net)


# -- commands ----------------------------------------------------------------

def cmd_gen_atmos(ctx: Context, args) -> int:
    n = ctx.cfg.n_train_profiles if args.n is None else args.n
    seed = 0 if args.seed is None else args.seed
    if n < 0 or n > MAX_PROFILES_PER_SEED or seed < 0:
        raise UsageError(f"need 0 <= n <= {MAX_PROFILES_PER_SEED} and seed >= 0")
    first = ctx.cfg.train_seed_base + seed * MAX_PROFILES_PER_SEED
    if first + n > ctx.cfg.test_seed_base:
        raise UsageError("generator seeds would overlap the testing range")
    out = Path(args.out) if args.out else ctx.atmos_dir
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        name = f"atmos_{seed:04d}_{i:03d}.csv"
        sample_truth_atmosphere(first + i, ctx.cfg.atmosphere).to_csv(out / name)
        entries.append({"file": name, "generator_seed": first + i})
    _json_dump({"seed": seed, "n": n, "profiles": entries}, out / "manifest.json")
    print(f"wrote {n} profiles to {out}")
    return EXIT_OK


def cmd_fit_exp(ctx: Context, args) -> int:
    fit = _fit_from_dir(ctx.atmos_dir)
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    _json_dump({"rho0": fit.rho0, "r0": fit.r0, "hs": fit.hs}, ctx.out_dir / "exp_fit.json")
    print(f"rho0 = {fit.rho0:.6e} kg/m^3, r0 = {fit.r0:.1f} m, hs = {fit.hs:.2f} m")
    return EXIT_OK


def cmd_train(ctx: Context, args) -> int:
    fit = _fit_from_dir(ctx.atmos_dir)
    cfg = ctx.cfg
    seed = cfg.offline.seed if args.seed is None else args.seed
    t0 = time.perf_counter()
    res = offline_train(fit, cfg.entry_mean, cfg.entry_sigma, cfg.vehicle, cfg.offline, seed)
    log.info("training took %.1f s", time.perf_counter() - t0)
    net_path = Path(args.out) / "network.json" if args.out else ctx.network
    net_path.parent.mkdir(parents=True, exist_ok=True)
    res.net.save(net_path)
    edges = np.array([0.0, 1e-4, 1e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, np.inf])
    counts, _ = np.histogram(res.val_rel_err, bins=edges)
    report = {
        "seed": seed,
        "exp_fit": {"rho0": fit.rho0, "r0": fit.r0, "hs": fit.hs},
        "train_loss": res.train_loss,
        "val_loss": res.val_loss,
        "val_frac_below_1pct": res.frac_below_1pct,
        "val_rel_err_hist": {"edges": [e if math.isfinite(e) else "inf" for e in edges],
                             "counts": counts.tolist()},
    }
    _json_dump(report, net_path.parent / "training_report.json")
    print(f"network written to {net_path}")
    print(f"validation samples with <1% density error: {100 * res.frac_below_1pct:.2f}%")
    return EXIT_OK


def cmd_simulate(ctx: Context, args) -> int:
    cfg = ctx.cfg
    models = _onboard_models(ctx)
    seed = cfg.seed if args.seed is None else args.seed
    run = run_case(cfg, seed, models)
    out = ctx.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = "t_s,r_m,phi_rad,theta_rad,v_ms,gamma_rad,psi_rad,B_m2kg,LoD,rho_true"
    np.savetxt(out / "truth.csv", np.column_stack([run.t, run.x_true, run.rho_true]),
               delimiter=",", header=header, comments="", fmt="%.17g")
    write_measurements(out / "measurements.csv", run.t, run.meas)
    summary = {"run_seed": int(seed), "epochs": len(run.t), "filters": {}}
    for name, tr in run.traces.items():
        write_filter_log(out / f"filter_{name}.csv", run.t, tr, run.rho_true)
        summary["filters"][name] = {"failed": tr.failed, "fail_epoch": tr.fail_epoch,
                                    "error": tr.error}
    _json_dump(summary, out / "run.json")
    print(f"simulated {len(run.t)} epochs; logs in {out}")
    return EXIT_RUNTIME if run.failed else EXIT_OK


def format_tables(summary: dict) -> str:
    filters = summary["filters"]
    lines = ["Time-averaged RMSE", f"{'state':<8}{'unit':<8}" + "".join(f"{f:>14}" for f in filters)]
    for s in STATE_NAMES:
        scale = 180.0 / math.pi if s in _DEG_STATES else 1.0
        vals = "".join(f"{summary['rmse'][f][s] * scale:>14.4e}" for f in filters)
        lines.append(f"{s:<8}{_UNITS[s]:<8}{vals}")
    lines += ["", "Density RMSPE (%)"]
    lines += [f"{f:<16}{summary['rmspe_pct'][f]:>14.4f}" for f in filters]
    lines += ["", f"runs used: {summary['runs_used']} of {summary['n_runs']}"]
    for f in filters:
        if summary["failures"][f]:
            lines.append(f"{f}: {len(summary['failures'][f])} failed runs")
    return "\n".join(lines)


def cmd_montecarlo(ctx: Context, args) -> int:
    cfg = ctx.cfg
    models = _onboard_models(ctx)
    t0 = time.perf_counter()
    report = run_montecarlo(
        cfg, models, progress=lambda i, n: log.info("run %d/%d (%.0f s)", i, n,
                                                    time.perf_counter() - t0))
    out = report.write(ctx.out_dir)
    summary = report.summary()
    print(format_tables(summary))
    print(f"report written to {out}")
    failed = report.n_runs - int(report.used.sum())
    return EXIT_RUNTIME if failed > FAIL_FRACTION_LIMIT * report.n_runs else EXIT_OK


def cmd_report(ctx: Context, args) -> int:
    path = ctx.out_dir / "summary.json"
    if not path.is_file():
        raise UsageError(f"no summary at {path}")
    print(format_tables(json.loads(path.read_text())))
    return EXIT_OK


COMMANDS = {
    "gen-atmos": cmd_gen_atmos,
    "fit-exp": cmd_fit_exp,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")

    p = argparse.ArgumentParser(prog="entrynav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen-atmos", parents=[common], help="generate surrogate atmospheres")
    g.add_argument("--n", type=int, help="number of profiles (default from config)")
    g.add_argument("--seed", type=int)
    sub.add_parser("fit-exp", parents=[common], help="fit the onboard exponential model")
    t = sub.add_parser("train", parents=[common], help="offline network training")
    t.add_argument("--seed", type=int)
    for name, text in (("simulate", "one run with per-epoch logs"),
                       ("montecarlo", "Monte Carlo campaign")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--seed", type=int)
        s.add_argument("--filters", metavar="LIST", help="comma list, e.g. ukf_ac,uskf_nn")
        if name == "montecarlo":
            s.add_argument("--runs", type=int)
            s.add_argument("--workers", type=int)
    sub.add_parser("report", parents=[common], help="print tables from a saved summary")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args)
        return COMMANDS[args.command](ctx, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EntryNavError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
