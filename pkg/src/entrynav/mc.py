"""Monte Carlo harness: per-run truth, shared measurement stream, metrics.

Every run draws its own surrogate atmosphere, initial conditions, process
noise and sensor noise from seeds derived from the campaign seed. All enabled
filters consume the same measurement stream. Metrics are computed over the
runs in which no enabled filter failed, so the comparison is always on a
common set of runs.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atmos import ExpModel, sample_truth_atmosphere
from .config import FILTER_NAMES, McConfig
from .dynamics import N_STATE, R, STATE_NAMES, propagate_truth
from .errors import CovarianceError, EntryNavError
from .filters.ukf_ac import EntryUkfAC
from .filters.ukf_cm import EntryUkfCM
from .filters.uskf_nn import EntryUskfNN
from .net import MlpDensityNet
from .sensors import measure_noisy_array

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = 1
MEAS_HEADER = "t_s,ax,ay,az,q_pa,qdot_wm2"


@dataclass(frozen=True, eq=False)
class OnboardModels:
    """What the filters are allowed to know: the exponential fit and the trained net."""

    fit: ExpModel
    net: MlpDensityNet | None = None


def sample_initial_state(cfg: McConfig, rng):
    """Draw ``(truth_x0, filter_x0, P0)`` for one run.

    The truth is the entry mean plus Gaussian dispersion; the filter's
    initial estimate is drawn around the truth with the same covariance.
    """
    truth = cfg.entry_mean + cfg.entry_sigma * rng.standard_normal(N_STATE)
    est = truth + cfg.entry_sigma * rng.standard_normal(N_STATE)
    return truth, est, cfg.P0


def run_seeds(cfg: McConfig) -> np.ndarray:
    """Per-run seeds split deterministically from the campaign seed."""
    return np.random.SeedSequence(cfg.seed).generate_state(cfg.n_runs).astype(np.int64)


@dataclass
class FilterTrace:
    name: str
    x_hat: np.ndarray
    sigma: np.ndarray
    rho_hat: np.ndarray
    loss_pre: np.ndarray
    loss_post: np.ndarray
    mlo_iters: np.ndarray
    failed: bool = False
    fail_epoch: int | None = None
    error: str | None = None
    consider_violations: int = 0

    @classmethod
    def empty(cls, name, n):
        nan = lambda *s: np.full(s, np.nan)  # noqa: E731
        return cls(name, nan(n, N_STATE), nan(n, N_STATE), nan(n), nan(n), nan(n),
                   np.zeros(n, dtype=int))


@dataclass
class RunResult:
    run_seed: int
    t: np.ndarray
    x_true: np.ndarray
    rho_true: np.ndarray
    meas: np.ndarray
    traces: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(tr.failed for tr in self.traces.values())


def build_filter(name: str, cfg: McConfig, models: OnboardModels, x0, P0, k0: float):
    if name == "ukf_cm":
        return EntryUkfCM(x0, P0, cfg.Q, models.fit, cfg.vehicle, cfg.noise,
                          n_sub=cfg.filter_substeps, ut=cfg.ut(N_STATE),
                          batch_size=cfg.cm_batch_size, psd_projection=cfg.cm_psd_projection)
    if name == "ukf_ac":
        return EntryUkfAC(x0, P0, k0, models.fit, cfg.vehicle, cfg.noise, cfg.Q,
                          p_k0=cfg.ac_P_K0, q_k=cfg.ac_Q_K, n_sub=cfg.filter_substeps,
                          ut=cfg.ut(N_STATE + 1))
    if name == "uskf_nn":
        if models.net is None:
            raise EntryNavError("uskf_nn needs a trained network")
        return EntryUskfNN(x0, P0, models.net, cfg.Q, cfg.vehicle, cfg.noise, cfg.ecrv,
                           cfg.mlo, adapt=cfg.adapt, n_sub=cfg.filter_substeps,
                           ut=cfg.ut(N_STATE + 1))
    raise EntryNavError(f"unknown filter {name!r}")


def _run_filter(f, meas, dt, trace: FilterTrace):
    for k, y in enumerate(meas):
        try:
            x, P = f.epoch(y, dt)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
                raise CovarianceError("non-finite estimate")
            trace.x_hat[k] = x
            trace.sigma[k] = np.sqrt(np.clip(np.diag(P), 0.0, None))
            trace.rho_hat[k] = f.rho_hat
        except (EntryNavError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            trace.failed, trace.fail_epoch, trace.error = True, k, f"{type(exc).__name__}: {exc}"
            log.warning("%s failed at epoch %d: %s", trace.name, k, trace.error)
            return trace
        last = getattr(f, "last", None)
        if last is not None:
            trace.loss_pre[k], trace.loss_post[k], trace.mlo_iters[k] = (
                last.loss_pre, last.loss_post, last.iters)
    trace.consider_violations = getattr(f, "consider_violations", 0)
    return trace


def run_case(cfg: McConfig, run_seed: int, models: OnboardModels) -> RunResult:
    """Simulate one truth trajectory and run every enabled filter on it."""
    ic_ss, proc_ss, meas_ss = np.random.SeedSequence(int(run_seed)).spawn(3)
    ic_rng, meas_rng = np.random.default_rng(ic_ss), np.random.default_rng(meas_ss)
    atmosphere = sample_truth_atmosphere(cfg.test_seed_base + int(run_seed), cfg.atmosphere)
    x_truth0, x_filt0, P0 = sample_initial_state(cfg, ic_rng)
    traj = propagate_truth(x_truth0, atmosphere, cfg.vehicle, cfg.dt_truth, cfg.t_end,
                           q_std=cfg.q_sigma, seed=proc_ss, sensor_dt=cfg.sensor_dt)
    x_true, rho_true = traj.x[1:], traj.rho[1:]
    meas = measure_noisy_array(x_true, rho_true, cfg.vehicle, cfg.noise, meas_rng)
    k0 = float(atmosphere.density(x_truth0[R]) / models.fit.density(x_truth0[R]))

    result = RunResult(int(run_seed), traj.t[1:], x_true, rho_true, meas)
    for name in cfg.filters:
        trace = FilterTrace.empty(name, len(meas))
        try:
            f = build_filter(name, cfg, models, x_filt0, P0, k0)
        except (EntryNavError, np.linalg.LinAlgError, ValueError) as exc:
            trace.failed, trace.fail_epoch, trace.error = True, 0, str(exc)
        else:
            _run_filter(f, meas, cfg.sensor_dt, trace)
        result.traces[name] = trace
    return result


# -- metrics -----------------------------------------------------------------

def _check_aligned(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def compute_rmse(truth, est):
    """Per-epoch Monte Carlo mean of absolute error, and its time average.

    ``truth`` and ``est`` are ``(n_runs, n_epochs, n_states)``. Returns
    ``(series, average)`` with shapes ``(n_epochs, n_states)`` and ``(n_states,)``.
    """
    truth, est = np.asarray(truth, dtype=float), np.asarray(est, dtype=float)
    _check_aligned(truth, est)
    series = np.sqrt((est - truth) ** 2).mean(axis=0)
    return series, series.mean(axis=0)


def compute_rmspe(rho_true, rho_hat):
    """Percentage counterpart of :func:`compute_rmse` for density ``(n_runs, n_epochs)``."""
    rho_true, rho_hat = np.asarray(rho_true, dtype=float), np.asarray(rho_hat, dtype=float)
    _check_aligned(rho_true, rho_hat)
    if np.any(rho_true <= 0):
        raise ValueError("true density must be positive")
    series = 100.0 * np.sqrt(((rho_true - rho_hat) / rho_true) ** 2).mean(axis=0)
    return series, float(series.mean())


def coverage_3sigma(errors, sigmas):
    """Fraction of (run, epoch) pairs with ``|error| <= 3 sigma``, per state."""
    errors, sigmas = np.asarray(errors, dtype=float), np.asarray(sigmas, dtype=float)
    _check_aligned(errors, sigmas)
    inside = np.abs(errors) <= 3.0 * sigmas
    return inside.reshape(-1, inside.shape[-1]).mean(axis=0)


@dataclass
class McReport:
    filters: tuple
    t: np.ndarray
    n_runs: int
    run_seeds: np.ndarray
    used: np.ndarray
    rmse: dict
    rmse_series: dict
    rmspe: dict
    rmspe_series: dict
    coverage: dict
    failures: dict
    consider_violations: int
    rho_true: np.ndarray
    rho_hat: dict
    errors: dict

    def ranking(self):
        """Filters ordered by density RMSPE, best first."""
        return sorted(self.filters, key=lambda n: (not math.isfinite(self.rmspe[n]),
                                                   self.rmspe[n]))

    def summary(self) -> dict:
        return {
            "schema": SUMMARY_SCHEMA,
            "n_runs": self.n_runs,
            "runs_used": int(self.used.sum()),
            "filters": list(self.ranking()),
            "rmse": {n: dict(zip(STATE_NAMES, map(float, self.rmse[n]))) for n in self.filters},
            "rmspe_pct": {n: float(self.rmspe[n]) for n in self.filters},
            "coverage_3sigma": {n: dict(zip(STATE_NAMES, map(float, self.coverage[n])))
                                for n in self.filters},
            "failures": {n: self.failures[n] for n in self.filters},
            "consider_violations": int(self.consider_violations),
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")
        cols = [n for n in FILTER_NAMES]
        with open(out / "rmse_series.csv", "w") as fh:
            fh.write("t_s,state," + ",".join(cols) + "\n")
            for k, t in enumerate(self.t):
                for j, s in enumerate(STATE_NAMES):
                    vals = [self.rmse_series[n][k, j] if n in self.filters else math.nan
                            for n in cols]
                    fh.write(f"{t:.2f},{s}," + ",".join(f"{v:.10g}" for v in vals) + "\n")
        nan_runs = np.full_like(self.rho_true, np.nan)
        ac = self.rho_hat.get("ukf_ac", nan_runs)
        nn = self.rho_hat.get("uskf_nn", nan_runs)
        with open(out / "density.csv", "w") as fh:
            fh.write("run,t_s,rho_true,rho_hat_ac,rho_hat_nn\n")
            for i in range(self.rho_true.shape[0]):
                for k, t in enumerate(self.t):
                    fh.write(f"{i},{t:.2f},{self.rho_true[i, k]:.10g},{ac[i, k]:.10g},"
                             f"{nn[i, k]:.10g}\n")
        return out


def assemble_report(cfg: McConfig, results: list[RunResult]) -> McReport:
    """Ordered reduction of per-run results into campaign metrics."""
    filters = tuple(cfg.filters)
    used = np.array([not r.failed for r in results])
    t = results[0].t
    x_true = np.stack([r.x_true for r in results])
    rho_true = np.stack([r.rho_true for r in results])
    rmse, rmse_series, rmspe, rmspe_series, coverage, failures = {}, {}, {}, {}, {}, {}
    rho_hat, errors = {}, {}
    violations = 0
    for name in filters:
        tr = [r.traces[name] for r in results]
        x_hat = np.stack([x.x_hat for x in tr])
        sig = np.stack([x.sigma for x in tr])
        rho_hat[name] = np.stack([x.rho_hat for x in tr])
        errors[name] = x_hat - x_true
        failures[name] = [{"run": i, "seed": int(r.run_seed), "epoch": x.fail_epoch,
                           "error": x.error} for i, (r, x) in enumerate(zip(results, tr))
                          if x.failed]
        violations += sum(x.consider_violations for x in tr)
        if used.any():
            rmse_series[name], rmse[name] = compute_rmse(x_true[used], x_hat[used])
            rmspe_series[name], rmspe[name] = compute_rmspe(rho_true[used], rho_hat[name][used])
            coverage[name] = coverage_3sigma(errors[name][used], sig[used])
        else:
            rmse_series[name] = np.full((len(t), N_STATE), np.nan)
            rmse[name] = np.full(N_STATE, np.nan)
            rmspe_series[name], rmspe[name] = np.full(len(t), np.nan), math.nan
            coverage[name] = np.full(N_STATE, np.nan)
    return McReport(filters, t, len(results), np.array([r.run_seed for r in results]), used,
                    rmse, rmse_series, rmspe, rmspe_series, coverage, failures, violations,
                    rho_true, rho_hat, errors)


def _run_one(args):
    cfg, seed, models = args
    return run_case(cfg, seed, models)


def run_montecarlo(cfg: McConfig, models: OnboardModels, progress=None) -> McReport:
    """Execute ``cfg.n_runs`` independent runs and reduce them to a report.

    With ``cfg.workers > 1`` the runs execute in a process pool; results are
    collected in submission order, so the report does not depend on scheduling.
    """
    seeds = run_seeds(cfg)
    jobs = [(cfg, int(s), models) for s in seeds]
    results = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for i, res in enumerate(pool.map(_run_one, jobs)):
                results.append(res)
                if progress:
                    progress(i + 1, len(jobs))
    else:
        for i, job in enumerate(jobs):
            results.append(_run_one(job))
            if progress:
                progress(i + 1, len(jobs))
    return assemble_report(cfg, results)


def write_filter_log(path, t, trace: FilterTrace, rho_true):
    names = STATE_NAMES
    header = ",".join(["t_s", *(f"{n}_hat" for n in names), *(f"{n}_sigma" for n in names),
                       "rho_hat", "rho_true", "loss_pre", "loss_post", "mlo_iters"])
    data = np.column_stack([t, trace.x_hat, trace.sigma, trace.rho_hat, rho_true,
                            trace.loss_pre, trace.loss_post, trace.mlo_iters])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12g")


def write_measurements(path, t, meas):
    np.savetxt(path, np.column_stack([t, meas]), delimiter=",", header=MEAS_HEADER,
               comments="", fmt="%.12g")
