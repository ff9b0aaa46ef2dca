"""Config-driven experiment runner with reproducible parallel replicas and
CSV/JSON outputs."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import estimators as est
from . import exterior, rk1, simulation as sim
from .linalg_core import NumericalError
from .models import ModelSpec, calibrate_centring, sample_invariant_directions, uniform_direction
from .streams import check_seed, indexed, parallel_map, replica_rng

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "CRITAFFINE_OUTPUT_DIR"

EXPERIMENTS = ("lyapunov", "sigma2", "ladder_tail", "contraction", "rnc_moments", "recurrence",
               "rk1_suite", "exterior_suite", "acceptance_all")


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


@dataclass
class ExperimentConfig:
    """One experiment run.

    ``horizon`` is the number of steps per replica (RNC horizon for
    ``rnc_moments``, pair-walk length for ``contraction``); ``replicas`` the
    number of independent replicas (pairs, ladder samples, trajectories).
    When ``calibrate_tol`` is set the model's centring shift is recomputed
    with ``calibrate_budget`` draws before the run.
    """

    experiment: str
    seed: int
    model: ModelSpec | None = None
    horizon: int = 10**4
    replicas: int = 100
    cap: int = sim.DEFAULT_LADDER_CAP
    rho: float = math.exp(-1.0)
    K: float = 20.0
    beta_grid: tuple = (3.5,)
    alpha: float = 0.4
    thresholds: est.RecurrenceThresholds = field(default_factory=est.RecurrenceThresholds)
    burn_in: int = 200
    calibrate_tol: float | None = None
    calibrate_budget: int = 10**6
    quick: bool = False
    workers: int = 1
    output_dir: str = "runs"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        try:
            self.seed = check_seed(self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        for name in ("horizon", "replicas", "cap", "workers"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if isinstance(self.calibrate_budget, bool) or not isinstance(self.calibrate_budget, int) \
                or self.calibrate_budget < 2:
            raise ConfigError("calibrate_budget must be an integer >= 2")
        if self.calibrate_tol is not None and not self.calibrate_tol > 0:
            raise ConfigError("calibrate_tol must be positive")
        if not isinstance(self.burn_in, int) or self.burn_in < 0:
            raise ConfigError("burn_in must be a nonnegative integer")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if not self.K > 0:
            raise ConfigError("K must be positive")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        self.beta_grid = tuple(float(b) for b in self.beta_grid)
        if not self.beta_grid or min(self.beta_grid) <= 0:
            raise ConfigError("beta_grid must be a nonempty list of positive reals")
        if self.experiment != "acceptance_all" and self.model is None:
            raise ConfigError(f"experiment {self.experiment} needs a model")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for required in ("experiment", "seed", "schema_version"):
            if required not in data:
                raise ConfigError(f"missing required key {required!r}")
        kw = dict(data)
        try:
            if kw.get("model") is not None:
                kw["model"] = ModelSpec.from_dict(kw["model"])
            if "thresholds" in kw:
                th = kw["thresholds"]
                tk = {f.name for f in dataclasses.fields(est.RecurrenceThresholds)}
                if not isinstance(th, dict) or set(th) - tk:
                    raise ConfigError(f"thresholds accepts only {sorted(tk)}")
                kw["thresholds"] = est.RecurrenceThresholds(**th)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if f.name == "model":
                val = None if val is None else val.to_dict()
            elif f.name == "thresholds":
                val = dataclasses.asdict(val)
            elif isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out


def config_schema() -> dict:
    """JSON-schema-like description of the config file."""
    from .models import B_LAWS, FAMILIES
    model_fields = {f.name: str(f.type) for f in dataclasses.fields(ModelSpec)}
    return {
        "schema_version": SCHEMA_VERSION,
        "required": ["schema_version", "experiment", "seed"],
        "fields": {
            "experiment": {"enum": list(EXPERIMENTS)},
            "seed": "integer in [0, 2**64)",
            "model": {"fields": model_fields, "family": list(FAMILIES), "b_law": list(B_LAWS)},
            "horizon": "positive integer", "replicas": "positive integer",
            "cap": "positive integer", "rho": "real in (0, 1)", "K": "positive real",
            "beta_grid": "list of positive reals", "alpha": "positive real",
            "thresholds": {f.name: str(f.type) for f in dataclasses.fields(est.RecurrenceThresholds)},
            "burn_in": "nonnegative integer", "quick": "boolean",
            "calibrate_tol": "positive real or null", "calibrate_budget": "integer >= 2",
            "workers": "positive integer", "output_dir": "path",
        },
        "unknown_keys": "error",
    }


# ------------------------------------------------------------ replica tasks
# Each task takes (seed, key, index, ...) and rebuilds its generator from
# them, so the result depends only on the replica index.

def _task_lyapunov(args):
    seed, key, i, spec, n = args
    return est.lyapunov_replica(spec, n, replica_rng(seed, *key, i))


def _task_endpoint(args):
    seed, key, i, spec, n, burn_in = args
    return est.walk_endpoint(spec, n, replica_rng(seed, *key, i), burn_in)


def _task_ladder(args):
    seed, key, i, spec, rho, cap, burn_in = args
    rng = replica_rng(seed, *key, i)
    v0 = sample_invariant_directions(spec, rng, 1, burn_in)[0]
    return sim.ladder_time(spec, v0, rho, cap, rng)


def _task_rnc(args):
    seed, key, i, spec, horizon, checkpoints, burn_in = args
    rng = replica_rng(seed, *key, i)
    v0 = sample_invariant_directions(spec, rng, 1, burn_in)[0]
    return sim.rnc_coefficient(spec, v0, horizon, rng, checkpoints)


def _task_pair(args):
    seed, key, i, spec, n, metric, positive = args
    rng = replica_rng(seed, *key, i)
    u = uniform_direction(rng, spec.d, positive)
    v = uniform_direction(rng, spec.d, positive)
    out = np.zeros(n)
    series = sim.contraction_pair_walk(spec, u, v, n, rng, metric)
    out[:len(series)] = series
    return out


def _task_trajectory(args):
    seed, key, i, spec, n, K = args
    return sim.run_affine_trajectory(spec, np.zeros(spec.d), n, K, replica_rng(seed, *key, i))


def _task_spectrum(args):
    seed, key, i, spec, n = args
    return exterior.lyapunov_spectrum_replica(spec, n, replica_rng(seed, *key, i))


def lyapunov_replicas(spec, n, m, seed, key, workers=1) -> list[float]:
    return parallel_map(_task_lyapunov, indexed(seed, key, m, spec, n), workers)


def ladder_samples(spec, rho, cap, m, seed, key, workers=1, burn_in=200) -> list[sim.LadderSample]:
    return parallel_map(_task_ladder, indexed(seed, key, m, spec, rho, cap, burn_in), workers)


def rnc_samples(spec, horizon, checkpoints, m, seed, key, workers=1, burn_in=200) -> list[sim.RncSample]:
    return parallel_map(_task_rnc, indexed(seed, key, m, spec, horizon, list(checkpoints), burn_in), workers)


def pair_curves(spec, n, m, metric, seed, key, workers=1, positive=None) -> np.ndarray:
    """Distance curves of ``m`` random pairs; starts lie in the positive
    cone when ``positive`` (default: when the metric is Hennion's)."""
    positive = metric == "hennion" if positive is None else positive
    return np.array(parallel_map(_task_pair, indexed(seed, key, m, spec, n, metric, positive), workers))


def trajectories(spec, n, K, m, seed, key, workers=1) -> list[sim.TrajectoryStats]:
    return parallel_map(_task_trajectory, indexed(seed, key, m, spec, n, K), workers)


def endpoints(spec, n, m, seed, key, workers=1, burn_in=200) -> list[float]:
    return parallel_map(_task_endpoint, indexed(seed, key, m, spec, n, burn_in), workers)


def decade_checkpoints(horizon: int) -> list[int]:
    out = []
    h = 10
    while h < horizon:
        out.append(h)
        h *= 10
    return out + [horizon]


def trajectory_slope(stats: sim.TrajectoryStats) -> float:
    """Least-squares slope of ``ln(1 + |X_n|)`` against ``n`` over the
    second half of one trajectory."""
    steps = stats.sample_steps
    half = steps > stats.n_steps // 2
    if half.sum() < 2:
        return float("nan")
    return est._ols(steps[half], stats.log_norm_X[half])[0]


# ------------------------------------------------------------ CSV writers

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


LADDER_HEADER = ["replica_id", "value", "censored", "rho", "cap"]
RNC_HEADER = ["replica_id", "horizon", "log_value", "stabilized"]
TRAJECTORY_HEADER = ["replica_id", "return_count", "last_window_min", "median_lognorm_slope"]


def ladder_rows(samples):
    return [(i, s.value, s.censored, s.rho, s.cap) for i, s in enumerate(samples)]


def rnc_rows(samples):
    """One row per replica and recorded horizon; ``stabilized`` refers to
    the replica's full horizon."""
    rows = []
    for i, s in enumerate(samples):
        prof = dict(s.profile)
        prof[s.horizon] = s.log_value
        for h in sorted(prof):
            rows.append((i, h, prof[h], s.stabilized))
    return rows


def trajectory_rows(stats):
    return [(i, s.return_count, s.min_norm_windows[-1], trajectory_slope(s)) for i, s in enumerate(stats)]


# ------------------------------------------------------------ experiments

class ExperimentFailure(RuntimeError):
    """An experiment-level check failed (acceptance exit status 4)."""


def _require(spec: ModelSpec, families: tuple, experiment: str) -> None:
    if spec.family not in families:
        raise ConfigError(f"experiment {experiment} does not apply to family {spec.family}")


def _exp_lyapunov(cfg, key, out):
    vals = lyapunov_replicas(cfg.model, cfg.horizon, cfg.replicas, cfg.seed, key, cfg.workers)
    write_csv(out / "lyapunov_samples.csv", ["replica_id", "value"], enumerate(vals))
    return {"lyapunov": est.lyapunov_from_replicas(vals, cfg.horizon)}, {}


def _exp_sigma2(cfg, key, out):
    ends = endpoints(cfg.model, cfg.horizon, cfg.replicas, cfg.seed, key, cfg.workers, cfg.burn_in)
    write_csv(out / "sigma2_samples.csv", ["replica_id", "S_n"], enumerate(ends))
    return {"sigma2": est.sigma2_from_endpoints(ends, cfg.horizon)}, {}


def _exp_ladder(cfg, key, out):
    samples = ladder_samples(cfg.model, cfg.rho, cfg.cap, cfg.replicas, cfg.seed, key, cfg.workers,
                             cfg.burn_in)
    write_csv(out / "ladder_samples.csv", LADDER_HEADER, ladder_rows(samples))
    try:
        reports = {"tail_exponent": est.fit_tail_exponent(samples)}
    except ValueError as exc:
        raise NumericalError(f"tail fit failed: {exc}") from None
    vals = np.array([s.value for s in samples], dtype=float)
    mom = est.mean_report(vals ** cfg.alpha, alpha=cfg.alpha, cap=cfg.cap, truncated=True)
    mom.censored_fraction = float(np.mean([s.censored for s in samples]))
    reports["truncated_ladder_moment"] = mom
    return reports, {}


def _exp_contraction(cfg, key, out):
    _require(cfg.model, ("RankOne", "InvertibleProximal", "Nonnegative", "Similarity"), "contraction")
    metric = est.default_metric(cfg.model)
    curves = pair_curves(cfg.model, cfg.horizon, cfg.replicas, metric, cfg.seed, key, cfg.workers)
    write_csv(out / "contraction_mean.csv", ["step", "mean_distance"],
              ((k + 1, v) for k, v in enumerate(curves.mean(axis=0))))
    return {"contraction_rate": est.contraction_rate_from_curves(curves, metric=metric)}, {}


def _exp_rnc(cfg, key, out):
    ck = decade_checkpoints(cfg.horizon)
    samples = rnc_samples(cfg.model, cfg.horizon, ck, cfg.replicas, cfg.seed, key, cfg.workers, cfg.burn_in)
    write_csv(out / "rnc_samples.csv", RNC_HEADER, rnc_rows(samples))
    curves = est.rnc_moment_curve(samples, cfg.beta_grid)
    return {f"rnc_moment_beta_{b:g}": r for b, r in curves.items()}, {}


def _exp_recurrence(cfg, key, out):
    stats = trajectories(cfg.model, cfg.horizon, cfg.K, cfg.replicas, cfg.seed, key, cfg.workers)
    write_csv(out / "trajectory_summaries.csv", TRAJECTORY_HEADER, trajectory_rows(stats))
    try:
        verdict = est.classify_recurrence(stats, cfg.K, cfg.thresholds, replica_rng(cfg.seed, *key, 1 << 30))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return {}, {"recurrence": verdict}


def _exp_rk1(cfg, key, out):
    _require(cfg.model, ("RankOne",), "rk1_suite")
    spec = cfg.model
    rng = replica_rng(cfg.seed, *key, 0)
    n = cfg.replicas
    starts = [rk1.SignedRay.from_vector(v) for v in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0])] \
        if spec.d == 2 else [rk1.SignedRay.from_vector(np.eye(spec.d)[i]) for i in range(min(3, spec.d))]
    ks = rk1.two_step_stationarity_check(spec, starts, n, rng)
    thr = rk1.ks_threshold(n, level_coefficient=bonferroni_ks_coefficient(0.05, _pairs(len(starts) + 1)))
    reports = {
        "two_step_ks": est.EstimateReport(ks, 0.0, n, 0.0, {"threshold": thr}),
        "sigma2_closed_form": rk1.rk1_sigma2_closed_form(spec, 10 * n, rng),
        "lag2_correlation": rk1.increment_correlation(spec, 10 * n, 2, rng),
    }
    ends = endpoints(spec, cfg.horizon, n, cfg.seed, key + (1,), cfg.workers, cfg.burn_in)
    reports["sigma2_trajectory"] = est.sigma2_from_endpoints(ends, cfg.horizon)
    checks = rk1.pn_weight_check(spec, starts[0], 5, outer=min(n, 4000), inner=min(n, 4000), rng=rng)
    reports["pn_weight"] = est.EstimateReport(max(c["PnN"] / c["bound"] for c in checks), 0.0, n, 0.0,
                                              {"checks": checks})
    return reports, {}


def _exp_exterior(cfg, key, out):
    _require(cfg.model, ("Similarity", "InvertibleProximal", "Nonnegative", "Constant",
                         "DiagonalCounterexample", "PermutationCounterexample"), "exterior_suite")
    spec = cfg.model
    spectra = np.array(parallel_map(_task_spectrum, indexed(cfg.seed, key, cfg.replicas, spec, cfg.horizon),
                                    cfg.workers))
    r_hat, profile = exterior.proximal_dimension_from_spectra(spectra)
    profile["horizon"] = cfg.horizon
    reports = {"proximal_dimension": est.EstimateReport(float("nan") if r_hat is None else float(r_hat),
                                                        0.0, cfg.replicas, 0.0, profile)}
    rng = replica_rng(cfg.seed, *key, 1 << 30)
    for r in range(2, spec.d + 1):
        res = exterior.lift_lyapunov(spec, r, cfg.horizon, max(2, min(cfg.replicas, 20)), rng)
        reports[f"lift_difference_r{r}"] = res["difference"]
    return reports, {}


def _pairs(k: int) -> int:
    return k * (k - 1) // 2


def bonferroni_ks_coefficient(level: float, comparisons: int) -> float:
    """Asymptotic KS coefficient ``c`` with ``P(sqrt(nm/(n+m)) D > c) =
    level / comparisons`` (Kolmogorov tail, leading term)."""
    return math.sqrt(-0.5 * math.log(level / comparisons / 2.0))


REGISTRY = {
    "lyapunov": _exp_lyapunov,
    "sigma2": _exp_sigma2,
    "ladder_tail": _exp_ladder,
    "contraction": _exp_contraction,
    "rnc_moments": _exp_rnc,
    "recurrence": _exp_recurrence,
    "rk1_suite": _exp_rk1,
    "exterior_suite": _exp_exterior,
}


def _clean(obj):
    """Recursively convert to JSON-safe values (non-finite floats as strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _calibrated(cfg: ExperimentConfig, key: tuple) -> ExperimentConfig:
    """Copy of ``cfg`` whose model is re-centred; ``CalibrationError``
    propagates (exit status 3)."""
    try:
        spec = calibrate_centring(cfg.model, cfg.calibrate_tol, cfg.calibrate_budget,
                                  replica_rng(cfg.seed, *key, 1 << 31))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return dataclasses.replace(cfg, model=spec)


def output_dir_for(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir)


def run(cfg: ExperimentConfig) -> dict:
    """Execute ``cfg`` and write ``report.json`` plus sample CSVs.

    Returns the report dictionary.  Acceptance runs carry per-criterion
    results under ``criteria``.
    """
    out = output_dir_for(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    t0 = time.perf_counter()
    echo = cfg.to_dict()
    estimates, verdicts, extra = {}, {}, {}
    if cfg.experiment == "acceptance_all":
        from .acceptance import run_acceptance
        results = run_acceptance(cfg.seed, quick=cfg.quick, workers=cfg.workers)
        extra["criteria"] = [r.to_dict() for r in results]
        extra["all_passed"] = all(r.passed for r in results)
    else:
        key = (EXPERIMENTS.index(cfg.experiment),)
        if cfg.calibrate_tol is not None:
            cfg = _calibrated(cfg, key)
            extra["calibrated_shift"] = cfg.model.log_scale_shift
        estimates, verdicts = REGISTRY[cfg.experiment](cfg, key, out)
    report = {
        "config": echo,
        "estimates": {k: v.to_dict() for k, v in estimates.items()},
        "verdicts": {k: v.to_dict() for k, v in verdicts.items()},
        "versions": {"artifact": __version__, "config_schema": SCHEMA_VERSION},
        "wall_time_seconds": time.perf_counter() - t0,
    }
    report.update(extra)
    report = _clean(report)
    try:
        with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ConfigError(f"cannot write report: {exc}") from None
    return report


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)
