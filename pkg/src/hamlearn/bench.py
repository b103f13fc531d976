"""Multi-trial benchmarks: per-trial records, aggregation and CSV output."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .crb import InfoMatrix, bcrb_step, bound_trace, prior_info
from .design import DesignConfig, estimate_adaptive, guess_times, scale_matrix
from .errors import InvalidArgumentError, PriorSamplingError
from .models import ExperimentControl, make_model
from .region import ellipse_region
from .smc import GaussianPrior, ResampleConfig, cov, init_cloud, mean

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "BenchmarkConfig",
    "load_config",
    "trial_seed",
    "TrialRow",
    "TrialRecord",
    "SummaryRow",
    "run_trial",
    "aggregate",
    "cost_table",
    "run_benchmark",
    "BenchmarkResult",
    "write_trials_csv",
    "write_summary_csv",
    "write_cost_csv",
    "bcrb_schedule",
    "bcrb_columns",
    "TRIAL_COLUMNS",
    "SUMMARY_COLUMNS",
    "COST_COLUMNS",
]

TRIAL_COLUMNS = (
    "trial_id", "seed", "N", "chosen_time", "outcome", "loss_q", "posterior_var_trace_q",
    "bcrb_trace_q", "region_mass", "region_volume", "likelihood_calls",
)
SUMMARY_COLUMNS = (
    "N", "mean_loss", "stderr_loss", "median_loss", "q84_loss", "band_lo_16", "band_hi_84",
    "mean_posterior_var", "mean_bcrb", "n_collapsed",
)
COST_COLUMNS = ("N", "mean_likelihood_calls", "mean_loss", "median_loss", "q84_loss")

BCRB_MODES = ("posterior", "initial_prior")


class ConfigError(ValueError):
    """Malformed benchmark configuration; the message names the line or field."""


# -- configuration ---------------------------------------------------------------


@dataclass
class BenchmarkConfig:
    model: str
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    n_particles: int = 1000
    n_experiments: int = 100
    n_trials: int = 1
    base_seed: int = 0
    model_params: dict = field(default_factory=dict)
    true_mean: np.ndarray | None = None
    true_cov: np.ndarray | None = None
    design: DesignConfig = field(default_factory=DesignConfig)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    q: np.ndarray | None = None
    z_score: float = 3.0
    bcrb_mode: str = "posterior"

    def __post_init__(self):
        self.prior_mean = np.atleast_1d(np.asarray(self.prior_mean, dtype=float))
        self.prior_cov = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        d = self.prior_mean.size
        self.true_mean = self.prior_mean if self.true_mean is None else np.atleast_1d(np.asarray(self.true_mean, float))
        self.true_cov = self.prior_cov if self.true_cov is None else np.atleast_2d(np.asarray(self.true_cov, float))
        self.q = scale_matrix(np.eye(d) if self.q is None else self.q, d)
        for name in ("n_particles", "n_trials"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
        if int(self.n_experiments) != self.n_experiments or self.n_experiments < 0:
            raise InvalidArgumentError(f"n_experiments must be a nonnegative integer, got {self.n_experiments!r}")
        if self.bcrb_mode not in BCRB_MODES:
            raise InvalidArgumentError(f"bcrb_mode must be one of {BCRB_MODES}, got {self.bcrb_mode!r}")
        if not self.z_score > 0:
            raise InvalidArgumentError(f"z_score must be positive, got {self.z_score!r}")
        model = self.build_model()
        if model.dimension != d:
            raise InvalidArgumentError(f"model {self.model!r} has {model.dimension} parameters, prior has {d}")
        self.design.check_particles(self.n_particles)
        # Constructing both distributions validates their covariances.
        GaussianPrior(self.prior_mean, self.prior_cov)
        GaussianPrior(self.true_mean, self.true_cov)

    def build_model(self):
        return make_model(self.model, **self.model_params)

    @property
    def prior(self) -> GaussianPrior:
        return GaussianPrior(self.prior_mean, self.prior_cov)

    @property
    def true_distribution(self) -> GaussianPrior:
        return GaussianPrior(self.true_mean, self.true_cov)

    def replace(self, **changes) -> BenchmarkConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return BenchmarkConfig(**values)

    @classmethod
    def from_dict(cls, doc: dict) -> BenchmarkConfig:
        """Build a config from a parsed document, reporting the offending field on error."""
        doc = dict(doc)
        known = {"model", "model_params", "prior", "true_params", "n_particles", "n_experiments",
                 "n_trials", "base_seed", "design", "resample", "q", "q_diag", "z_score", "bcrb_mode"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
        for required in ("model", "prior"):
            if required not in doc:
                raise ConfigError(f"missing required field {required!r}")

        def section(name, allowed):
            sec = doc.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(f"field {name!r} must be a table")
            extra = set(sec) - set(allowed)
            if extra:
                raise ConfigError(f"unknown field(s) in {name!r}: {', '.join(f'{name}.{k}' for k in sorted(extra))}")
            return sec

        prior = section("prior", ("mean", "cov"))
        truth = section("true_params", ("mean", "cov"))
        design = section("design", ("n_guesses", "approx_ratio", "utility", "optimizer", "heuristic",
                                    "heuristic_scale", "guess_index", "nv_prior_weights"))
        resample = section("resample", ("a", "threshold"))
        model_params = section("model_params", ("t2",))

        def build(where, fn):
            try:
                return fn()
            except ConfigError:
                raise
            except (InvalidArgumentError, TypeError, ValueError) as exc:
                raise ConfigError(f"field {where!r}: {exc}") from None

        if "q" in doc and "q_diag" in doc:
            raise ConfigError("give only one of 'q' and 'q_diag'")
        q = np.diag(doc["q_diag"]) if "q_diag" in doc else doc.get("q")
        design_cfg = build("design", lambda: DesignConfig(
            n_guesses=design.get("n_guesses", 1),
            approx_ratio=float(design.get("approx_ratio", 1.0)),
            utility_kind=design.get("utility", "negative_variance"),
            optimizer_kind=design.get("optimizer", "null"),
            heuristic_kind=design.get("heuristic", "exponential_time"),
            heuristic_scale=float(design.get("heuristic_scale", 1.0)),
            guess_index=design.get("guess_index", "experiment"),
            nv_prior_weights=bool(design.get("nv_prior_weights", False)),
        ))
        resample_cfg = build("resample", lambda: ResampleConfig(
            a=float(resample.get("a", 0.98)), resample_threshold=float(resample.get("threshold", 0.5))
        ))
        for key in ("mean", "cov"):
            if key not in prior:
                raise ConfigError(f"missing required field 'prior.{key}'")
        return build("<config>", lambda: cls(
            model=doc["model"],
            model_params=dict(model_params),
            prior_mean=build("prior.mean", lambda: np.asarray(prior["mean"], dtype=float)),
            prior_cov=build("prior.cov", lambda: np.asarray(prior["cov"], dtype=float)),
            true_mean=truth.get("mean"),
            true_cov=truth.get("cov"),
            n_particles=doc.get("n_particles", 1000),
            n_experiments=doc.get("n_experiments", 100),
            n_trials=doc.get("n_trials", 1),
            base_seed=doc.get("base_seed", 0),
            design=design_cfg,
            resample=resample_cfg,
            q=q,
            z_score=float(doc.get("z_score", 3.0)),
            bcrb_mode=doc.get("bcrb_mode", "posterior"),
        ))


def load_config(path) -> BenchmarkConfig:
    """Read a TOML (default) or JSON (``.json``) benchmark config."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    else:
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    try:
        return BenchmarkConfig.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def trial_seed(base_seed: int, trial_id: int) -> int:
    """64-bit per-trial seed mixed from ``(base_seed, trial_id)`` by numpy's SeedSequence."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(trial_id),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -- trials ----------------------------------------------------------------------


class TrialRow(NamedTuple):
    trial_id: int
    seed: int
    N: int
    chosen_time: float | None
    outcome: int | None
    loss_q: float
    posterior_var_trace_q: float
    bcrb_trace_q: float | None
    region_mass: float
    region_volume: float
    likelihood_calls: int


@dataclass
class TrialRecord:
    trial_id: int
    seed: int
    true_params: np.ndarray
    rows: list
    collapsed: bool = False
    # Likelihood calls spent on the bound and other diagnostics, kept apart
    # from the estimator's own cost.
    diagnostic_likelihood_calls: int = 0


def _sample_valid(sampler, model, rng, max_tries=100):
    for _ in range(max_tries):
        x = sampler(rng, 1)[0]
        if model.are_valid(x[None, :])[0]:
            return x
    raise PriorSamplingError(f"could not draw valid true parameters for {model.name!r}")


def _quadratic_loss(x, estimate, q):
    diff = np.asarray(x) - np.asarray(estimate)
    return float(diff @ q @ diff)


def run_trial(cfg: BenchmarkConfig, trial_id: int, snapshots=None) -> TrialRecord:
    """Run one seeded trial and record diagnostics after every experiment.

    Random draws, in order: true parameters, initial particles, then the
    per-experiment stream documented in :func:`estimate_adaptive`. When
    ``snapshots`` is a list, the cloud after each experiment (starting with
    the initial cloud) is appended to it.
    """
    seed = trial_seed(cfg.base_seed, trial_id)
    rng = np.random.default_rng(seed)
    model = cfg.build_model()
    diag_model = cfg.build_model()
    prior = cfg.prior
    q = cfg.q

    x_true = _sample_valid(cfg.true_distribution, model, rng)
    cloud0 = init_cloud(cfg.n_particles, prior, rng, model)
    try:
        info = prior_info(prior)
    except InvalidArgumentError:
        info = InfoMatrix(np.zeros((model.dimension, model.dimension)))

    def row(n_exp, cloud, time, outcome, bound_tr):
        region = ellipse_region(cloud, cfg.z_score)
        return TrialRow(
            trial_id, seed, n_exp, time, outcome,
            _quadratic_loss(x_true, mean(cloud), q),
            float(np.trace(q @ cov(cloud))),
            bound_tr,
            region.mass(cloud),
            region.volume(),
            model.likelihood_calls,
        )

    rows = [row(0, cloud0, None, None, bound_trace(info.inverse(), q))]
    if snapshots is not None:
        snapshots.append(cloud0)
    state = {"info": info}

    def on_step(step, before, after):
        expectation_cloud = before if cfg.bcrb_mode == "posterior" else cloud0
        state["info"], bound = bcrb_step(state["info"], diag_model, expectation_cloud, ExperimentControl(step.time))
        rows.append(row(step.index, after, step.time, step.outcome, bound_trace(bound, q)))
        if snapshots is not None:
            snapshots.append(after)

    result = estimate_adaptive(
        model, cfg.design, cfg.n_particles, prior, cfg.n_experiments, cfg.resample, rng,
        true_params=x_true, q=q, on_step=on_step, initial_cloud=cloud0,
    )
    if result.collapsed:
        log.warning("trial %d collapsed: %s", trial_id, result.collapse)
    return TrialRecord(trial_id, seed, x_true, rows, result.collapsed, diag_model.likelihood_calls)


# -- aggregation -----------------------------------------------------------------


class SummaryRow(NamedTuple):
    N: int
    mean_loss: float
    stderr_loss: float
    median_loss: float
    q84_loss: float
    band_lo_16: float
    band_hi_84: float
    mean_posterior_var: float
    mean_bcrb: float | None
    n_collapsed: int


def _percentiles(values, qs):
    # Linear interpolation between order statistics.
    return np.percentile(values, qs, method="linear")


def aggregate(records) -> list:
    """Per-experiment-index summary over the trials that did not collapse."""
    if not records:
        raise InvalidArgumentError("need at least one trial record")
    good = [r for r in records if not r.collapsed]
    n_collapsed = len(records) - len(good)
    n_rows = max((len(r.rows) for r in good), default=0)
    summary = []
    for k in range(n_rows):
        rows = [r.rows[k] for r in good if len(r.rows) > k]
        loss = np.array([r.loss_q for r in rows])
        var = np.array([r.posterior_var_trace_q for r in rows])
        bounds = np.array([r.bcrb_trace_q for r in rows if r.bcrb_trace_q is not None])
        lo, med, q84 = _percentiles(loss, [16, 50, 84])
        stderr = float(loss.std(ddof=1) / math.sqrt(loss.size)) if loss.size > 1 else 0.0
        summary.append(SummaryRow(
            rows[0].N, float(loss.mean()), stderr, float(med), float(q84), float(lo), float(q84),
            float(var.mean()), float(bounds.mean()) if bounds.size else None, n_collapsed,
        ))
    return summary


def cost_table(records) -> list:
    """Loss against cumulative likelihood calls, per experiment index."""
    good = [r for r in records if not r.collapsed]
    n_rows = max((len(r.rows) for r in good), default=0)
    table = []
    for k in range(n_rows):
        rows = [r.rows[k] for r in good if len(r.rows) > k]
        loss = np.array([r.loss_q for r in rows])
        calls = np.array([r.likelihood_calls for r in rows], dtype=float)
        med, q84 = _percentiles(loss, [50, 84])
        table.append((rows[0].N, float(calls.mean()), float(loss.mean()), float(med), float(q84)))
    return table


# -- output ----------------------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "" if math.isnan(value) else repr(value)


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for r in rows:
                writer.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc.strerror or exc}") from exc


def write_trials_csv(path, records):
    _write_csv(path, TRIAL_COLUMNS, (row for rec in records for row in rec.rows))


def write_summary_csv(path, summary):
    _write_csv(path, SUMMARY_COLUMNS, summary)


def write_cost_csv(path, table):
    _write_csv(path, COST_COLUMNS, table)


@dataclass
class BenchmarkResult:
    records: list
    summary: list
    cost: list


def _run_one(args):
    cfg, trial_id = args
    return run_trial(cfg, trial_id)


def run_benchmark(cfg: BenchmarkConfig, out_dir=None, workers=1) -> BenchmarkResult:
    """Run ``cfg.n_trials`` trials, aggregate, and optionally write CSVs.

    Trials are independent and seeded by ``trial_seed(base_seed, trial_id)``,
    so any ``workers`` count produces the same records.
    Writes ``trials.csv``, ``summary.csv`` and ``cost.csv`` into ``out_dir``.
    """
    jobs = [(cfg, i) for i in range(cfg.n_trials)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = [_run_one(job) for job in jobs]
    records.sort(key=lambda r: r.trial_id)
    summary = aggregate(records)
    cost = cost_table(records)
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise OSError(f"could not create output directory {out_dir}: {exc.strerror or exc}") from exc
        write_trials_csv(out_dir / "trials.csv", records)
        write_summary_csv(out_dir / "summary.csv", summary)
        write_cost_csv(out_dir / "cost.csv", cost)
    return BenchmarkResult(records, summary, cost)


def bcrb_schedule(cfg: BenchmarkConfig, seed=None):
    """Bound along a fixed heuristic schedule, without simulating outcomes.

    Experiment ``k`` uses the first heuristic guess for ``k``; expectations
    are over an initial prior cloud. Returns rows ``(N, time, Tr(Q B), diag(B)...)``.
    """
    rng = np.random.default_rng(trial_seed(cfg.base_seed if seed is None else seed, 0))
    model = cfg.build_model()
    prior = cfg.prior
    cloud = init_cloud(cfg.n_particles, prior, rng, model)
    info = prior_info(prior)
    bound = info.inverse()
    d = model.dimension
    rows = [(0, None, bound_trace(bound, cfg.q), *np.diag(bound))]
    for k in range(1, cfg.n_experiments + 1):
        t = float(guess_times(cfg.design.heuristic_kind, k, rng, cfg.design.heuristic_scale, 1)[0])
        info, bound = bcrb_step(info, model, cloud, ExperimentControl(t))
        diag = np.diag(bound) if bound is not None else [None] * d
        rows.append((k, t, bound_trace(bound, cfg.q), *diag))
    return rows


def bcrb_columns(model) -> tuple:
    return ("N", "time", "bcrb_trace_q", *(f"bound_{n}" for n in model.descriptor.parameter_names))

