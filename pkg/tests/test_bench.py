import csv
import json
import math

import numpy as np
import pytest

from hamlearn import bench
from hamlearn.bench import (
    COST_COLUMNS,
    SUMMARY_COLUMNS,
    TRIAL_COLUMNS,
    BenchmarkConfig,
    ConfigError,
    TrialRecord,
    TrialRow,
    aggregate,
    load_config,
    run_benchmark,
    run_trial,
    trial_seed,
)
from hamlearn.design import DesignConfig
from hamlearn.errors import InvalidArgumentError


def small_cfg(**kw):
    base = dict(
        model="known_t2", prior_mean=[0.5], prior_cov=[[0.01]], n_particles=200, n_experiments=5,
        n_trials=2, base_seed=3, model_params={"t2": 100 * math.pi},
        design=DesignConfig(heuristic_kind="uniform_linear"),
    )
    base.update(kw)
    return BenchmarkConfig(**base)


def fake_record(trial_id, losses, collapsed=False):
    rows = [TrialRow(trial_id, 0, n, None, None, loss, 2 * loss, loss / 2, 1.0, 1.0, 10 * n)
            for n, loss in enumerate(losses)]
    return TrialRecord(trial_id, 0, np.zeros(1), rows, collapsed)


def test_trial_seed_is_stable_and_distinct():
    assert trial_seed(0, 0) == trial_seed(0, 0)
    seeds = {trial_seed(b, t) for b in range(3) for t in range(50)}
    assert len(seeds) == 150
    assert all(0 <= s < 2**64 for s in seeds)


def test_zero_experiments_single_row():
    cfg = small_cfg(n_experiments=0)
    rec = run_trial(cfg, 0)
    assert len(rec.rows) == 1
    row = rec.rows[0]
    assert row.N == 0 and row.chosen_time is None and row.likelihood_calls == 0
    assert row.bcrb_trace_q == pytest.approx(0.01)
    rng = np.random.default_rng(row.seed)
    x = cfg.true_distribution.sample(rng, 1)[0]
    cloud = cfg.prior.sample(rng, cfg.n_particles)
    assert row.loss_q == pytest.approx((x[0] - cloud.mean()) ** 2, rel=1e-12)


def test_run_trial_is_reproducible():
    cfg = small_cfg(design=DesignConfig(3, 0.5, "information_gain", "gradient_local", "exponential_time", 50.0))
    a, b = run_trial(cfg, 4), run_trial(cfg, 4)
    assert a.rows == b.rows and np.array_equal(a.true_params, b.true_params)


def test_bound_diagnostics_not_counted_as_cost():
    rec = run_trial(small_cfg(), 0)
    calls = [r.likelihood_calls for r in rec.rows]
    # One update (200) plus one utility evaluation (2 * 200) per experiment.
    assert calls == [600 * n for n in range(6)]
    assert rec.diagnostic_likelihood_calls > 0


def test_both_bound_modes():
    post = run_trial(small_cfg(), 1)
    init = run_trial(small_cfg(bcrb_mode="initial_prior"), 1)
    assert [r.loss_q for r in post.rows] == [r.loss_q for r in init.rows]
    for rec in (post, init):
        bounds = [r.bcrb_trace_q for r in rec.rows]
        assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_snapshots_follow_experiments():
    snaps = []
    run_trial(small_cfg(), 0, snapshots=snaps)
    assert len(snaps) == 6 and all(abs(c.weights.sum() - 1) < 1e-10 for c in snaps)


def test_aggregate_percentile_convention():
    records = [fake_record(i, [float(i + 1)]) for i in range(100)]
    (row,) = aggregate(records)
    assert row.median_loss == 50.5
    assert row.q84_loss == pytest.approx(84.16)
    assert row.mean_loss == 50.5 and row.band_hi_84 == row.q84_loss


def test_aggregate_single_and_identical():
    (row,) = aggregate([fake_record(0, [2.5])])
    assert row.mean_loss == row.median_loss == 2.5 and row.stderr_loss == 0
    (row,) = aggregate([fake_record(i, [1.0]) for i in range(5)])
    assert row.band_lo_16 == row.band_hi_84 == 1.0


def test_aggregate_excludes_collapsed():
    records = [fake_record(0, [1.0, 1.0]), fake_record(1, [100.0], collapsed=True)]
    summary = aggregate(records)
    assert [r.mean_loss for r in summary] == [1.0, 1.0]
    assert all(r.n_collapsed == 1 for r in summary)
    with pytest.raises(InvalidArgumentError):
        aggregate([])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_csv_schema_and_determinism(tmp_path):
    cfg = small_cfg(n_experiments=3)
    run_benchmark(cfg, tmp_path / "a")
    run_benchmark(cfg, tmp_path / "b")
    for name, cols in (("trials.csv", TRIAL_COLUMNS), ("summary.csv", SUMMARY_COLUMNS), ("cost.csv", COST_COLUMNS)):
        a, b = (tmp_path / "a" / name).read_bytes(), (tmp_path / "b" / name).read_bytes()
        assert a == b
        rows = read_csv(tmp_path / "a" / name)
        assert tuple(rows[0]) == cols
    trials = read_csv(tmp_path / "a" / "trials.csv")
    assert len(trials) == 1 + 2 * 4
    summary = read_csv(tmp_path / "a" / "summary.csv")
    assert [r[0] for r in summary[1:]] == ["0", "1", "2", "3"]


def test_serial_and_parallel_identical(tmp_path):
    cfg = small_cfg(n_trials=4, n_experiments=4)
    run_benchmark(cfg, tmp_path / "serial", workers=1)
    run_benchmark(cfg, tmp_path / "parallel", workers=2)
    for name in ("trials.csv", "summary.csv", "cost.csv"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_unwritable_output_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        run_benchmark(small_cfg(n_trials=1, n_experiments=1), blocker / "sub")


def test_mean_loss_respects_bound_at_desk_scale():
    cfg = small_cfg(n_particles=1000, n_experiments=30, n_trials=40)
    final = run_benchmark(cfg).summary[-1]
    assert final.mean_loss >= final.mean_bcrb - 3 * final.stderr_loss


@pytest.mark.slow
def test_mean_loss_decreases_after_five_experiments():
    cfg = small_cfg(n_particles=1000, n_experiments=50, n_trials=200)
    summary = run_benchmark(cfg).summary
    for a, b in zip(summary[5:], summary[6:]):
        assert b.mean_loss <= a.mean_loss + 3 * math.hypot(a.stderr_loss, b.stderr_loss)


# -- config files --------------------------------------------------------------------

MINIMAL = """
model = "known_t2"
n_particles = 50
n_experiments = 2
[prior]
mean = [0.5]
cov = [[0.01]]
"""


def test_load_toml_and_json(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(MINIMAL)
    cfg = load_config(p)
    assert cfg.n_particles == 50 and cfg.build_model().no_decay
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"model": "unknown_t2", "prior": {"mean": [0.5, 0.01], "cov": [[0.01, 0], [0, 1e-6]]},
                             "q_diag": [1, 100], "design": {"n_guesses": 3}}))
    cfg = load_config(j)
    assert np.array_equal(cfg.q, np.diag([1.0, 100.0])) and cfg.design.n_guesses == 3


def test_example_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    for path in sorted(root.glob("*.toml")):
        load_config(path)


@pytest.mark.parametrize(
    "text,needle",
    [
        (MINIMAL + "bogus = 1\n", "bogus"),
        (MINIMAL + "[design]\nwhatever = 2\n", "design.whatever"),
        (MINIMAL.replace('"known_t2"', '"nope"'), "valid ids"),
        (MINIMAL + "[design]\nheuristic = \"x\"\n", "design"),
        (MINIMAL.replace("mean = [0.5]", "mean = [0.5, 1.0]"), "parameters"),
        (MINIMAL.replace("cov = [[0.01]]", ""), "prior.cov"),
        ('model = "known_t2"\n[prior\nmean = 1', "line 2"),
    ],
)
def test_config_errors_name_the_problem(tmp_path, text, needle):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=needle):
        load_config(p)


def test_json_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "model": "known_t2",\n oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="not found"):
        load_config(tmp_path / "missing.toml")


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        small_cfg(n_particles=0)
    with pytest.raises(InvalidArgumentError):
        small_cfg(bcrb_mode="sometimes")
    with pytest.raises(InvalidArgumentError):
        small_cfg(prior_cov=[[-1.0]])
    cfg = small_cfg()
    assert cfg.replace(n_trials=9).n_trials == 9 and cfg.n_trials == 2


def test_bcrb_schedule_rows():
    cfg = small_cfg(n_experiments=4)
    rows = bench.bcrb_schedule(cfg)
    assert len(rows) == 5 and rows[0][:3] == (0, None, pytest.approx(0.01))
    assert [r[1] for r in rows[1:]] == pytest.approx([2 * math.pi * k / 3 for k in range(1, 5)])
    assert bench.bcrb_columns(cfg.build_model()) == ("N", "time", "bcrb_trace_q", "bound_omega")
