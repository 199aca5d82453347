import math

import pytest

import deferral_lab as dl


def small_config(users=60, days=6, seed=3):
    cfg = dl.calibrated_config()
    cfg.num_users = users
    cfg.days = days
    cfg.seed = seed
    return cfg


def test_generate_is_deterministic():
    a = dl.generate(small_config())
    b = dl.generate(small_config())
    assert a.corpus.num_messages > 0
    assert a.corpus.num_actions == b.corpus.num_actions
    assert a.intents() == b.intents()


def test_labels_agree_with_completed_intents():
    r = dl.generate(small_config())
    a = dl.Analysis(r.corpus)
    labels = a.labels()
    assert set(labels) == set(r.intents())
    counts = a.label_counts()
    assert sum(counts.values()) == r.corpus.num_messages
    deferred = [m for m, l in labels.items() if l == "Deferred"]
    assert deferred
    assert all(r.intents()[m] == "Deferred" for m in deferred)


def test_characterize_rows_have_ordered_intervals():
    a = dl.Analysis(dl.generate(small_config()).corpus)
    rows = a.characterize(resamples=100)
    tables = {row["table"] for row in rows}
    assert {"headline", "properties", "actions", "replied"} <= tables
    for row in rows:
        if row["n"] > 0:
            assert row["ci_low"] <= row["value"] + 1e-12
            assert row["value"] <= row["ci_high"] + 1e-12


def test_calibration_report_covers_published_targets():
    report = dl.check_calibration(dl.generate(small_config(users=40, days=5)), resamples=100)
    assert len(report) == 57
    assert {e["status"] for e in report} <= {"PASS", "FAIL", "INSUFFICIENT", "MISSING"}
    assert all(e["ci_low"] <= e["ci_high"] for e in report if e["status"] in ("PASS", "FAIL"))


def test_experiment_baseline_recall_is_one():
    a = dl.Analysis(dl.generate(small_config(users=150, days=8)).corpus)
    result = a.run_experiment(1, small_grid=True)
    assert result["baseline"]["recall"] == 1.0
    assert result["train_size"] + result["test_size"] == result["cohort_size"]


def test_metrics_and_closed_forms():
    m = dl.metrics([1] * 100, [1] * 14 + [0] * 86)
    assert m["precision"] == pytest.approx(0.14)
    assert m["f1"] == pytest.approx(0.2456, abs=1e-3)
    assert dl.newton_leaf_value(2.0, 3.0, 1.0) == pytest.approx(-0.5)
    assert dl.split_gain(1.0, 1.0, -1.0, 1.0, 0.0) == pytest.approx(1.0)
    assert not math.isnan(dl.split_gain(0.0, 0.0, 0.0, 0.0, 1.0))


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(dl.Error):
        dl.load_corpus(tmp_path / "missing")
    cfg = small_config()
    cfg.num_users = -1
    with pytest.raises(dl.ConfigError):
        dl.generate(cfg)
    with pytest.raises(dl.ValidationError):
        dl.metrics([1], [1, 0])
    with pytest.raises(dl.ValidationError):
        dl.Analysis(dl.generate(small_config(users=5, days=2)).corpus, signal_window="sometimes")


def test_corpus_round_trip(tmp_path):
    r = dl.generate(small_config(users=10, days=3))
    r.corpus.save(tmp_path)
    back = dl.load_corpus(tmp_path)
    assert back.num_messages == r.corpus.num_messages
    assert back.num_actions == r.corpus.num_actions
    assert back.users() == r.corpus.users()
