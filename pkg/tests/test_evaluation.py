import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import f1_macro
from sparsegrid import evaluation as ev
from sparsegrid.forest import TrainConfig
from sparsegrid.sparsity import COMM_LOSS_MS, ExperimentSpec, SparsityScenario, enumerate_grid

FAST = TrainConfig(n_trees=5, seed=2)


def spec(task="FD", window=20, scenario="none", mode="retrain"):
    return ExperimentSpec(task, window, SparsityScenario.parse(scenario), mode)


# ---- folds -------------------------------------------------------------------


def test_ten_records_five_folds_of_two():
    fa = ev.assign_folds(range(10), 5, seed=1)
    assert fa.sizes() == [2, 2, 2, 2, 2]


@given(st.integers(5, 60), st.integers(0, 2**32 - 1))
def test_fold_sizes_balanced(n, seed):
    fa = ev.assign_folds(range(100, 100 + n), 5, seed)
    sizes = fa.sizes()
    assert sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1
    assert set(fa.groups) == set(range(100, 100 + n))


def test_folds_deterministic_and_seeded():
    a = ev.assign_folds(range(40), 5, seed=7)
    assert a == ev.assign_folds(range(40), 5, seed=7)
    assert a.groups != ev.assign_folds(range(40), 5, seed=8).groups


def test_duplicate_ids_share_a_fold():
    ids = [3, 3, 3, 9, 9, 1, 4, 5, 6, 7]
    fa = ev.assign_folds(ids, 5, seed=0)
    folds = fa.fold_of(ids)
    assert folds[0] == folds[1] == folds[2]
    assert folds[3] == folds[4]


def test_too_few_records():
    with pytest.raises(ValueError):
        ev.assign_folds(range(4), 5, seed=0)


# ---- F1 ----------------------------------------------------------------------


def test_f1_perfect_diagonal():
    assert ev.f1(ev.ConfusionMatrix(np.diag([3, 4])), "FD") == 1.0
    assert ev.f1(ev.ConfusionMatrix(np.diag([1, 2, 3, 4])), "FLI") == 1.0


def test_f1_binary_hand_value():
    # TP=1, FP=1, FN=1, TN=0 with fault as class 1
    cm = np.array([[0, 1], [1, 1]])
    assert ev.f1(ev.ConfusionMatrix(cm), "FD") == 0.5


def test_absent_class_contributes_zero():
    cm = np.diag([5, 5, 5, 0])
    assert ev.f1(ev.ConfusionMatrix(cm), "FLI") == pytest.approx(0.75)


def test_f1_errors():
    with pytest.raises(ValueError):
        ev.f1(ev.ConfusionMatrix(np.zeros((2, 2), int)), "FD")
    with pytest.raises(ValueError):
        ev.f1(ev.ConfusionMatrix(np.eye(4, dtype=int)), "FD")
    with pytest.raises(ValueError):
        ev.f1(ev.ConfusionMatrix(np.eye(2, dtype=int)), "XY")


def test_confusion_from_labels_total():
    cm = ev.ConfusionMatrix.from_labels([0, 1, 1, 3], [0, 1, 2, 3], 4)
    assert cm.total == 4
    assert cm.counts[1, 2] == 1


def _binary_via_precision_recall(cm):
    tp, fp, fn = cm[1, 1], cm[0, 1], cm[1, 0]
    if tp == 0:
        return 0.0
    p, r = tp / (tp + fp), tp / (tp + fn)
    return 2 * p * r / (p + r)


@pytest.mark.parametrize("seed", range(10))
def test_f1_matches_oracles_on_random_matrices(seed):
    rng = np.random.default_rng(seed)
    cm2 = rng.integers(0, 20, size=(2, 2))
    cm2[1, 1] += 1
    cm4 = rng.integers(0, 20, size=(4, 4))
    assert abs(ev.f1(ev.ConfusionMatrix(cm2), "FD") - _binary_via_precision_recall(cm2)) <= 1e-12
    assert abs(ev.f1(ev.ConfusionMatrix(cm4), "FLI") - f1_macro(cm4)) <= 1e-12


# ---- relative change -----------------------------------------------------------


def test_relative_change_examples():
    assert round(ev.relative_change(0.443, 0.997), 2) == -55.57
    assert round(ev.relative_change(0.900, 0.997), 2) == -9.73
    assert ev.relative_change(0.8, 0.8) == 0.0


def test_relative_change_zero_baseline():
    with pytest.raises(ZeroDivisionError):
        ev.relative_change(0.5, 0.0)


# ---- experiments ---------------------------------------------------------------


def test_fli_windows_are_fault_windows(small_records):
    ws = ev.experiment_windows(small_records, spec("FLI"))
    assert ws.fd.all()
    assert set(np.unique(ws.fli)) <= {1, 2, 3, 4}


def test_fli_without_faults_is_dataset_error(small_records):
    clean = [r for r in small_records if not r.is_fault]
    with pytest.raises(ev.DatasetError):
        ev.run_experiment(spec("FLI"), clean, FAST)


def test_comm_loss_zeroes_a_block_in_every_window(small_records):
    ws = ev.experiment_windows(small_records, spec("FD", 20, "commloss:15"))
    X = ws.features3d()
    dead = np.all(X == 0, axis=1)  # (window, sample)
    assert np.all(dead.sum(axis=1) >= 30)


@pytest.mark.parametrize("task", ["FD", "FLI"])
def test_result_shape_and_no_leakage(small_records, task):
    r = ev.run_experiment(spec(task, 10), small_records, FAST)
    assert len(r.per_fold_f1) == 5
    assert 0.0 <= r.f1_mean <= 1.0 and r.f1_std >= 0.0
    assert r.f1_mean == pytest.approx(np.mean(r.per_fold_f1))
    assert len(r.splits) == 5
    tests = set()
    for train, test in r.splits:
        assert not (train & test)
        assert not (tests & test)
        tests |= test
    n = len(ev.experiment_windows(small_records, spec(task, 10)))
    assert r.n_windows_test == n
    assert r.n_windows_train == 4 * n


def test_run_experiment_deterministic(small_records):
    a = ev.run_experiment(spec("FLI", 20, "bus:2"), small_records, FAST)
    b = ev.run_experiment(spec("FLI", 20, "bus:2"), small_records, FAST)
    assert a.per_fold_f1 == b.per_fold_f1


def test_clean_train_matches_retrain_for_baseline(small_records):
    a = ev.run_experiment(spec("FD", 10), small_records, FAST)
    b = ev.run_experiment(spec("FD", 10, mode="clean-train"), small_records, FAST)
    assert a.per_fold_f1 == b.per_fold_f1


def test_clean_train_differs_under_degradation(small_records):
    a = ev.run_experiment(spec("FLI", 10, "missing_v"), small_records, FAST)
    b = ev.run_experiment(spec("FLI", 10, "missing_v", "clean-train"), small_records, FAST)
    assert a.n_windows_test == b.n_windows_test
    assert a.per_fold_f1 != b.per_fold_f1


def test_baseline_subsumption_and_parallel_equivalence(small_records):
    specs = [spec("FD", 10), spec("FD", 10, "missing_i"), spec("FLI", 10), spec("FLI", 10, "phase:A")]
    serial, fail1 = ev.run_grid(small_records, specs, FAST, jobs=1)
    para, fail2 = ev.run_grid(small_records, specs, FAST, jobs=2)
    assert fail1 == fail2 == []
    assert ev.results_csv(serial) == ev.results_csv(para)
    alone = ev.run_experiment(specs[0], small_records, FAST)
    assert serial[0].per_fold_f1 == alone.per_fold_f1
    assert serial[0].relative_change_pct == 0.0
    expect = ev.relative_change(serial[1], serial[0])
    assert serial[1].relative_change_pct == pytest.approx(expect)


def test_grid_collects_failures(small_records):
    clean = [r for r in small_records if not r.is_fault]
    results, failures = ev.run_grid(clean, [spec("FD", 10), spec("FLI", 10)], FAST)
    assert [r.spec.task for r in results] == ["FD"]
    assert len(failures) == 1 and "DatasetError" in failures[0][1]


# ---- exports -------------------------------------------------------------------


def _fake(task, window, scenario, f1=0.5):
    s = spec(task, window, scenario)
    return ev.ExperimentResult(s, f1, 0.0, [f1] * 5, 8, 2)


def test_results_csv_layout():
    rows = ev.results_csv([_fake("FLI", 20, "bus:2", 0.25)]).splitlines()
    assert rows[0].split(",") == list(ev.RESULT_COLUMNS)
    assert rows[1] == "FLI,20,bus,2,0.250000,0.000000,,8,2"


def test_comm_loss_heatmap_cells():
    specs = enumerate_grid(tasks=("FLI",))
    results = [_fake(s.task, s.window_length_ms, s.scenario.spelling, 0.9) for s in specs]
    mat = ev.comm_loss_matrix(results, "FLI")
    assert mat.shape == (5, len(COMM_LOSS_MS))
    assert np.isfinite(mat).sum() == 25
    lines = ev.heatmap_csv(mat).splitlines()
    assert len(lines) == 6
    assert lines[1] == "10,0.900000" + "," * 8
    assert lines[5].count("0.900000") == 9


def test_write_text_atomic(tmp_path):
    p = tmp_path / "x.csv"
    ev.write_text(p, "a\n")
    assert p.read_text() == "a\n"
    assert not (tmp_path / "x.csv.part").exists()
