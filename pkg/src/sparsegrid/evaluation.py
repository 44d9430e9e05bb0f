"""Grouped cross-validation, F1 metrics and the experiment grid runner."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import forest
from .forest import TrainConfig
from .gridsim import WaveformRecord
from .preprocess import WindowingConfig, WindowSet, build_windows, trim
from .sparsity import (
    COMM_LOSS_MS,
    ZEROING_KINDS,
    ExperimentSpec,
    apply_channel_zeroing,
    apply_comm_loss_set,
    apply_downsample,
    effective_target,
)

log = logging.getLogger(__name__)

N_FOLDS = 5


class DatasetError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, spec: ExperimentSpec, cause: BaseException):
        super().__init__(f"{spec.task} {spec.window_length_ms} ms {spec.scenario}: {cause}")
        self.spec = spec
        self.cause = cause


# ---------------------------------------------------------------------------
# folds and metrics


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    groups: dict  # record_id -> fold

    def fold_of(self, record_ids) -> np.ndarray:
        return np.array([self.groups[int(r)] for r in record_ids], dtype=np.int64)

    def sizes(self) -> list[int]:
        return np.bincount(list(self.groups.values()), minlength=self.k).tolist()


def assign_folds(record_ids, k: int = N_FOLDS, seed: int = 0) -> FoldAssignment:
    """Shuffle distinct record ids with ``seed`` and deal them round-robin."""
    ids = np.unique(np.asarray(list(record_ids), dtype=np.int64))
    if len(ids) < k:
        raise ValueError(f"need at least {k} records for {k} folds, got {len(ids)}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    return FoldAssignment(k, {int(ids[p]): i % k for i, p in enumerate(perm)})


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    @classmethod
    def from_labels(cls, y_true, y_pred, n_classes: int) -> "ConfusionMatrix":
        cm = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(cm, (np.asarray(y_true, np.int64), np.asarray(y_pred, np.int64)), 1)
        return cls(cm)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _class_f1(cm: np.ndarray, c: int) -> float:
    tp = cm[c, c]
    fp = cm[:, c].sum() - tp
    fn = cm[c, :].sum() - tp
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def f1(cm: ConfusionMatrix, task: str) -> float:
    """FD: binary F1 of the fault class (id 1).  FLI: macro F1 over all classes.

    A class with an empty F1 denominator contributes 0.
    """
    counts = np.asarray(cm.counts)
    if counts.size == 0 or counts.sum() == 0:
        raise ValueError("empty confusion matrix")
    if task == "FD":
        if counts.shape != (2, 2):
            raise ValueError("FD expects a 2x2 confusion matrix")
        return _class_f1(counts, 1)
    if task == "FLI":
        return float(np.mean([_class_f1(counts, c) for c in range(counts.shape[0])]))
    raise ValueError(f"unknown task {task!r}")


def relative_change(result, baseline) -> float:
    """Percent change of ``result`` F1 against ``baseline`` F1."""
    r = result.f1_mean if hasattr(result, "f1_mean") else float(result)
    b = baseline.f1_mean if hasattr(baseline, "f1_mean") else float(baseline)
    if b <= 0:
        raise ZeroDivisionError("baseline F1 must be positive")
    return 100.0 * (r - b) / b


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    f1_mean: float
    f1_std: float
    per_fold_f1: list[float]
    n_windows_train: int
    n_windows_test: int
    wall_ms: float = 0.0
    relative_change_pct: float | None = None
    splits: list = field(default_factory=list, repr=False)


def _record_level(records, spec: ExperimentSpec, windowing: WindowingConfig, degrade: bool):
    """Apply record-level degradation and trim.

    Channel zeroing commutes with trimming, so it is applied after the trim to
    avoid copying full one-second records.
    """
    sc = spec.scenario
    out = []
    for rec in records:
        if degrade and sc.kind == "downsample":
            rec = apply_downsample(rec, effective_target(rec.fs, sc.parameter))
        rec = trim(rec, windowing)
        if degrade and sc.kind in ZEROING_KINDS:
            rec = apply_channel_zeroing(rec, sc.kind, sc.parameter)
        out.append(rec)
    return out


def experiment_windows(
    records: list[WaveformRecord], spec: ExperimentSpec, windowing: WindowingConfig | None = None,
    degrade: bool = True,
) -> WindowSet:
    """Windows of one experiment after every degradation step, task-filtered."""
    base = windowing or WindowingConfig()
    windowing = replace(base, window_length_ms=float(spec.window_length_ms))
    sc = spec.scenario
    # a resolution change is the data format itself, so it applies to clean
    # training data too
    trimmed = _record_level(records, spec, windowing, degrade or sc.kind == "downsample")
    ws = build_windows(trimmed, windowing)
    if spec.task == "FLI":
        ws = ws.subset(ws.fd)
        if len(ws) == 0:
            raise DatasetError("FLI needs fault windows, dataset has none")
    if degrade and sc.kind == "comm_loss":
        ws = apply_comm_loss_set(ws, sc.parameter, sc.loss_seed)
    return ws


def task_labels(ws: WindowSet, task: str) -> tuple[np.ndarray, int]:
    if task == "FD":
        return ws.fd.astype(np.int64), 2
    return ws.fli.astype(np.int64) - 1, 4


def cross_validate(
    X_train_view: np.ndarray, X_test_view: np.ndarray, y: np.ndarray, n_classes: int,
    record_ids: np.ndarray, task: str, train_config: TrainConfig, fold_seed: int, k: int = N_FOLDS,
):
    """Grouped k-fold CV; returns per-fold F1 and the record-id splits."""
    folds = assign_folds(record_ids, k, fold_seed)
    fold_of = folds.fold_of(record_ids)
    ranked = forest.rank_matrix(X_train_view)
    scores, splits = [], []
    n_train = n_test = 0
    for fold in range(k):
        test = np.flatnonzero(fold_of == fold)
        train = np.flatnonzero(fold_of != fold)
        model = forest.fit(X_train_view, y, train_config, n_classes, rows=train, ranked=ranked)
        pred = model.predict(X_test_view[test])
        scores.append(f1(ConfusionMatrix.from_labels(y[test], pred, n_classes), task))
        splits.append((frozenset(np.unique(record_ids[train]).tolist()),
                       frozenset(np.unique(record_ids[test]).tolist())))
        n_train += len(train)
        n_test += len(test)
    return scores, splits, n_train, n_test


def run_experiment(
    spec: ExperimentSpec, records: list[WaveformRecord], train_config: TrainConfig | None = None,
    windowing: WindowingConfig | None = None, fold_seed: int = 0,
    baseline: ExperimentResult | None = None,
) -> ExperimentResult:
    """degrade -> trim -> window -> (FLI: fault windows) -> comm loss -> grouped 5-fold CV."""
    train_config = train_config or TrainConfig()
    t0 = time.perf_counter()
    ws = experiment_windows(records, spec, windowing, degrade=True)
    y, n_classes = task_labels(ws, spec.task)
    X_test = ws.X
    if spec.mode == "clean-train" and spec.scenario.kind not in ("none", "downsample"):
        clean = experiment_windows(records, spec, windowing, degrade=False)
        X_train = clean.X
    else:
        X_train = ws.X
    scores, splits, n_train, n_test = cross_validate(
        X_train, X_test, y, n_classes, ws.record_id, spec.task, train_config, fold_seed
    )
    result = ExperimentResult(
        spec=spec,
        f1_mean=float(np.mean(scores)),
        f1_std=float(np.std(scores)),
        per_fold_f1=[float(s) for s in scores],
        n_windows_train=n_train,
        n_windows_test=n_test,
        wall_ms=(time.perf_counter() - t0) * 1000.0,
        splits=splits,
    )
    if baseline is not None:
        result.relative_change_pct = relative_change(result, baseline)
    return result


# ---------------------------------------------------------------------------
# grid

_WORKER_RECORDS: list | None = None


def _init_worker(records):
    global _WORKER_RECORDS
    _WORKER_RECORDS = records


def _run_job(args):
    spec, train_config, windowing, fold_seed = args
    try:
        return run_experiment(spec, _WORKER_RECORDS, train_config, windowing, fold_seed), None
    except Exception as exc:  # reported per spec by the caller
        return None, f"{type(exc).__name__}: {exc}"


def run_grid(
    records: list[WaveformRecord], specs: list[ExperimentSpec], train_config: TrainConfig,
    windowing: WindowingConfig | None = None, fold_seed: int = 0, jobs: int = 1, progress=None,
) -> tuple[list[ExperimentResult], list[tuple[ExperimentSpec, str]]]:
    """Run every spec; returns results in spec order plus any failures.

    Relative changes are filled in against the baseline of the same task and
    window length when that baseline is part of ``specs``.
    """
    args = [(s, train_config, windowing, fold_seed) for s in specs]
    if jobs > 1 and len(specs) > 1:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_worker,
                                 initargs=(records,)) as pool:
            outcomes = []
            for i, out in enumerate(pool.map(_run_job, args)):
                outcomes.append(out)
                if progress:
                    progress(i + 1, len(specs), specs[i], out)
    else:
        _init_worker(records)
        outcomes = []
        for i, a in enumerate(args):
            out = _run_job(a)
            outcomes.append(out)
            if progress:
                progress(i + 1, len(specs), specs[i], out)

    results, failures = [], []
    for spec, (res, err) in zip(specs, outcomes):
        if err is not None:
            failures.append((spec, err))
        else:
            results.append(res)
    baselines = {
        (r.spec.task, r.spec.window_length_ms): r for r in results if r.spec.scenario.kind == "none"
    }
    for r in results:
        b = baselines.get((r.spec.task, r.spec.window_length_ms))
        if b is not None and b.f1_mean > 0:
            r.relative_change_pct = relative_change(r, b)
    return results, failures


# ---------------------------------------------------------------------------
# exports

RESULT_COLUMNS = (
    "task", "window_ms", "scenario", "param", "f1_mean", "f1_std", "change_pct",
    "n_windows_train", "n_windows_test",
)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}"


def result_row(r: ExperimentResult) -> dict:
    sc = r.spec.scenario
    head, _, param = sc.spelling.partition(":")
    return {
        "task": r.spec.task,
        "window_ms": str(r.spec.window_length_ms),
        "scenario": head,
        "param": param,
        "f1_mean": _fmt(r.f1_mean),
        "f1_std": _fmt(r.f1_std),
        "change_pct": _fmt(r.relative_change_pct),
        "n_windows_train": str(r.n_windows_train),
        "n_windows_test": str(r.n_windows_test),
    }


def results_csv(results: list[ExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(result_row(r))
    return buf.getvalue()


def timings_csv(results: list[ExperimentResult]) -> str:
    lines = ["task,window_ms,scenario,wall_ms"]
    for r in results:
        lines.append(f"{r.spec.task},{r.spec.window_length_ms},{r.spec.scenario.spelling},{r.wall_ms:.1f}")
    return "\n".join(lines) + "\n"


def comm_loss_matrix(results: list[ExperimentResult], task: str, windows=(10, 20, 30, 40, 50),
                     durations=COMM_LOSS_MS) -> np.ndarray:
    """F1 of the comm-loss cells as a (window x duration) matrix, NaN if absent."""
    mat = np.full((len(windows), len(durations)), np.nan)
    for r in results:
        s = r.spec
        if s.task == task and s.scenario.kind == "comm_loss":
            if s.window_length_ms in windows and s.scenario.parameter in durations:
                mat[windows.index(s.window_length_ms), durations.index(s.scenario.parameter)] = r.f1_mean
    return mat


def heatmap_csv(mat: np.ndarray, windows=(10, 20, 30, 40, 50), durations=COMM_LOSS_MS) -> str:
    lines = ["window_ms," + ",".join(str(d) for d in durations)]
    for w, row in zip(windows, mat):
        lines.append(str(w) + "," + ",".join("" if math.isnan(v) else f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def write_text(path, text: str):
    tmp = f"{path}.part"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
