"""``sparsegrid`` command line: simulate, run, grid, inspect."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset, evaluation, gridsim, heatmap
from .config import RunConfig, load_config
from .gridsim import ConfigError
from .preprocess import PreconditionError
from .sparsity import COMM_LOSS_MS, ExperimentSpec, NotApplicable, ScenarioError, SparsityScenario, enumerate_grid

log = logging.getLogger("sparsegrid")

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NOT_FOUND = 3


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if getattr(args, "dataset", None):
        changes["dataset"] = args.dataset
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    if getattr(args, "jobs", None) is not None:
        changes["jobs"] = args.jobs
    if changes:
        from dataclasses import replace

        cfg = replace(cfg, **changes)
    return cfg


def _load(cfg: RunConfig):
    path = Path(cfg.dataset)
    if not path.exists():
        raise FileNotFoundError(f"dataset {path} not found (run `sparsegrid simulate` first)")
    records = dataset.read_dataset(path)
    log.info("loaded %d records from %s", len(records), path)
    return records


def cmd_simulate(args) -> int:
    cfg = _config(args)
    path = Path(cfg.dataset)
    path.parent.mkdir(parents=True, exist_ok=True)
    nbytes = gridsim.generate_dataset(
        path, cfg.n_records, cfg.seeds.data_seed, cfg.fs, ranges=cfg.ranges
    )
    n_fault = int(gridsim.fault_flags(cfg.n_records, cfg.seeds.data_seed, cfg.fault_fraction).sum())
    print(f"wrote {path}")
    print(f"records:        {cfg.n_records}")
    print(f"fault fraction: {n_fault / cfg.n_records:.3f} ({n_fault} fault records)")
    print(f"sampling rate:  {cfg.fs} Hz")
    print(f"bytes:          {nbytes}")
    return 0


def _spec(task: str, window: int, scenario: str, cfg: RunConfig) -> ExperimentSpec:
    sc = SparsityScenario.parse(scenario, loss_seed=cfg.seeds.loss_seed)
    return ExperimentSpec(task.upper(), int(window), sc, cfg.mode)


def cmd_run(args) -> int:
    cfg = _config(args)
    spec = _spec(args.task, args.window, args.scenario, cfg)
    records = _load(cfg)
    train = cfg.train_config()
    windowing = cfg.windowing()
    baseline = None
    if spec.scenario.kind != "none":
        base_spec = _spec(args.task, args.window, "none", cfg)
        baseline = evaluation.run_experiment(base_spec, records, train, windowing, cfg.seeds.fold_seed)
    result = evaluation.run_experiment(spec, records, train, windowing, cfg.seeds.fold_seed, baseline)
    if baseline is None:
        result.relative_change_pct = 0.0
    text = evaluation.results_csv([result])
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = f"run_{spec.task}_{spec.window_length_ms}ms_{spec.scenario.spelling.replace(':', '-')}.csv"
    evaluation.write_text(out / name, text)
    sys.stdout.write(text)
    print(f"per-fold F1: {' '.join(f'{v:.4f}' for v in result.per_fold_f1)}")
    return 0


def _progress(i, n, spec, outcome):
    res, err = outcome
    status = f"F1 {res.f1_mean:.4f}" if res is not None else f"FAILED {err}"
    log.info("[%d/%d] %s %d ms %s: %s", i, n, spec.task, spec.window_length_ms, spec.scenario, status)


def cmd_grid(args) -> int:
    cfg = _config(args)
    specs = enumerate_grid(cfg.tasks, cfg.windows, cfg.seeds.loss_seed, cfg.scenarios or None, cfg.mode)
    records = _load(cfg)
    log.info("running %d experiments on %d worker(s)", len(specs), cfg.effective_jobs())
    results, failures = evaluation.run_grid(
        records, specs, cfg.train_config(), cfg.windowing(), cfg.seeds.fold_seed,
        jobs=cfg.effective_jobs(), progress=_progress,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_text(out / "results.csv", evaluation.results_csv(results))
    evaluation.write_text(out / "timings.csv", evaluation.timings_csv(results))
    windows = tuple(sorted(cfg.windows))
    for task in cfg.tasks:
        mat = evaluation.comm_loss_matrix(results, task, windows)
        evaluation.write_text(out / f"heatmap_{task}.csv", evaluation.heatmap_csv(mat, windows))
        svg = heatmap.render_svg(mat, windows, COMM_LOSS_MS, f"{task}: F1 under communication loss")
        evaluation.write_text(out / f"heatmap_{task}.svg", svg)
    print(f"{len(results)}/{len(specs)} experiments completed; results in {out}")
    for spec, err in failures:
        print(f"FAILED {spec.task} {spec.window_length_ms} ms {spec.scenario}: {err}", file=sys.stderr)
    return EXIT_FAILURE if failures else 0


def _rms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(np.square(x.astype(np.float64)), axis=-1))


def cmd_inspect(args) -> int:
    rec = dataset.read_record(args.dataset, args.record_id)
    m = rec.meta
    print(f"record {rec.record_id}: fs {rec.fs:g} Hz, {rec.n_samples} samples")
    if m.fault_line is None:
        print("fault: none")
        ref = rec.n_samples // 2
    else:
        print(f"fault: line {m.fault_line} at {m.fault_position:.3f} of its length, t = {m.fault_start:.4f} s")
        ref = rec.fault_index()
    print(f"fault current ratio {m.fault_current_ratio:.3f}, DC tau {m.dc_offset_tau * 1e3:.1f} ms, "
          f"inception angle {m.fault_inception_angle:.3f} rad")
    print("line lengths (km): " + ", ".join(f"{x:.1f}" for x in m.line_lengths))
    span = int(round(args.span_ms / 1000.0 * rec.fs))
    pre = rec.samples[:, max(ref - span, 0):ref]
    post = rec.samples[:, ref:ref + span]
    if pre.shape[1] == 0 or post.shape[1] == 0:
        raise PreconditionError("fault instant too close to the record edge for the RMS span")
    r_pre, r_post = _rms(pre), _rms(post)
    print(f"\nRMS over {args.span_ms:g} ms before/after {'the fault' if m.fault_line else 'mid-record'}")
    print(f"{'relay':>5} {'qty':>7} {'ph':>2} {'pre':>12} {'post':>12} {'ratio':>8}")
    for idx in range(gridsim.N_CHANNELS):
        c = gridsim.channel_from_index(idx)
        ratio = r_post[idx] / r_pre[idx] if r_pre[idx] > 0 else float("nan")
        print(f"{c.relay_id:>5} {c.quantity:>7} {c.phase:>2} {r_pre[idx]:>12.2f} {r_post[idx]:>12.2f} {ratio:>8.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsegrid", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config")
    s.add_argument("--dataset", help="output dataset path (overrides config)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="run one experiment and its baseline")
    r.add_argument("--config")
    r.add_argument("--dataset")
    r.add_argument("--task", required=True, type=str.upper, choices=("FD", "FLI"))
    r.add_argument("--window", required=True, type=int, help="window length in ms")
    r.add_argument("--scenario", default="none", help="e.g. none, missing_v, bus:2, commloss:25")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("grid", help="run the full experiment grid")
    g.add_argument("--config")
    g.add_argument("--dataset")
    g.add_argument("--out")
    g.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")
    g.set_defaults(func=cmd_grid)

    i = sub.add_parser("inspect", help="summarise one record of a dataset")
    i.add_argument("--dataset", required=True)
    i.add_argument("record_id", type=int)
    i.add_argument("--span-ms", type=float, default=80.0, help="RMS span either side of the fault")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except NotApplicable as exc:
        print(f"error: not applicable: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dataset.RecordNotFound, FileNotFoundError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"error: not found: {msg}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except (dataset.DatasetFormatError, PreconditionError, evaluation.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
