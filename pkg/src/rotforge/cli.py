"""Command-line surface for reproducible experiment runs.

Every command is deterministic given its arguments and seed; wall-clock
fields can be suppressed with --no-timestamps so output files compare
byte-for-byte across runs. Results are written as CSV rows with the
schema `dataset,classifier,resample,error,balanced_error,auc,nll,
build_seconds`, which `compare` and `cd-diagram` ingest back.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import budget as _budget
from . import evaluation as _evaluation
from . import forests as _forests
from . import stats as _stats
from .data import Dataset, DatasetError, ResamplePlan, load_arff, load_csv, stratified_resample
from .evaluation import ClassifierSpec

RESULTS_HEADER = ["dataset", "classifier", "resample", "error",
                  "balanced_error", "auc", "nll", "build_seconds"]

HYBRID_COMBOS = [
    ("RT_BAG", "RandomTree", "BAG"),
    ("RT_BAG_PCA", "RandomTree", "BAG_PCA"),
    ("RT_PCA", "RandomTree", "PCA"),
    ("C45_BAG", "C45", "BAG"),
    ("C45_BAG_PCA", "C45", "BAG_PCA"),
    ("C45_PCA", "C45", "PCA"),
]


class CliError(Exception):
    pass


def _default_seed() -> int:
    return int(os.environ.get("ROTFORGE_SEED", "0"))


def _load_dataset(path: str, class_column: str | None = None) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise CliError(f"dataset not found: {path}")
    if p.suffix.lower() == ".arff":
        return load_arff(str(p))
    if class_column is None:
        return load_csv(str(p), -1)
    try:
        return load_csv(str(p), int(class_column))
    except ValueError:
        return load_csv(str(p), class_column)


def _spec_from_args(args) -> ClassifierSpec:
    params = {}
    if args.trees is not None:
        params["trees"] = args.trees
    if getattr(args, "group_size", None) is not None:
        params["group_size"] = args.group_size
    if getattr(args, "proportion", None) is not None:
        params["proportion"] = args.proportion
    if args.classifier == "hybrid":
        params["base"] = args.base
        params["transform"] = args.transform
    if args.classifier == "rotf_ra":
        params["max_atts"] = args.max_atts
    return ClassifierSpec(family=args.classifier, params=params, seed=args.seed)


def _write_predictions(path: Path, preds) -> None:
    c = len(preds[0].distribution)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_class", "pred_class"] + [f"p_{j}" for j in range(c)])
        for r in preds:
            writer.writerow([r.true_class, r.predicted_class]
                            + [format(float(p), ".17g") for p in r.distribution])


def _write_results_row(writer, dataset, classifier, resample, report, seconds,
                       no_timestamps):
    writer.writerow([dataset, classifier, resample,
                     format(report.error, ".17g"),
                     format(report.balanced_error, ".17g"),
                     format(report.auc, ".17g"),
                     format(report.nll, ".17g"),
                     "0" if no_timestamps else format(seconds, ".6f")])


def _strip_times(model: _forests.ForestModel) -> _forests.ForestModel:
    return replace(model, build_seconds=0.0,
                   per_tree_seconds=tuple(0.0 for _ in model.per_tree_seconds))


def _run_resamples(dataset: Dataset, spec: ClassifierSpec, args, out_root: Path,
                   classifier_name: str, build=None):
    """Shared train/contract loop; `build` returns a model for a train set."""
    results_path = out_root / "results.csv"
    new_file = not results_path.exists()
    out_root.mkdir(parents=True, exist_ok=True)
    with open(results_path, "a", encoding="utf-8", newline="") as res_fh:
        writer = csv.writer(res_fh)
        if new_file:
            writer.writerow(RESULTS_HEADER)
        for r in range(args.resamples):
            train, test = stratified_resample(dataset, ResamplePlan(
                resample_id=r, train_fraction=args.train_fraction))
            model = (build or (lambda tr: _evaluation.build_classifier(spec, tr)))(train)
            rdir = out_root / classifier_name / dataset.name / f"resample{r}"
            rdir.mkdir(parents=True, exist_ok=True)
            saved = _strip_times(model) if args.no_timestamps else model
            _forests.save_model(saved, rdir / "model.json")
            preds = _evaluation.predict_dataset(model, test)
            _write_predictions(rdir / "predictions.csv", preds)
            report = _evaluation.metric_report(preds, train.class_counts())
            with open(rdir / "metrics.csv", "w", encoding="utf-8", newline="") as mfh:
                mwriter = csv.writer(mfh)
                mwriter.writerow(RESULTS_HEADER)
                _write_results_row(mwriter, dataset.name, classifier_name, r,
                                   report, model.build_seconds, args.no_timestamps)
            _write_results_row(writer, dataset.name, classifier_name, r, report,
                               model.build_seconds, args.no_timestamps)
            if model.contract_log is not None:
                with open(rdir / "contract_log.csv", "w", encoding="utf-8",
                          newline="") as cfh:
                    cwriter = csv.writer(cfh)
                    cwriter.writerow(["tree", "phase", "size", "seconds", "t_hat"])
                    for entry in model.contract_log:
                        cwriter.writerow([
                            entry["tree"], entry["phase"], entry["size"],
                            "0" if args.no_timestamps
                            else format(entry["seconds"], ".6f"),
                            format(entry["t_hat"], ".6f")])


def cmd_train(args) -> int:
    dataset = _load_dataset(args.data, args.class_column)
    spec = _spec_from_args(args)
    _run_resamples(dataset, spec, args, Path(args.out), args.classifier)
    return 0


def cmd_predict(args) -> int:
    model = _forests.load_model(args.model)
    dataset = _load_dataset(args.data, args.class_column)
    preds = _evaluation.predict_dataset(model, dataset)
    _write_predictions(Path(args.out), preds)
    return 0


def cmd_contract(args) -> int:
    dataset = _load_dataset(args.data, args.class_column)
    tm = (_budget.load_timing_model(args.timing_model) if args.timing_model
          else _budget.reference_timing_model())
    if tm.xtx_inverse is None:
        # the bundled model ships coefficients only; synthesise a tight fit
        tm = _fitted_reference_model(tm)
    cc = _budget.ContractConfig(budget_seconds=args.budget, timing=tm,
                                e_min=args.e_min, e_max=args.e_max,
                                alpha=args.alpha,
                                memory_limit_bytes=args.memory_limit)
    spec = ClassifierSpec("rotf", {"trees": args.trees or 200}, args.seed)
    cfg = _evaluation._forest_config(spec)

    def build(train):
        return _budget.contract_train(train, cc, cfg)

    _run_resamples(dataset, spec, args, Path(args.out), "contract_rotf", build=build)
    return 0


def _fitted_reference_model(tm) -> _budget.TimingModel:
    """Wrap bare reference coefficients in a synthetic exact fit so
    prediction intervals are defined (zero residual spread)."""
    gen = np.random.default_rng(0)
    obs = []
    beta = np.asarray(tm.coefficients)
    for _ in range(16):
        n = int(gen.integers(100, 20000))
        m = int(gen.integers(10, 3000))
        seconds = float(beta @ [1.0, n, m, n * m])
        obs.append(_budget.TimingObservation(n=n, m=m, seconds=seconds))
    fitted = _budget.fit_timing_model(obs, time_unit=tm.time_unit)
    return replace(fitted, calibration_scale=tm.calibration_scale)


def cmd_benchmark(args) -> int:
    specs = []
    for name in args.classifiers.split(","):
        name = name.strip()
        if name not in ("rotf", "randf"):
            raise CliError(f"unknown benchmark classifier {name!r}")
        specs.append((name, ClassifierSpec(name, {}, args.seed)))
    out_root = Path(args.out)
    for path in args.data:
        dataset = _load_dataset(path, args.class_column)
        for name, spec in specs:
            ns = argparse.Namespace(**vars(args))
            _run_resamples(dataset, spec, ns, out_root, name)
    return 0


def cmd_ablation(args) -> int:
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    accuracies = {name: [] for name, _, _ in HYBRID_COMBOS}
    for path in args.data:
        dataset = _load_dataset(path, args.class_column)
        for name, base, transform in HYBRID_COMBOS:
            spec = ClassifierSpec("hybrid", {"base": base, "transform": transform,
                                             "trees": args.trees}, args.seed)
            errs = []
            for r in range(args.resamples):
                train, test = stratified_resample(dataset, ResamplePlan(
                    resample_id=r, train_fraction=args.train_fraction))
                model = _evaluation.build_classifier(spec, train)
                preds = _evaluation.predict_dataset(model, test)
                errs.append(_evaluation.error_rate(preds))
            accuracies[name].append(1.0 - float(np.mean(errs)))
    mean_acc = {name: float(np.mean(vals)) for name, vals in accuracies.items()}
    ranking = sorted(mean_acc, key=lambda n: -mean_acc[n])
    with open(out_root / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["combination", "base", "transform", "mean_accuracy", "rank"])
        for name, base, transform in HYBRID_COMBOS:
            writer.writerow([name, base, transform,
                             format(mean_acc[name], ".17g"),
                             ranking.index(name) + 1])
    print(f"wrote {out_root / 'ablation.csv'}")
    return 0


def cmd_sweep(args) -> int:
    datasets = [_load_dataset(p, args.class_column) for p in args.data]
    values = [int(v) if args.param == "trees" else
              (int(v) if args.param == "group_size" else float(v))
              for v in args.values.split(",")]
    baseline = (int(args.baseline) if args.param in ("trees", "group_size")
                else float(args.baseline))
    points = _evaluation.sensitivity_sweep(
        datasets, args.param, values, baseline, resamples=args.resamples,
        base_spec=ClassifierSpec("rotf", {}, args.seed),
        train_fraction=args.train_fraction)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "mean_diff", "ci_low", "ci_high"])
        for pt in points:
            writer.writerow([pt.value, format(pt.mean_diff, ".17g"),
                             format(pt.ci_low, ".17g"),
                             format(pt.ci_high, ".17g")])
    print(f"wrote {out}")
    return 0


def cmd_tune(args) -> int:
    dataset = _load_dataset(args.data, args.class_column)
    if args.classifier == "rotf":
        grid = dict(_evaluation.ROTF_TUNING_GRID)
    elif args.classifier == "randf":
        grid = dict(_evaluation.RANDF_TUNING_GRID)
    else:
        raise CliError(f"no built-in grid for classifier {args.classifier!r}")
    if args.max_trees is not None:
        grid["trees"] = [t for t in grid["trees"] if t <= args.max_trees]
    train, _ = stratified_resample(dataset, ResamplePlan(
        resample_id=args.resample_id, train_fraction=args.train_fraction))
    spec = ClassifierSpec(args.classifier, {}, args.seed)
    best_params, best_error, table = _evaluation.grid_tune(
        spec, grid, train, folds=args.folds, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cv_table.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(grid) + ["cv_error"])
        for params, cv_error in table:
            writer.writerow([params[k] for k in grid] + [format(cv_error, ".17g")])
    with open(out / "best.json", "w", encoding="utf-8") as fh:
        json.dump({"params": best_params, "cv_error": best_error}, fh, indent=2)
    print(json.dumps({"params": best_params, "cv_error": best_error}))
    return 0


def _matrix_from_results(paths: list[str], metric: str) -> _stats.ResultsMatrix:
    cells: dict[tuple[str, str], list[float]] = {}
    for path in paths:
        if not Path(path).exists():
            raise CliError(f"results file not found: {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or metric not in reader.fieldnames:
                raise CliError(f"{path}: missing column {metric!r} "
                               f"(schema: {','.join(RESULTS_HEADER)})")
            for row in reader:
                key = (row["dataset"], row["classifier"])
                cells.setdefault(key, []).append(float(row[metric]))
    datasets = sorted({d for d, _ in cells})
    classifiers = sorted({c for _, c in cells})
    means = np.full((len(datasets), len(classifiers)), np.nan)
    for (d, c), vals in cells.items():
        means[datasets.index(d), classifiers.index(c)] = float(np.mean(vals))
    if np.isnan(means).any():
        raise CliError("results matrix has missing (dataset, classifier) cells")
    return _stats.ResultsMatrix(classifiers=tuple(classifiers),
                                datasets=tuple(datasets), means=means)


def cmd_compare(args) -> int:
    lower_is_better = args.metric not in ("auc",)
    matrix = _matrix_from_results(args.results, args.metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = _stats.holm_cliques(matrix, alpha=args.alpha,
                                 lower_is_better=lower_is_better)
    summary = {"metric": args.metric,
               "classifiers": list(matrix.classifiers),
               "mean_ranks": [float(r) for r in report.average_ranks],
               "cliques": [list(c) for c in report.cliques]}
    if len(matrix.classifiers) >= 3:
        fr = _stats.friedman(matrix, lower_is_better)
        summary["friedman_statistic"] = fr.statistic
        summary["friedman_p"] = fr.p_value
    with open(out / "pairwise_p.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(matrix.classifiers))
        for i, name in enumerate(matrix.classifiers):
            writer.writerow([name] + [format(p, ".17g")
                                      for p in report.pairwise_p[i]])
    _stats.cd_diagram(report, str(out / "cd_diagram.svg"))
    with open(out / "compare.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return 0


def cmd_cd_diagram(args) -> int:
    matrix = _matrix_from_results(args.results, args.metric)
    report = _stats.holm_cliques(matrix, alpha=args.alpha,
                                 lower_is_better=args.metric not in ("auc",))
    payload = _stats.cd_diagram(report, args.out)
    print(json.dumps(payload))
    return 0


def cmd_timing(args) -> int:
    if args.timing_command == "fit":
        obs = _budget.load_observations_csv(args.observations)
        tm = _budget.fit_timing_model(obs, include_nlogn=args.include_nlogn,
                                      time_unit=args.unit)
        _budget.save_timing_model(tm, args.out)
        print(f"fitted {len(obs)} observations; s={tm.residual_std:.6g}, "
              f"dof={tm.dof}; wrote {args.out}")
        return 0
    if args.timing_command == "predict":
        tm = (_budget.load_timing_model(args.model) if args.model
              else _budget.reference_timing_model())
        value = _budget.predict_time(tm, args.n, args.m)
        line = f"predicted build time: {value:.10g} {tm.time_unit}"
        if tm.xtx_inverse is not None and tm.dof >= 1:
            low, high = _budget.prediction_interval(tm, args.n, args.m)
            line += f" (95% interval [{low:.10g}, {high:.10g}])"
        print(line)
        return 0
    if args.timing_command == "calibrate":
        tm = (_budget.load_timing_model(args.model) if args.model
              else _budget.reference_timing_model())
        scale = _budget.calibrate(_budget.default_reference_workload,
                                  args.reference_seconds)
        tm = replace(tm, calibration_scale=scale)
        if args.out:
            _budget.save_timing_model(tm, args.out)
        print(f"calibration scale: {scale:.6g}")
        return 0
    raise CliError(f"unknown timing subcommand {args.timing_command!r}")


def _add_common(parser, with_resamples=True):
    parser.add_argument("--seed", type=int, default=_default_seed())
    parser.add_argument("--class-column", default=None,
                        help="CSV class column (index or header name); default last")
    parser.add_argument("--no-timestamps", action="store_true",
                        help="suppress wall-clock fields for byte-identical output")
    if with_resamples:
        parser.add_argument("--resamples", type=int, default=30)
        parser.add_argument("--train-fraction", type=float, default=0.5)


def _add_classifier_flags(parser):
    parser.add_argument("--classifier", default="rotf",
                        choices=["rotf", "randf", "hybrid", "rotf_ra"])
    parser.add_argument("--trees", type=int, default=None)
    parser.add_argument("--group-size", type=int, default=None)
    parser.add_argument("--proportion", type=float, default=None)
    parser.add_argument("--base", default="C45", choices=["C45", "RandomTree"])
    parser.add_argument("--transform", default="PCA",
                        choices=["BAG", "BAG_PCA", "PCA"])
    parser.add_argument("--max-atts", type=int, default=40)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier over stratified resamples")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_classifier_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model to a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, with_resamples=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("contract", help="train rotation forest under a time budget")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=float, required=True, help="seconds")
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--e-min", type=int, default=50)
    p.add_argument("--e-max", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--memory-limit", type=int, default=10 * 2**30)
    p.add_argument("--timing-model", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_contract)

    p = sub.add_parser("benchmark", help="run fixed-parameter rotf/randf on datasets")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifiers", default="rotf,randf")
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("ablation", help="run the six base/transform hybrids")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("sweep", help="sensitivity sweep of one parameter")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--param", required=True,
                   choices=["trees", "group_size", "proportion"])
    p.add_argument("--values", required=True, help="comma-separated")
    p.add_argument("--baseline", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", help="grid-search tuning with shared CV folds")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", default="rotf", choices=["rotf", "randf"])
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--resample-id", type=int, default=0)
    p.add_argument("--max-trees", type=int, default=None,
                   help="cap the tree counts searched (for small runs)")
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("compare", help="statistical comparison of result CSVs")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metric", default="error", choices=RESULTS_HEADER[3:])
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cd-diagram", help="critical difference diagram from results")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True, help="SVG path (JSON written alongside)")
    p.add_argument("--metric", default="error", choices=RESULTS_HEADER[3:])
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_cd_diagram)

    p = sub.add_parser("timing", help="build-time model operations")
    tsub = p.add_subparsers(dest="timing_command", required=True)
    tp = tsub.add_parser("fit")
    tp.add_argument("--observations", required=True,
                    help="CSV rows dataset,n,m,seconds")
    tp.add_argument("--out", required=True)
    tp.add_argument("--include-nlogn", action="store_true")
    tp.add_argument("--unit", default="seconds",
                    choices=["seconds", "minutes", "hours"])
    tp.set_defaults(func=cmd_timing)
    tp = tsub.add_parser("predict")
    tp.add_argument("--model", default=None)
    tp.add_argument("--n", type=int, required=True)
    tp.add_argument("--m", type=int, required=True)
    tp.set_defaults(func=cmd_timing)
    tp = tsub.add_parser("calibrate")
    tp.add_argument("--model", default=None)
    tp.add_argument("--reference-seconds", type=float, required=True)
    tp.add_argument("--out", default=None)
    tp.set_defaults(func=cmd_timing)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DatasetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
