"""Command line entry point: ``truvrf <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import nnet
from .adversary import KINDS, ServerBehavior, apply_behavior
from .datasets import UnlearnRequest, gen_synthetic, load_dataset, load_idx, random_request, save_dataset, split_per_class
from .errors import CalibrationError, EmptyReport, FormatError, InfeasibleScenario, InvalidInput
from .harness import ScenarioConfig, calibrate_tau, run_benchmark, run_sweep, worker_count
from .metrics import UnlearningMeasurement, build_unlearning_measurement, verify_class, verify_sample, verify_volume
from .report import emit_report, load_report, render_report_figures, render_sweep_figure, write_plot_csv
from .sensitivity import AuxiliaryData
from .unlearning import (
    ENSEMBLE_MAGIC,
    amnesiac_unlearn,
    derive_seed,
    fit,
    load_ensemble,
    retrain_unlearn,
    save_ensemble,
    sisa_train,
    sisa_unlearn,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_CALIBRATION = 4


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc})") from exc


def _config(args) -> ScenarioConfig:
    return ScenarioConfig.load(args.config) if getattr(args, "config", None) else ScenarioConfig()


def _load_data(path: str):
    return load_dataset(path)


def _load_any(path: str, data_path: str | None):
    """A single model or, if the file is an ensemble, the ensemble (needs its data)."""
    with open(path, "rb") as fh:
        head = fh.read(len(ENSEMBLE_MAGIC))
    if head == ENSEMBLE_MAGIC:
        if not data_path:
            raise InvalidInput("ensemble files need --data with the training set")
        return load_ensemble(path, _load_data(data_path))
    return nnet.load_model(path)


def _save_any(model, path: str) -> None:
    if isinstance(model, nnet.Model):
        nnet.save_model(model, path)
    else:
        save_ensemble(model, path)


def _train_cfg(args, base: nnet.TrainConfig) -> nnet.TrainConfig:
    return nnet.TrainConfig(
        args.lr if args.lr is not None else base.learning_rate,
        args.epochs if args.epochs is not None else base.epochs,
        args.batch_size if args.batch_size is not None else base.batch_size,
        args.shuffle_seed if args.shuffle_seed is not None else base.shuffle_seed,
    )


# -- subcommands -------------------------------------------------------------


def cmd_gen_data(args) -> int:
    k = args.num_classes
    total = args.per_class + args.test_per_class
    full = gen_synthetic(k, total, args.dim, args.separation, args.seed, args.sigma)
    test, train = split_per_class(full, {c: args.test_per_class for c in range(k)}, derive_seed(args.seed, 1))
    save_dataset(train, args.out)
    if args.test_out:
        save_dataset(test, args.test_out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    data = load_idx(args.images, args.labels) if args.images else _load_data(args.data)
    hidden = tuple(int(h) for h in args.hidden.split(",") if h) if args.hidden is not None else cfg.hidden_layers
    spec = nnet.ModelSpec(data.dim, hidden, data.num_classes)
    tcfg = _train_cfg(args, cfg.train)
    framework = args.framework or cfg.framework
    if framework == "sisa":
        model = sisa_train(data, args.sisa_k or cfg.sisa_k, spec, tcfg, args.seed)
    else:
        model = fit(data, spec, tcfg, args.seed)
    _save_any(model, args.out)
    return EXIT_OK


def cmd_unlearn(args) -> int:
    cfg = _config(args)
    data = _load_data(args.data)
    model_o = _load_any(args.model, args.data)
    if args.request:
        request = UnlearnRequest.from_dict(_read_json(args.request))
    else:
        if args.target_class is None or args.volume is None:
            raise InvalidInput("give --request or both --class and --volume")
        request = random_request(data, {args.target_class: args.volume}, derive_seed(args.seed, 2))
    behavior = ServerBehavior(args.behavior, args.keep_fraction, derive_seed(args.seed, 3))
    executed = apply_behavior(request, behavior, data)
    framework = args.framework or cfg.framework
    if behavior.kind == "neglecting":
        model_u = model_o
    elif isinstance(model_o, nnet.Model) and framework == "sisa":
        raise InvalidInput("sisa unlearning needs an ensemble file")
    elif not isinstance(model_o, nnet.Model):
        model_u = sisa_unlearn(model_o, executed)
    elif framework == "amnesiac":
        model_u = amnesiac_unlearn(model_o, data, executed, _train_cfg(args, cfg.train), derive_seed(args.seed, 4)).model_u
    else:
        model_u = retrain_unlearn(data, executed, model_o.spec, _train_cfg(args, cfg.train), model_o.seed, model_o=model_o).model_u
    _save_any(model_u, args.out)
    if args.request_out:
        _write_json(request.to_dict(), args.request_out)
    if args.executed_out:
        _write_json(executed.to_dict(), args.executed_out)
    return EXIT_OK


def cmd_verify_class(args) -> int:
    model_o = _load_any(args.model_o, args.data)
    model_u = _load_any(args.model_u, args.data)
    test = _load_data(args.test)
    aux = AuxiliaryData.sample(test, range(test.num_classes), args.probe_size, args.seed, "test")
    verdict = verify_class(model_o, model_u, aux, args.alpha, args.threshold, args.probe_passes)
    out = verdict.to_dict()
    out["unlearned_classes"] = verdict.unlearned_classes
    _write_json(out, args.out)
    return EXIT_OK


def cmd_verify_volume(args) -> int:
    model_o = _load_any(args.model_o, args.data)
    model_u = _load_any(args.model_u, args.data)
    um = UnlearningMeasurement.from_dict(_read_json(args.um))
    test = _load_data(args.test)
    aux = AuxiliaryData.sample(test, [um.target_class], um.per_class_count, args.seed, "test")
    est = verify_volume(model_o, model_u, um, aux, um.alpha, um.probe_passes)
    _write_json(est.to_dict(), args.out)
    return EXIT_OK


def _tau_value(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return float(_read_json(text)["tau"])


def cmd_verify_sample(args) -> int:
    data = _load_data(args.data)
    model_u = _load_any(args.model_u, args.data)
    test = _load_data(args.test)
    request = UnlearnRequest.from_dict(_read_json(args.request))
    request.validate(data)
    count = min([args.probe_size] + list(request.volumes.values()))
    target = AuxiliaryData.sample(data.select(sorted(request.all_ids())), request.classes, count, args.seed, "target")
    test_aux = AuxiliaryData.sample(test, request.classes, count, derive_seed(args.seed, 1), "test")
    verdict = verify_sample(model_u, target, test_aux, args.alpha, _tau_value(args.tau), args.probe_passes)
    _write_json(verdict.to_dict(), args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    if args.what == "tau":
        runs = args.runs if args.runs is not None else cfg.params.tau_runs
        tau = calibrate_tau(cfg, runs, args.workers)
        _write_json({"tau": tau, "honest_runs": runs, "config": cfg.to_dict()}, args.out)
        return EXIT_OK
    if not (args.pool and args.test and args.target_class is not None):
        raise InvalidInput("calibrate um needs --pool, --test and --class")
    pool = _load_data(args.pool)
    test = _load_data(args.test)
    p = cfg.params
    c = args.target_class
    target = pool.of_class(c)
    others = pool.select_mask(pool.labels != c)
    spec = nnet.ModelSpec(pool.dim, cfg.hidden_layers, pool.num_classes)
    aux = AuxiliaryData.sample(test, [c], p.probe_size, derive_seed(args.seed, 1), "test")
    base = args.base if args.base is not None else (p.shadow_base if isinstance(p.shadow_base, int) else 0)
    um = build_unlearning_measurement(
        target, others, spec, cfg.train, p.n, p.batch_volume, aux, p.probe_alpha, args.seed,
        base_volume=base, probe_passes=p.probe_passes, framework=cfg.framework, sisa_k=cfg.sisa_k,
    )
    _write_json(um.to_dict(), args.out)
    return EXIT_OK


def _emit_all(report, out: Path, stem: str, figures: bool) -> None:
    emit_report(report, "json", out / f"{stem}.json", timings=out / f"{stem}.timings.json")
    emit_report(report, "csv", out / f"{stem}.csv")
    if figures:
        render_report_figures(report, out, stem)


def cmd_bench(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    for kv in args.set or []:
        key, _, raw = kv.partition("=")
        cfg = cfg.with_override(key, json.loads(raw))
    if args.trials is not None:
        cfg = cfg.with_override("trials", args.trials)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = worker_count(args.workers)
    if cfg.sweep is not None:
        sweep = run_sweep(cfg, workers)
        for i, rep in enumerate(sweep.reports):
            _emit_all(rep, out, f"report_{i:02d}", False)
        write_plot_csv(sweep, out / "plot.csv")
        if not args.no_figures:
            render_sweep_figure(sweep, out / "sweep.png")
        print(json.dumps(sweep.rows(), sort_keys=True))
    else:
        rep = run_benchmark(cfg, workers)
        _emit_all(rep, out, "report", not args.no_figures)
        print(json.dumps(rep.aggregates, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    rep = load_report(args.input)
    if args.format:
        emit_report(rep, args.format, args.out)
    if args.figures:
        render_report_figures(rep, args.figures, Path(args.input).stem)
    if not args.format and not args.figures:
        print(json.dumps(rep.aggregates, sort_keys=True, indent=2))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _train_flags(p) -> None:
    p.add_argument("--config", help="scenario JSON supplying architecture and training defaults")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--shuffle-seed", type=int)


def _probe_flags(p, size: int = 50) -> None:
    p.add_argument("--probe-size", type=int, default=size)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--probe-passes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the verdict here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="truvrf", description="Verify machine unlearning by model sensitivity.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic Gaussian dataset")
    p.add_argument("--num-classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="training set path")
    p.add_argument("--test-out", help="held-out test set path (bin format)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model or SISA ensemble")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--hidden", help="comma separated hidden widths, empty for none")
    p.add_argument("--framework", choices=("retrain", "sisa"))
    p.add_argument("--sisa-k", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("unlearn", help="act as the server on an unlearning request")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--request", help="JSON mapping class to sample IDs")
    p.add_argument("--class", dest="target_class", type=int)
    p.add_argument("--volume", type=int)
    p.add_argument("--framework", choices=("retrain", "sisa", "amnesiac"))
    p.add_argument("--behavior", choices=KINDS, default="honest")
    p.add_argument("--keep-fraction", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--request-out")
    p.add_argument("--executed-out", help="ground truth: what the server really forgot")
    _train_flags(p)
    p.set_defaults(func=cmd_unlearn)

    p = sub.add_parser("verify-class", help="which classes were unlearned")
    p.add_argument("--model-o", required=True)
    p.add_argument("--model-u", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--data", help="training set, needed for ensemble files")
    p.add_argument("--threshold", type=float, default=0.01)
    _probe_flags(p)
    p.set_defaults(func=cmd_verify_class)

    p = sub.add_parser("verify-volume", help="estimate how many samples were forgotten")
    p.add_argument("--model-o", required=True)
    p.add_argument("--model-u", required=True)
    p.add_argument("--um", required=True, help="calibration JSON from 'calibrate um'")
    p.add_argument("--test", required=True)
    p.add_argument("--data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_volume)

    p = sub.add_parser("verify-sample", help="check the requested samples themselves were forgotten")
    p.add_argument("--model-u", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--request", required=True)
    p.add_argument("--tau", required=True, help="number or JSON file from 'calibrate tau'")
    _probe_flags(p)
    p.set_defaults(func=cmd_verify_sample)

    p = sub.add_parser("calibrate", help="calibrate tau or the per-batch unlearning measurement")
    p.add_argument("what", choices=("tau", "um"))
    p.add_argument("--config")
    p.add_argument("--runs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--pool")
    p.add_argument("--test")
    p.add_argument("--class", dest="target_class", type=int)
    p.add_argument("--base", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="run a seeded benchmark battery or sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--set", action="append", metavar="KEY=JSON", help="override a dotted config key")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="convert or plot a saved report")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--out")
    p.add_argument("--figures", help="directory for PNG figures")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "format", None) and args.command == "report" and not args.out:
        print("error: --format needs --out", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (InfeasibleScenario, EmptyReport) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (InvalidInput, FormatError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
