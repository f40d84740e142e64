"""Command-line front end: gen-data, train, extract, predict, analyze, run-experiment.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric divergence, 5 arity/validation.
Logs go to stderr; results go to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import analysis
from . import network as nw
from .dataset import DatasetError, gen_modified_xor, gen_xor, load_csv, save_csv, xor_truth_table
from .extraction import ExtractionConfig, ExtractionError, check_layering, extract_detailed
from .program import ProgramError, emit_text, load_program, predict, save_program
from .tree import TreeError, TreeParams

log = logging.getLogger("nnasp")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGENCE, EXIT_INVALID = 0, 2, 3, 4, 5

# defaults for train / extract flags; a --config file sits between these and the flags
TRAIN_DEFAULTS = {
    "hidden": "4,2",
    "activation": "tanh",
    "output_activation": "sigmoid",
    "epochs": 100,
    "batch_size": 32,
    "learning_rate": 0.05,
    "optimizer": "sgd",
    "seed": 0,
}
EXTRACT_DEFAULTS = {"min_leaf": 2, "max_depth": 10, "scale": 10 ** 6}


class UsageError(Exception):
    pass


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise analysis.AnalysisError(f"{path}: malformed JSON config ({exc})") from exc
    if not isinstance(doc, dict):
        raise analysis.AnalysisError(f"{path}: config must be a JSON object")
    return doc


def _merge(defaults: dict, config: dict, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    unknown = set(config) - set(defaults)
    if unknown:
        raise analysis.AnalysisError(f"unknown config keys: {sorted(unknown)}")
    out = {**defaults, **config}
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _parse_hidden(spec) -> list[int]:
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, (list, tuple)):
        return [int(w) for w in spec]
    try:
        widths = [int(w) for w in str(spec).split(",") if w.strip()]
    except ValueError:
        raise UsageError(f"--hidden expects comma-separated widths, got {spec!r}") from None
    if not widths or min(widths) < 1:
        raise UsageError(f"--hidden expects positive widths, got {spec!r}")
    return widths


def _write_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _program_path(path: str) -> str:
    # accept the .lp name and fall back to the JSON written next to it
    p = Path(path)
    if p.suffix == ".lp":
        sibling = p.with_suffix(".json")
        if not sibling.exists():
            raise FileNotFoundError(f"{sibling}: structured program not found next to {p}")
        return str(sibling)
    return path


def cmd_gen_data(args) -> int:
    if args.kind == "xor":
        data = gen_xor(args.n, args.d, args.seed)
    elif args.kind == "modified-xor":
        data = gen_modified_xor(args.n, args.d, args.seed)
    else:
        data = xor_truth_table(args.repeat)
    save_csv(data, args.out)
    log.info("wrote %d rows to %s", len(data), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    opts = _merge(TRAIN_DEFAULTS, _read_config(args.config), args)
    data = load_csv(args.data)
    hidden = _parse_hidden(opts["hidden"])
    out_width = 1 if data.class_count <= 2 else data.class_count
    arch = [(w, opts["activation"]) for w in hidden] + [(out_width, opts["output_activation"])]
    model = nw.init(arch, data.n_features, seed=opts["seed"])
    config = nw.TrainConfig(opts["epochs"], min(opts["batch_size"], len(data)), opts["learning_rate"],
                            opts["seed"], opts["optimizer"])
    result = nw.train(model, data, config)
    nw.save_model(result.model, args.out)
    acc = nw.accuracy(result.model, data)
    final = result.loss_history[-1] if result.loss_history else float("nan")
    print(f"training accuracy {acc:.2f}% final loss {final:.6g}")
    return EXIT_OK


def cmd_extract(args) -> int:
    opts = _merge(EXTRACT_DEFAULTS, _read_config(args.config), args)
    model = nw.load_model(args.model)
    data = load_csv(args.data)
    config = ExtractionConfig(TreeParams(opts["min_leaf"], opts["max_depth"]), opts["scale"])
    result = extract_detailed(model, data, config)
    program = result.program
    problems = check_layering(program)
    if problems:
        raise ExtractionError("extracted program violates layering: " + problems[0])
    out = Path(args.out)
    out.write_text(emit_text(program, opts["scale"], comments=not args.no_comments))
    json_path = Path(args.program_json) if args.program_json else out.with_suffix(".json")
    if json_path == out:
        raise UsageError("--program-json must differ from --out")
    save_program(program, json_path)
    print(f"rules {len(program)}")
    for level in sorted(result.layer_stats):
        s = result.layer_stats[level]
        print(f"layer {level}: conditions {s.conditions} tree-conditions {s.tree_conditions}")
    print(f"registered conditions {result.registered_count}")
    return EXIT_OK


def cmd_predict(args) -> int:
    data = load_csv(args.data)
    rows = []
    if args.program:
        program = load_program(_program_path(args.program))
        for i, inst in enumerate(data.instances):
            p = predict(program, inst)
            rows.append([i, inst.label, p.class_id, int(p.abstained), p.support_count, repr(p.best_confidence)])
        header = ["index", "label", "prediction", "abstained", "support", "confidence"]
    else:
        model = nw.load_model(args.model)
        preds = nw.predict_batch(model, data.X)
        rows = [[i, inst.label, int(c)] for i, (inst, c) in enumerate(zip(data.instances, preds))]
        header = ["index", "label", "prediction"]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    hits = sum(r[1] == r[2] for r in rows)
    print(f"accuracy {100.0 * hits / len(rows):.2f}% ({hits}/{len(rows)})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    program = load_program(_program_path(args.program))
    data = load_csv(args.data)
    acc, abstain = analysis.program_scores(program, data)
    importance = analysis.feature_importance(program)
    impact = analysis.hidden_node_impact(program)
    report = {
        "program_accuracy": acc,
        "abstention_rate": abstain,
        "rule_count": len(program),
        "feature_importance": {"counts": importance.counts, "shares": importance.shares},
        "node_impact": [vars(r) for r in impact],
    }
    if args.model:
        model = nw.load_model(args.model)
        model_acc = nw.accuracy(model, data)
        report["model_accuracy"] = model_acc
        report["fidelity"] = analysis.fidelity(model_acc, acc) if model_acc > 0 else None
    _write_json(report, args.out)
    print(f"program accuracy {acc:.2f}%")
    for name, share in importance.ranked()[:5]:
        print(f"{name} {share:.2f}%")
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    doc = _read_config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = analysis.ExperimentConfig.from_dict(doc)
    summaries = analysis.run_cv_experiment(config)
    report = analysis.experiment_report(config, summaries)
    if config.dataset_kind != "csv":
        report["baseline_tree_accuracy"] = analysis.baseline_tree_accuracy(
            config.load_dataset(), config.k, config.seed, TreeParams(config.min_leaf, config.max_depth))
    if args.out:
        analysis.write_report(report, args.out)
    print(analysis.format_table(summaries))
    if "baseline_tree_accuracy" in report:
        print(f"baseline tree accuracy {report['baseline_tree_accuracy']:.1f}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnasp", description="Extract logic programs from trained MLPs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p.add_argument("kind", choices=["xor", "modified-xor", "xor-table"])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=2, help="truth-table repetitions (xor-table only)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an MLP on a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--config", help="JSON file with training options; flags override it")
    p.add_argument("--hidden", help="hidden widths, e.g. 4,2 (default 4,2)")
    p.add_argument("--activation", choices=nw.ACTIVATIONS)
    p.add_argument("--output-activation", dest="output_activation", choices=nw.ACTIVATIONS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--optimizer", choices=["sgd", "adam"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="extract a logic program from a model and its training data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="ASP program (.lp)")
    p.add_argument("--program-json", help="structured program (default: --out with .json suffix)")
    p.add_argument("--config", help="JSON file with min_leaf / max_depth / scale")
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--no-comments", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("predict", help="per-instance predictions of a program or a model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--program")
    src.add_argument("--model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("analyze", help="accuracy, feature importance and node impact of a program")
    p.add_argument("--program", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="also report model accuracy and fidelity")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run-experiment", help="cross-validated experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", help="report JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_run_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except nw.DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DatasetError, nw.NetworkError, ExtractionError, ProgramError, TreeError,
            analysis.AnalysisError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
