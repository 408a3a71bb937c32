"""Operator command line: one subcommand per lifecycle stage.

Exit codes: 0 success, 1 usage problems, 2 runtime failures. Every
machine-readable output can be emitted as JSON with --json.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PalmError
from .features import LineKind
from .imaging import write_png
from .ml import (
    DEFAULT_EPOCHS,
    DEFAULT_LAMBDA,
    DEFAULT_MAX_DEPTH,
    DEFAULT_N_TREES,
    DEFAULT_TEST_FRACTION,
    EvalReport,
    compare_models,
    evaluate,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    train_linear_svm,
    train_random_forest,
    train_test_split,
)
from .pipeline import PipelineConfig, analyze, ingest_annotated_corpus, load_config, save_config
from .service import ServiceConfig, create_app
from .synth import HandCategory, SynthConfig, generate_corpus

__all__ = ["cli_main", "run"]


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the cli contract reserves 2 for
    # runtime failures and uses 1 for usage problems
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_pipeline_config(path) -> PipelineConfig:
    return load_config(path) if path else PipelineConfig()


def _category(label: str) -> HandCategory:
    return HandCategory.from_label(label)


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        image_size=args.size,
        fate_line_probability=args.fate_prob,
        noise_sigma=args.noise_sigma,
        jitter=args.jitter,
        seed=args.seed,
        annotated=not args.raw,
    )
    rows = generate_corpus(cfg, args.n, args.out)
    payload = {
        "images": len(rows),
        "out": args.out,
        "seed": args.seed,
        "annotated": not args.raw,
    }
    _emit(args, payload, f"wrote {len(rows)} images and manifest.csv to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    cfg = _load_pipeline_config(args.config)
    ds = ingest_annotated_corpus(args.manifest, cfg)
    save_dataset(ds, args.out)
    payload = {"rows": len(ds), "out": args.out}
    _emit(args, payload, f"ingested {len(ds)} labeled rows into {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    train, test = train_test_split(ds, args.test_fraction, args.seed)
    if args.model == "forest":
        model = train_random_forest(train, args.n_trees, args.max_depth, args.seed)
    else:
        model = train_linear_svm(train, args.epochs, args.lam, args.seed)
    save_model(model, args.out)
    payload = {
        "model": args.model,
        "out": args.out,
        "train_rows": len(train),
        "held_out_rows": len(test),
        "seed": args.seed,
    }
    _emit(
        args,
        payload,
        f"trained {args.model} on {len(train)} rows "
        f"({len(test)} held out) -> {args.out}",
    )
    return 0


def _eval_text(rep: EvalReport) -> str:
    lines = [
        f"model: {rep.model_name}",
        f"accuracy {rep.accuracy!r}",
        f"n_test {rep.n_test}",
    ]
    for kind in LineKind:
        lines.append(
            f"{kind.label:<6} precision {rep.precision[kind.value]:.4f} "
            f"recall {rep.recall[kind.value]:.4f}"
        )
    lines.append("confusion rows=true cols=predicted:")
    for row in rep.confusion:
        lines.append("  " + " ".join(f"{int(v):4d}" for v in row))
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    ds = load_dataset(args.dataset)
    _, test = train_test_split(ds, args.test_fraction, args.seed)
    model = load_model(args.model)
    rep = evaluate(model, test)
    if args.out:
        Path(args.out).write_text(json.dumps(rep.as_dict(), indent=2) + "\n", encoding="utf-8")
    _emit(args, rep.as_dict(), _eval_text(rep))
    return 0


def cmd_compare(args) -> int:
    rep_a = EvalReport.from_dict(json.loads(Path(args.report_a).read_text(encoding="utf-8")))
    rep_b = EvalReport.from_dict(json.loads(Path(args.report_b).read_text(encoding="utf-8")))
    table = compare_models(rep_a, rep_b)
    if args.csv:
        Path(args.csv).write_text(table.as_csv(), encoding="utf-8")
    payload = {
        "winner": table.winner,
        "report_a": rep_a.as_dict(),
        "report_b": rep_b.as_dict(),
    }
    _emit(args, payload, table.as_text())
    return 0


def _predict_payload(res) -> dict:
    by_kind = {e.descriptor.kind: e for e in res.report.entries}
    lines = []
    for line in res.lines:
        desc = by_kind[line.kind].descriptor
        lines.append(
            {
                "kind": line.kind.label,
                "arc_length": line.arc_length,
                "depth": line.depth,
                "confidence": line.confidence,
                "length_class": desc.length_class.value,
                "shape_class": desc.shape_class.value,
            }
        )
    return {"model": res.model_name, "lines": lines, "report": res.report.as_dict()}


def _predict_text(res) -> str:
    out = [f"model: {res.model_name}"]
    for entry in res.report.entries:
        desc = entry.descriptor
        if desc.present:
            out.append(
                f"{desc.kind.label:<6} {desc.length_class.value}/{desc.shape_class.value} "
                f"confidence {entry.confidence:.3f}: {entry.text}"
            )
        else:
            out.append(f"{desc.kind.label:<6} absent: {entry.text}")
    for name, text in res.report.combinations:
        out.append(f"combo  {name}: {text}")
    out.append(res.report.disclaimer)
    return "\n".join(out)


def cmd_predict(args) -> int:
    cfg = _load_pipeline_config(args.config)
    image_bytes = Path(args.image).read_bytes()
    category = _category(args.category)
    results = [analyze(image_bytes, category, load_model(args.forest), cfg)]
    if args.svm:
        results.append(analyze(image_bytes, category, load_model(args.svm), cfg))
    payload = {r.model_name: _predict_payload(r) for r in results}
    if len(results) == 1:
        payload = payload[results[0].model_name]
    _emit(args, payload, "\n\n".join(_predict_text(r) for r in results))
    return 0


def cmd_annotate(args) -> int:
    cfg = _load_pipeline_config(args.config)
    image_bytes = Path(args.image).read_bytes()
    res = analyze(image_bytes, _category(args.category), load_model(args.forest), cfg)
    write_png(res.annotated, args.out)
    kinds = [line.kind.label for line in res.lines]
    payload = {"out": args.out, "lines": kinds}
    _emit(args, payload, f"annotated {len(kinds)} lines ({', '.join(kinds) or 'none'}) -> {args.out}")
    return 0


def cmd_config_init(args) -> int:
    save_config(PipelineConfig(), args.out)
    _emit(args, {"out": args.out}, f"wrote default pipeline config to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    base = ServiceConfig(
        host=args.host,
        port=args.port,
        static_dir=args.static_dir,
        model_path=args.model,
        config_path=args.config,
        persist_dir=args.persist_dir,
    )
    service_cfg = ServiceConfig.from_env(base)
    app = create_app(service_cfg)
    uvicorn.run(app, host=service_cfg.host, port=service_cfg.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="palmreader", description="palm-line analysis toolkit")
    parser.add_argument("--version", action="version", version=f"palmreader {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--json", action="store_true", help="emit machine-readable JSON")
        return p

    p = add("synth", cmd_synth, "generate a synthetic palm corpus")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--noise-sigma", type=float, default=5.0)
    p.add_argument("--fate-prob", type=float, default=0.7)
    p.add_argument("--jitter", type=float, default=4.0)
    p.add_argument("--raw", action="store_true", help="render photo-style instead of annotated")

    p = add("ingest", cmd_ingest, "segment an annotated corpus into a dataset CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", required=True, help="dataset CSV path")

    p = add("train", cmd_train, "train a classifier on a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=("forest", "svm"), required=True)
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--n-trees", type=int, default=DEFAULT_N_TREES)
    p.add_argument("--max-depth", type=int, default=DEFAULT_MAX_DEPTH)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--lam", type=float, default=DEFAULT_LAMBDA, help="svm regularization")

    p = add("evaluate", cmd_evaluate, "evaluate a model on the held-out split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, help="model file path")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--out", help="also save the report JSON here")

    p = add("compare", cmd_compare, "compare two saved evaluation reports")
    p.add_argument("--report-a", required=True)
    p.add_argument("--report-b", required=True)
    p.add_argument("--csv", help="write metric,model_a,model_b rows here")

    p = add("predict", cmd_predict, "analyze one photo and print its reading")
    p.add_argument("--image", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--forest", required=True, help="forest model file")
    p.add_argument("--svm", help="also run this svm model file")
    p.add_argument("--category", default="male_left", choices=[c.label for c in HandCategory])

    p = add("annotate", cmd_annotate, "analyze one photo and save the annotated PNG")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--forest", required=True, help="forest model file")
    p.add_argument("--category", default="male_left", choices=[c.label for c in HandCategory])

    p = add("config-init", cmd_config_init, "write the default pipeline config JSON")
    p.add_argument("--out", required=True)

    p = add("serve", cmd_serve, "run the HTTP service")
    p.add_argument("--config", help="pipeline config JSON (or PALMREADER_CONFIG)")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--model", help="model file; falls back to config forest_path")
    p.add_argument("--static-dir", help="built web UI directory")
    p.add_argument("--persist-dir", help="mirror results to this directory")

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PalmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(cli_main())
