"""Command line entry point.

Subcommands: parse, graph, synth, train, eval, predict, explain.
Exit status is 0 on success, 1 on a runtime error and 2 on a usage error.
Set ``VIGNAT_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .cpg import to_dot
from .data import TEMPLATES, SyntheticSpec, gen_synthetic, ingest_jsonl, write_jsonl
from .explain import render_explanation, top_k_edges
from .flow import build_cfg, cfg_to_dot
from .frontend import SourceFunction, ast_to_dot, ast_to_json, parse_source
from .gnn import forward
from .pipeline import Model, PipelineConfig, build_graph, fit, split_corpus
from .training import evaluate

log = logging.getLogger("cpgat")


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
        config.train.seed = args.seed
    return config


def cmd_parse(args) -> int:
    source = _read(args.file)
    root = parse_source(source)
    if args.emit == "ast-json":
        _emit(ast_to_json(root) + "\n", args.out)
    elif args.emit == "ast-dot":
        _emit(ast_to_dot(root), args.out)
    else:
        _emit(cfg_to_dot(build_cfg(root), root), args.out)
    return 0


def cmd_graph(args) -> int:
    classes = [c.strip().upper() for c in args.classes.split(",") if c.strip()]
    t0 = time.perf_counter()
    fg = build_graph(_read(args.file), classes, args.direction)
    log.info("built CPG in %.4f s", time.perf_counter() - t0)
    if args.emit == "json":
        _emit(fg.cpg.to_json() + "\n", args.out)
    else:
        _emit(to_dot(fg.cpg), args.out)
    return 0


def cmd_synth(args) -> int:
    templates = tuple(args.templates.split(",")) if args.templates else TEMPLATES
    spec = SyntheticSpec(args.count, args.rate, templates, args.seed or 0)
    records = gen_synthetic(spec)
    if args.out:
        write_jsonl(records, args.out)
    else:
        for rec in records:
            sys.stdout.write(json.dumps(rec) + "\n")
    return 0


def cmd_train(args) -> int:
    config = _config(args)
    log.info("seed %d, config hash %s", config.seed, config.config_hash())
    corpus = ingest_jsonl(args.data, require_label=True)
    t0 = time.perf_counter()
    model, train_fns, test_fns = fit(corpus.functions, config)
    log.info("trained %d epochs in %.1f s", config.train.epochs, time.perf_counter() - t0)
    out = args.out or "model.json"
    model.save(out)
    model.vocab.save(Path(out).with_suffix(".vocab.json"))
    report = {
        "config_hash": config.config_hash(),
        "parsed": len(corpus.functions),
        "skipped": len(corpus.skipped),
        "final_loss": model.history[-1],
        "train": evaluate(model.params, model.specs, model.tensors(train_fns), config.threshold).to_dict(),
        "test": evaluate(model.params, model.specs, model.tensors(test_fns), config.threshold).to_dict(),
    }
    sys.stdout.write(_json(report))
    return 0


def cmd_eval(args) -> int:
    model = Model.load(args.model)
    config = model.config
    corpus = ingest_jsonl(args.data, require_label=True)
    functions = corpus.functions
    if args.split != "all":
        train_fns, test_fns = split_corpus(
            [f for f in functions if f.token_count < config.max_tokens], config
        )
        functions = train_fns if args.split == "train" else test_fns
    threshold = args.threshold if args.threshold is not None else config.threshold
    metrics = evaluate(model.params, model.specs, model.tensors(functions), threshold)
    payload = metrics.to_dict()
    payload["config_hash"] = config.config_hash()
    _emit(_json(payload), args.out)
    sys.stderr.write(metrics.table() + "\n")
    return 0


def _single(model: Model, path: str):
    source = _read(path)
    fn = SourceFunction(source, None)
    fg = build_graph(source, model.config.classes, model.config.direction)
    tensors = model.tensors([fn])[0]
    return fg, forward(tensors, model.params, model.specs)


def cmd_predict(args) -> int:
    model = Model.load(args.model)
    _, trace = _single(model, args.file)
    threshold = args.threshold if args.threshold is not None else model.config.threshold
    payload = {
        "prob": trace.probability,
        "label": int(trace.probability >= threshold),
        "config_hash": model.config.config_hash(),
    }
    _emit(_json(payload), args.out)
    return 0


def cmd_explain(args) -> int:
    model = Model.load(args.model)
    fg, trace = _single(model, args.file)
    expl = top_k_edges(trace, fg.graph, args.k, args.score, args.layer, fg.cpg.name)
    if args.emit == "json":
        payload = expl.to_dict()
        payload["config_hash"] = model.config.config_hash()
        _emit(_json(payload), args.out)
    else:
        dot = render_explanation(expl, fg.cpg)
        _emit(f"// config_hash: {model.config.config_hash()}\n" + dot, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path (default: stdout)")

    parser = argparse.ArgumentParser(prog="cpgat", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("parse", parents=[common], help="print the AST or CFG of one function")
    p.add_argument("file")
    p.add_argument("--emit", choices=["ast-json", "ast-dot", "cfg-dot"], default="ast-json")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("graph", parents=[common], help="print the code property graph of one function")
    p.add_argument("file")
    p.add_argument("--classes", default="ast,cfg", help="comma list of ast,cfg,ddg,cdg")
    p.add_argument("--direction", choices=["directed", "bidirected"], default="bidirected")
    p.add_argument("--emit", choices=["dot", "json"], default="dot")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic labeled corpus")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--rate", type=float, default=0.5, help="positive rate")
    p.add_argument("--templates", default=None, help=f"comma list of {','.join(TEMPLATES)}")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model on a JSONL corpus")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a JSONL corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["all", "train", "test"], default="all")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="score one function")
    p.add_argument("--model", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", parents=[common], help="top-k attention edges for one function")
    p.add_argument("--model", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--emit", choices=["dot", "json"], default="dot")
    p.add_argument("--score", choices=["raw", "normalized"], default="raw")
    p.add_argument("--layer", type=int, default=None)
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("VIGNAT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("config", "seed", "out"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, FloatingPointError) as exc:
        module = type(exc).__module__.rpartition(".")[2]
        if module in ("builtins", "decoder"):
            module = args.command
        sys.stderr.write(f"error [{module}]: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
