"""Command-line front end: learn, bench, gen, simplify, serve."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

from cfsynth.column import dump_task, load_task
from cfsynth.config import ABLATIONS, EngineConfig, apply_ablation, load_config
from cfsynth.dsl import parse_rule, print_rule, to_excel_formula
from cfsynth.engine import learn, simplify_against_column
from cfsynth.harness import (
    GenSpec,
    generate_task,
    reveal,
    run_benchmark,
    spec_from_obj,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cf-synth",
        description="Learn conditional-formatting rules from example cells.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML engine configuration file")
        p.add_argument(
            "--ablate",
            action="append",
            choices=ABLATIONS,
            help="disable one pipeline stage (repeatable)",
        )

    p = sub.add_parser("learn", help="suggest rules for a task file")
    p.add_argument("--task", required=True, help="task JSON file")
    p.add_argument(
        "--examples",
        type=int,
        default=None,
        help="reveal this many formatted cells (default: use the file's observed set)",
    )
    p.add_argument("--top", type=int, default=5, help="number of rules to print")
    p.add_argument("--reveal", choices=("first", "random"), default="first")
    p.add_argument("--seed", type=int, default=0, help="seed for --reveal random")
    common(p)

    p = sub.add_parser("bench", help="run the benchmark over a task directory")
    p.add_argument("--tasks", required=True, help="directory of task JSON files")
    p.add_argument("--out", required=True, help="write the report JSON here")
    p.add_argument("--examples", default="1,3,5", help="comma-separated reveal sizes")
    p.add_argument("--workers", type=int, default=0, help="parallel worker processes")
    common(p)

    p = sub.add_parser("gen", help="generate synthetic tasks")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--spec", required=True, help="generation spec JSON file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simplify", help="shorten a rule against a column")
    p.add_argument("--task", required=True, help="task JSON file supplying the column")
    p.add_argument("--rule", required=True, help="file holding rule text")
    common(p)

    p = sub.add_parser("serve", help="start the HTTP suggestion service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config", help="TOML engine configuration file")
    return parser


def _engine_config(args: argparse.Namespace) -> EngineConfig:
    cfg = load_config(args.config) if args.config else EngineConfig()
    for name in args.ablate or ():
        cfg = apply_ablation(cfg, name)
    return cfg


def _cmd_learn(args: argparse.Namespace) -> int:
    with open(args.task) as fh:
        task = load_task(fh.read())
    if args.examples is not None:
        task = reveal(task, args.examples, mode=args.reveal, seed=args.seed)
    cfg = dataclasses.replace(_engine_config(args), top_k=args.top)
    result = learn(task, cfg)
    if not result.rules:
        print(f"no rule found: {result.diagnostics.failure or 'no diagnostic'}")
        return 0
    for ranked in result.rules:
        print(f"# score={ranked.score:.4f}")
        sys.stdout.write(print_rule(ranked.rule))
        for dnf, fmt in ranked.rule.branches:
            print(f"# format {fmt}: {to_excel_formula(dnf, 'A1')}")
        print()
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    names = sorted(n for n in os.listdir(args.tasks) if n.endswith(".json"))
    if not names:
        print(f"no task files in {args.tasks}", file=sys.stderr)
        return 2
    tasks = []
    for name in names:
        with open(os.path.join(args.tasks, name)) as fh:
            tasks.append(load_task(fh.read()))
    counts = tuple(int(x) for x in args.examples.split(","))
    report = run_benchmark(tasks, counts, _engine_config(args), workers=args.workers)
    with open(args.out, "w") as fh:
        json.dump(report.to_obj(), fh, indent=2)
    for key, agg in report.aggregate().items():
        print(
            f"examples={key}: execution_match={agg['execution_match']:.3f} "
            f"exact_match={agg['exact_match']:.3f} n={agg['n']}"
        )
    print(f"wrote {args.out}")
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    with open(args.spec) as fh:
        spec = spec_from_obj(json.load(fh))
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        task = generate_task(args.seed + i, spec)
        path = os.path.join(args.out, f"task_{i:04d}.json")
        with open(path, "w") as fh:
            fh.write(dump_task(task))
    print(f"wrote {args.count} tasks to {args.out}")
    return 0


def _cmd_simplify(args: argparse.Namespace) -> int:
    with open(args.task) as fh:
        task = load_task(fh.read())
    with open(args.rule) as fh:
        rule = parse_rule(fh.read())
    simplified = simplify_against_column(rule, task.column, _engine_config(args))
    changed = print_rule(simplified) != print_rule(rule)
    sys.stdout.write(print_rule(simplified))
    print(f"changed: {'yes' if changed else 'no'}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from cfsynth.service import create_app

    port = args.port if args.port is not None else int(os.environ.get("CF_PORT", "8765"))
    config_path = args.config or os.environ.get("CF_CONFIG")
    app = create_app(load_config(config_path) if config_path else None)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


_COMMANDS = {
    "learn": _cmd_learn,
    "bench": _cmd_bench,
    "gen": _cmd_gen,
    "simplify": _cmd_simplify,
    "serve": _cmd_serve,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
