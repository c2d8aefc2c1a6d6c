"""Command line driver: ``mvsr {generate,run,sweep,score,rank}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .analysis import rank_methods, records_from_csv, refit_score
from .datasets import BENCHMARKS, TRUE_N_PARAMS, NoiseSpec, generate_benchmark, load_views, write_csv
from .experiment import (ConfigError, ExperimentConfig, parse_floats, parse_sizes,
                         run_experiment, sweep, write_atomic, write_results)
from .expr import ParseError, Param, iter_nodes, parse
from .model import ParametricModel, parameterize
from .optim import fit_views

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

log = logging.getLogger("mvsr")


def _config_flags(parser: argparse.ArgumentParser) -> None:
    """One ``--field-name`` override per ExperimentConfig field."""
    group = parser.add_argument_group("config overrides")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "jobs":
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name in ("seeds", "data", "operators", "theta_base", "param_bounds", "run_mode"):
            group.add_argument(flag, dest=f.name, default=None,
                               help="comma-separated list")
        elif f.name == "target_score":
            group.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            typ = type(f.default) if f.default is not None and not isinstance(f.default, str) else str
            group.add_argument(flag, dest=f.name, type=typ, default=None)


_LIST_CASTS = {"seeds": int, "theta_base": float, "param_bounds": float}


def _build_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise FileNotFoundError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name in ("seeds", "data", "operators", "theta_base", "param_bounds", "run_mode"):
            cast = _LIST_CASTS.get(f.name, str)
            value = [cast(v.strip()) for v in value.split(",") if v.strip()]
            if f.name == "run_mode" and len(value) == 1:
                value = value[0]
        data[f.name] = value
    if getattr(args, "seed", None) is not None:
        data["seeds"] = [args.seed]
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    if getattr(args, "jobs", None) is not None:
        data["jobs"] = args.jobs
    elif "jobs" not in data and os.environ.get("MVSR_JOBS"):
        data["jobs"] = int(os.environ["MVSR_JOBS"])
    if data.get("data"):
        data.setdefault("benchmark", None)
    return ExperimentConfig.from_dict(data)


def cmd_run(args) -> int:
    cfg = _build_config(args)
    records = run_experiment(cfg)
    for p in write_results(records, cfg.output_dir):
        print(p)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    noises = parse_floats(args.noises) if args.noises else [cfg.noise]
    sizes = parse_sizes(args.sizes) if args.sizes else [cfg.max_size]
    records = sweep(cfg, noises, sizes)
    for p in write_results(records, cfg.output_dir, heatmap=True):
        print(p)
    return EXIT_OK


def cmd_generate(args) -> int:
    views = generate_benchmark(args.benchmark, NoiseSpec(args.noise, args.seed), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (v, c) in enumerate(zip(views.views, views.clean), start=1):
        write_csv(v, out / f"{args.benchmark}_view{i}.csv")
        write_csv(c, out / f"{args.benchmark}_view{i}_clean.csv")
    meta = {"benchmark": args.benchmark, "noise": args.noise, "seed": args.seed,
            "thetas": [list(t) for t in views.thetas]}
    write_atomic(out / f"{args.benchmark}_meta.json", json.dumps(meta, indent=2) + "\n")
    print(out)
    return EXIT_OK


def _model_from_text(text: str, guess) -> ParametricModel:
    expr = parse(text)
    if any(isinstance(n, Param) for n in iter_nodes(expr)):
        model = ParametricModel.from_text(text)
    else:
        model = parameterize(expr)
    if guess is not None:
        model = model.with_guess(guess)
    return model


def cmd_score(args) -> int:
    guess = parse_floats(args.guess) if args.guess else None
    model = _model_from_text(args.model, guess)
    views = load_views([p for p in args.data.split(",") if p])
    fits = fit_views(model, views.views, model.initial_guess if model.n_params else None)
    for path, f in zip(args.data.split(","), fits):
        theta = ", ".join(repr(float(t)) for t in f.theta)
        print(f"{path}\tmse={f.loss!r}\ttheta=[{theta}]")
    score = refit_score(model, views)
    print(f"model\t{model}")
    print(f"n_params\t{model.n_params}")
    print(f"refit_mse\t{score!r}")
    return EXIT_OK


def cmd_rank(args) -> int:
    records = []
    for p in args.results.split(","):
        records += records_from_csv(Path(p).read_text(encoding="utf-8"))
    n_true = dict(TRUE_N_PARAMS)
    if args.n_true is not None:
        n_true = {r.function: args.n_true for r in records}
    table = rank_methods(records, n_true)
    lines = ["method,average_rank"]
    lines += [f"{row['method']},{row['average_rank']!r}" for row in table.as_rows()]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    print(f"friedman_chi2,{table.friedman_statistic!r}")
    print(f"instances,{table.deltas.shape[1]}")
    if args.out:
        write_atomic(Path(args.out), text + f"friedman_chi2,{table.friedman_statistic!r}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvsr", description="Multi-view symbolic regression")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment configuration")
    run.add_argument("--config")
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--out")
    _config_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run a noise x max-size grid")
    sw.add_argument("--config")
    sw.add_argument("--noises", help="e.g. 0,0.033,0.066,0.1")
    sw.add_argument("--sizes", help="e.g. 5:25:2 or 5,9,13")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--out")
    _config_flags(sw)
    sw.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("generate", help="write benchmark views as CSV")
    gen.add_argument("--benchmark", required=True, choices=BENCHMARKS)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    sc = sub.add_parser("score", help="refit an expression to CSV views")
    sc.add_argument("--model", required=True)
    sc.add_argument("--data", required=True, help="comma-separated CSV paths")
    sc.add_argument("--guess", help="comma-separated initial parameter values")
    sc.set_defaults(func=cmd_score)

    rk = sub.add_parser("rank", help="average ranks on |n_params - n_true|")
    rk.add_argument("--results", required=True, help="comma-separated results CSVs")
    rk.add_argument("--n-true", type=int, help="override the true parameter count")
    rk.add_argument("--out")
    rk.set_defaults(func=cmd_rank)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"mvsr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError) as exc:
        print(f"mvsr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"mvsr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
