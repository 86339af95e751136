"""``fleetmix`` command line: generate, train, solve, bench, export-lp, report.

Exit codes: 0 success, 2 argument error, 3 data error, 4 budget expired with
partial results written. Every command writes ``manifest.json`` into its
output directory before starting and finalizes it when done.

Seeds: ``--seed`` wins, then the ``FLEETMIX_SEED`` environment variable, then 0.
Generated instance i uses generator seed ``seed + i``; heuristic runs on the
j-th instance use ``seed + j``; neural sampling uses the uniform stream seed
``seed``. Results do not depend on ``--workers``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import FleetMixError, TooLarge

log = logging.getLogger("fleetmix")

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4
SOLVERS = ("exact", "alns", "tabu", "ga", "neural")


class DataError(Exception):
    pass


class BudgetExpired(Exception):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _versions() -> dict:
    import numpy
    import torch

    return {"fleetmix": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "torch": torch.__version__}


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    versions: dict = field(default_factory=_versions)
    started: str = field(default_factory=_now)
    finished: str | None = None
    status: str = "running"
    outputs: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=1, default=str) + "\n")
        return path

    def finalize(self, out_dir: Path, status: str = "ok") -> Path:
        self.finished = _now()
        self.status = status
        return self.write(out_dir)


def resolve_seed(arg) -> int:
    if arg is not None:
        return int(arg)
    env = os.environ.get("FLEETMIX_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"FLEETMIX_SEED must be an integer, got {env!r}")
    return 0


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {s}")
    return v


def _solver_list(s):
    names = [x.strip() for x in s.split(",") if x.strip()]
    bad = [x for x in names if x not in SOLVERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown solver(s) {bad}; choose from {', '.join(SOLVERS)}")
    return names


# ---------------------------------------------------------------- instances

@dataclass
class Item:
    name: str
    instance: object
    best_known: float | None = None


def read_instances(spec: str) -> list[Item]:
    """A directory of instance files, a single file, or ``golden`` / ``golden:3,19`` for the bundled fixtures."""
    from .io import GOLDEN_IDS, load_golden_fixtures, load_instance

    if spec == "golden" or spec.startswith("golden:"):
        ids = GOLDEN_IDS
        if ":" in spec:
            try:
                ids = [int(x) for x in spec.split(":", 1)[1].split(",") if x.strip()]
            except ValueError:
                raise DataError(f"bad golden id list in {spec!r}")
        return [Item(f"golden-{r.instance_id:02d}", r.instance, r.best_known_cost) for r in load_golden_fixtures(ids)]
    path = Path(spec)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix in (".txt", ".fmx") and p.name != "manifest.json")
    elif path.is_file():
        files = [path]
    else:
        raise DataError(f"no instances at {spec}")
    if not files:
        raise DataError(f"no instance files in {spec}")
    return [Item(p.stem, load_instance(p)) for p in files]


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    from .generator import GeneratorConfig, generate_instance
    from .io import save_instance

    seed = resolve_seed(args.seed)
    cfg = GeneratorConfig(n=args.n, seed=seed, type_count_range=(args.min_types, args.max_types))
    out = Path(args.out)
    man = RunManifest("generate", {"n": args.n, "count": args.count, "generator": asdict(cfg)}, seed)
    man.write(out)
    width = max(5, len(str(args.count - 1)))
    for i in range(args.count):
        inst = generate_instance(cfg.with_seed(seed + i), name=f"n{args.n}-{i:0{width}d}")
        p = save_instance(inst, out / f"{inst.name}.txt")
        man.outputs.append(p.name)
    man.finalize(out)
    print(f"wrote {args.count} instances to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import TrainConfig, train

    seed = resolve_seed(args.seed) if (args.seed is not None or os.environ.get("FLEETMIX_SEED")) else None
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read training config {args.config}: {e}")
    if args.no_af2:
        raw["use_af2"] = False
        raw.setdefault("hyperparams", {})["use_af2"] = False
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise DataError(f"invalid training config: {e}")
    out = Path(args.out)
    man = RunManifest("train", {"train_config": cfg.to_dict(), "use_af2": cfg.use_af2,
                                "resume_epoch": args.resume}, cfg.seed)
    man.write(out)
    _, tlog = train(cfg, run_dir=out, resume_epoch=args.resume)
    curve = out / "curve.csv"
    with curve.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "global_step", "val_cost"])
        for e in tlog.epochs:
            w.writerow([e["epoch"], e["global_step"], repr(e["val_cost"])])
    man.outputs = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    man.finalize(out)
    if tlog.epochs:
        print(f"final greedy validation cost {tlog.epochs[-1]['val_cost']:.4f}; checkpoints in {out}")
    return EXIT_OK


def _load_model(path: str, expect: dict | None = None):
    from .policy import FRIPN, HyperParams

    hp = HyperParams(**expect) if expect else None
    return FRIPN.load(path, hp)


def cmd_solve(args) -> int:
    from .inference import DecodeConfig, solve
    from .instance import validate_solution
    from .io import RunResult, save_run_report, save_solution

    seed = resolve_seed(args.seed)
    expect = json.loads(Path(args.hyperparams).read_text()) if args.hyperparams else None
    model = _load_model(args.model, expect)
    dcfg = DecodeConfig(args.strategy, args.samples, args.augment, seed)
    items = read_instances(args.instances)
    out = Path(args.out)
    man = RunManifest("solve", {"model": str(args.model), "decode": asdict(dcfg), "instances": args.instances,
                                "hyperparams": model.hp.to_dict()}, seed)
    man.write(out)
    results = []
    for it in items:
        sol, secs = solve(it.instance, model, dcfg)
        problems = validate_solution(it.instance, sol)
        if problems:
            raise DataError(f"{it.name}: decoded solution invalid: {problems[:3]}")
        p = save_solution(sol, out / f"{it.name}.sol", it.instance.name)
        man.outputs.append(p.name)
        results.append(RunResult(_decode_label(dcfg), it.name, sol.total_cost, secs, it.best_known))
    rep, table = save_run_report(results, out / "results.json")
    man.outputs += [rep.name, table.name]
    man.finalize(out)
    print(table.read_text(), end="")
    return EXIT_OK


def _decode_label(dcfg) -> str:
    s = "greedy" if dcfg.strategy == "greedy" else f"sampling{dcfg.sample_size}"
    return f"neural-{s}{'-aug' if dcfg.augment else ''}"


def _run_one(job: dict) -> dict:
    """Worker entry: one (solver, instance) pair -> result dict."""
    from .exact import OracleLimit, exact_solve
    from .heuristics import AlnsConfig, BudgetedConfig, GaConfig, TabuConfig, alns_solve, ga_solve, tabu_solve
    from .io import dumps_solution, loads_instance
    from .instance import validate_solution

    inst = loads_instance(job["instance_text"])
    solver = job["solver"]
    budget = BudgetedConfig(job["budget"], job["iterations"].get(solver), job["seed"])
    t0 = time.perf_counter()
    try:
        if solver == "exact":
            sol = exact_solve(inst, OracleLimit(job["exact_max_n"]))
        elif solver == "alns":
            sol = alns_solve(inst, AlnsConfig(budget=budget))
        elif solver == "tabu":
            sol = tabu_solve(inst, TabuConfig(budget=budget))
        elif solver == "ga":
            sol = ga_solve(inst, GaConfig(budget=budget))
        else:
            from .inference import DecodeConfig, solve

            model = _load_model(job["model"])
            sol, _ = solve(inst, model, DecodeConfig(**job["decode"]))
    except TooLarge as e:
        return {"skipped": str(e), **_job_id(job)}
    secs = time.perf_counter() - t0
    if validate_solution(inst, sol):
        raise DataError(f"{solver} returned an invalid solution on {job['name']}")
    return {"cost": sol.total_cost, "seconds": secs, "solution": dumps_solution(sol, inst.name), **_job_id(job)}


def _job_id(job):
    return {"solver": job["solver"], "name": job["name"]}


def cmd_bench(args) -> int:
    from .io import RunResult, dumps_instance, save_run_report

    seed = resolve_seed(args.seed)
    if "neural" in args.solvers and not args.model:
        print("error: --model is required when the neural solver is selected", file=sys.stderr)
        return EXIT_ARGS
    items = read_instances(args.instances)
    out = Path(args.out)
    iterations = {"alns": args.alns_iterations, "tabu": args.tabu_iterations, "ga": args.ga_generations}
    decode = {"strategy": args.strategy, "sample_size": args.samples, "augment": args.augment, "seed": seed}
    cfg = {"solvers": args.solvers, "instances": args.instances, "budget": args.budget, "iterations": iterations,
           "total_budget": args.total_budget, "model": args.model, "decode": decode, "exact_max_n": args.exact_max_n}
    man = RunManifest("bench", cfg, seed)
    man.write(out)
    jobs = []
    for j, it in enumerate(items):
        text = dumps_instance(it.instance)
        for s in args.solvers:
            jobs.append({"solver": s, "name": it.name, "instance_text": text, "budget": args.budget,
                         "iterations": iterations, "seed": seed + j, "model": args.model, "decode": decode,
                         "exact_max_n": args.exact_max_n})
    t0 = time.perf_counter()
    done: list[dict] = []
    expired = False
    if args.workers > 1:
        pool = ProcessPoolExecutor(max_workers=args.workers)
        futs = [pool.submit(_run_one, jb) for jb in jobs]
        try:
            for f in futs:
                remaining = None if args.total_budget is None else max(0.0, args.total_budget - (time.perf_counter() - t0))
                try:
                    done.append(f.result(timeout=remaining))
                except FutureTimeout:
                    expired = True
                    break
        finally:
            # runs already in flight are abandoned, queued ones never start
            pool.shutdown(wait=not expired, cancel_futures=True)
    else:
        for jb in jobs:
            if args.total_budget is not None and time.perf_counter() - t0 >= args.total_budget:
                expired = True
                break
            done.append(_run_one(jb))
    best_known = {it.name: it.best_known for it in items}
    results = []
    sol_dir = out / "solutions"
    sol_dir.mkdir(parents=True, exist_ok=True)
    for r in done:
        if "skipped" in r:
            log.warning("%s on %s skipped: %s", r["solver"], r["name"], r["skipped"])
            continue
        p = sol_dir / f"{r['name']}.{r['solver']}.sol"
        p.write_text(r["solution"])
        man.outputs.append(str(p.relative_to(out)))
        results.append(RunResult(r["solver"], r["name"], r["cost"], r["seconds"], best_known[r["name"]]))
    if results:
        rep, table = save_run_report(results, out / "report.json")
        man.outputs += [rep.name, table.name]
        print(table.read_text(), end="")
    man.finalize(out, "partial" if expired else "ok")
    if expired:
        print(f"budget expired: {len(done)} of {len(jobs)} runs finished; partial report in {out}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_export_lp(args) -> int:
    from .exact import export_milp

    items = read_instances(args.instances)
    out = Path(args.out)
    man = RunManifest("export-lp", {"instances": args.instances}, 0)
    man.write(out)
    for it in items:
        p = export_milp(it.instance, out / f"{it.name}.lp")
        man.outputs.append(p.name)
    man.finalize(out)
    print(f"wrote {len(items)} LP files to {out}")
    return EXIT_OK


def _collect_reports(run: Path) -> list[Path]:
    if run.is_file():
        return [run]
    return [p for p in (run / "report.json", run / "results.json", run / "report.csv") if p.is_file()]


def cmd_report(args) -> int:
    from .io import compute_gaps, load_run_report, render_table

    results, curves = [], {}
    for r in args.runs:
        run = Path(r)
        if not run.exists():
            raise DataError(f"no run at {run}")
        for rep in _collect_reports(run):
            results += load_run_report(rep)
        tl = run / "train_log.jsonl" if run.is_dir() else None
        if tl is not None and tl.is_file():
            curves[run.name] = _read_curve(tl)
    if not results and not curves:
        raise DataError("no run reports or training logs found")
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if results:
        # gaps are recomputed against the row-wise best unless a literature value exists
        records = compute_gaps(results)
        if args.format == "csv":
            text = _records_csv(records)
        else:
            text = render_table(records)
        if out is not None:
            (out / ("report.csv" if args.format == "csv" else "report.txt")).write_text(text)
        print(text, end="")
    if curves:
        text = _curves_csv(curves)
        if out is not None:
            (out / "curves.csv").write_text(text)
        else:
            print(text, end="")
    return EXIT_OK


def _read_curve(path: Path) -> dict[int, float]:
    curve = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("kind") == "epoch":
            curve[int(rec["epoch"])] = float(rec["val_cost"])
    return curve


def _curves_csv(curves: dict[str, dict[int, float]]) -> str:
    import io

    names = list(curves)
    epochs = sorted({e for c in curves.values() for e in c})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", *names])
    for e in epochs:
        w.writerow([e, *(repr(curves[n][e]) if e in curves[n] else "" for n in names)])
    return buf.getvalue()


def _records_csv(records: list[dict]) -> str:
    import io

    from .io import REPORT_FIELDS

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fleetmix", description="Fleet size and mix vehicle routing toolkit")
    ap.add_argument("--version", action="version", version=f"fleetmix {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write seeded random instances")
    g.add_argument("--n", type=_positive_int, required=True, help="customers per instance")
    g.add_argument("--count", type=_positive_int, required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--min-types", type=_positive_int, default=3)
    g.add_argument("--max-types", type=_positive_int, default=6)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a policy with REINFORCE")
    t.add_argument("--config", required=True, help="JSON training config (keys of TrainConfig)")
    t.add_argument("--no-af2", action="store_true", help="drop the remaining-graph embedding (ablation)")
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", type=int, help="resume after this epoch's checkpoint in --out")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", help="decode instances with a trained policy")
    s.add_argument("--model", required=True)
    s.add_argument("--hyperparams", help="JSON hyperparameters the checkpoint must match")
    s.add_argument("--strategy", choices=("greedy", "sampling"), default="greedy")
    s.add_argument("--samples", type=_positive_int, default=128)
    s.add_argument("--augment", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--instances", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run solvers and write a cost / time / gap report")
    b.add_argument("--solvers", type=_solver_list, default=["exact", "alns", "tabu", "ga"])
    b.add_argument("--instances", required=True, help="directory, file, 'golden' or 'golden:3,4'")
    b.add_argument("--budget", type=_nonneg_float, default=10.0, help="wall-clock seconds per heuristic run")
    b.add_argument("--alns-iterations", type=int, default=10_000)
    b.add_argument("--tabu-iterations", type=int, default=1000)
    b.add_argument("--ga-generations", type=int, default=200)
    b.add_argument("--exact-max-n", type=int, default=12)
    b.add_argument("--total-budget", type=_nonneg_float, help="stop launching runs after this many seconds")
    b.add_argument("--model")
    b.add_argument("--strategy", choices=("greedy", "sampling"), default="greedy")
    b.add_argument("--samples", type=_positive_int, default=128)
    b.add_argument("--augment", action="store_true")
    b.add_argument("--workers", type=_positive_int, default=1)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export-lp", help="write the MILP of each instance in LP format")
    e.add_argument("--instances", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_lp)

    r = sub.add_parser("report", help="merge run reports and training curves")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--format", choices=("table", "csv"), default="table")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, FleetMixError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
