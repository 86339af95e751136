"""On-disk formats: instances, solutions, benchmark fixtures and run reports.

Instance files (canonical, ``.fmx``)::

    FLEETMIX-INSTANCE 1
    NAME toy
    N 2
    DEPOT 0.0 0.0
    CUSTOMERS
    0.3 0.4 0.2
    0.1 0.9 0.3
    FLEET 1
    1.0 5.0 2.0
    END

Floats are written with ``repr`` so a save/load round trip is bit exact.

Tabular files (used for transcribed benchmark data) are whitespace separated,
``#`` starts a comment, and hold ``key value`` header lines followed by a
``nodes`` block (``id x y demand``, id 0 = depot) and a ``fleet`` block
(``label capacity fixed unit``).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import FixtureMissing, InvalidInstance, ParseError
from .instance import Customer, Instance, Route, Solution, VehicleType

FORMAT_TAG = "FLEETMIX-INSTANCE"
FORMAT_VERSION = 1
SOLUTION_TAG = "FLEETMIX-SOLUTION"

GOLDEN_IDS = (3, 4, 5, 6, 13, 14, 15, 16, 17, 18, 19, 20)


def _f(x: float) -> str:
    return repr(float(x))


def dumps_instance(inst: Instance) -> str:
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}", f"NAME {inst.name}", f"N {inst.n}",
             f"DEPOT {_f(inst.depot[0])} {_f(inst.depot[1])}", "CUSTOMERS"]
    lines += [f"{_f(c.x)} {_f(c.y)} {_f(c.demand)}" for c in inst.customers]
    lines.append(f"FLEET {inst.num_types}")
    lines += [f"{_f(v.capacity)} {_f(v.fixed_cost)} {_f(v.unit_cost)}" for v in inst.fleet]
    lines.append("END")
    return "\n".join(lines) + "\n"


def save_instance(inst: Instance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_instance(inst))
    return path


class _Lines:
    def __init__(self, text: str):
        self.rows = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
        self.rows = [(i, ln) for i, ln in self.rows if ln and not ln.startswith("#")]
        self.pos = 0

    def next(self, section: str):
        if self.pos >= len(self.rows):
            last = self.rows[-1][0] if self.rows else 0
            raise ParseError(f"unexpected end of file: missing section {section}", line=last + 1, field=section)
        row = self.rows[self.pos]
        self.pos += 1
        return row

    def keyword(self, key: str, nargs: int):
        lineno, text = self.next(key)
        parts = text.split()
        if parts[0] != key:
            raise ParseError(f"expected {key}, found {parts[0]!r}", line=lineno, field=key)
        if nargs >= 0 and len(parts) - 1 != nargs:
            raise ParseError(f"{key} takes {nargs} value(s), got {len(parts) - 1}", line=lineno, field=key)
        return lineno, parts[1:]


def _num(tok: str, lineno: int, fieldname: str, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise ParseError(f"cannot parse {tok!r} as {kind.__name__}", line=lineno, field=fieldname) from None


def loads_instance(text: str) -> Instance:
    rd = _Lines(text)
    lineno, head = rd.keyword(FORMAT_TAG, 1)
    if _num(head[0], lineno, "version", int) != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {head[0]}", line=lineno, field="version")
    lineno, rest = rd.keyword("NAME", -1)
    name = " ".join(rest) or "instance"
    lineno, (n_tok,) = rd.keyword("N", 1)
    n = _num(n_tok, lineno, "N", int)
    lineno, (dx, dy) = rd.keyword("DEPOT", 2)
    depot = (_num(dx, lineno, "DEPOT.x"), _num(dy, lineno, "DEPOT.y"))
    rd.keyword("CUSTOMERS", 0)
    customers = []
    for i in range(n):
        lineno, text = rd.next(f"CUSTOMERS (row {i + 1} of {n})")
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"customer row needs 'x y demand', got {text!r}", line=lineno, field=f"customer {i + 1}")
        customers.append(Customer(*(_num(p, lineno, f"customer {i + 1}") for p in parts)))
    lineno, (k_tok,) = rd.keyword("FLEET", 1)
    k = _num(k_tok, lineno, "FLEET", int)
    fleet = []
    for j in range(k):
        lineno, text = rd.next(f"FLEET (row {j + 1} of {k})")
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"fleet row needs 'Q f c', got {text!r}", line=lineno, field=f"type {j}")
        q, f, c = (_num(p, lineno, f"type {j}") for p in parts)
        try:
            fleet.append(VehicleType(q, f, c, j))
        except InvalidInstance as exc:
            raise ParseError(str(exc), line=lineno, field=f"type {j}") from None
    rd.keyword("END", 0)
    return Instance(depot, tuple(customers), tuple(fleet), name)


def load_instance(path) -> Instance:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith(FORMAT_TAG):
        return loads_instance(text)
    return loads_tabular(text)[0]


def loads_tabular(text: str) -> tuple[Instance, dict]:
    """Parse the tabular benchmark format -> (instance, header dict)."""
    header: dict[str, str] = {}
    nodes, fleet = [], []
    block = None
    last = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        last = lineno
        parts = line.split()
        low = parts[0].lower()
        if low in ("nodes", "fleet") and len(parts) == 1:
            block = low
            continue
        if block is None:
            header[low] = " ".join(parts[1:])
        elif block == "nodes":
            if len(parts) != 4:
                raise ParseError("node row needs 'id x y demand'", line=lineno, field="nodes")
            nodes.append((_num(parts[0], lineno, "id", int), *(_num(p, lineno, "nodes") for p in parts[1:])))
        else:
            if len(parts) != 4:
                raise ParseError("fleet row needs 'label capacity fixed unit'", line=lineno, field="fleet")
            fleet.append(tuple(_num(p, lineno, f"fleet {parts[0]}") for p in parts[1:]))
    if not nodes:
        raise ParseError("missing section nodes", line=last + 1, field="nodes")
    if not fleet:
        raise ParseError("missing section fleet", line=last + 1, field="fleet")
    nodes.sort(key=lambda r: r[0])
    if [r[0] for r in nodes] != list(range(len(nodes))):
        raise ParseError("node ids must be 0..n without gaps", field="nodes")
    depot = nodes[0][1:3]
    customers = tuple(Customer(x, y, d) for _, x, y, d in nodes[1:])
    vts = tuple(VehicleType(q, f, c, j) for j, (q, f, c) in enumerate(fleet))
    inst = Instance(depot, customers, vts, header.get("name", "instance"))
    return inst, header


# ---------------------------------------------------------------- fixtures

@dataclass(frozen=True)
class BenchmarkRecord:
    instance: Instance
    best_known_cost: float
    source_label: str
    instance_id: int = 0

    def __post_init__(self):
        if not self.best_known_cost > 0:
            raise ValueError("best_known_cost must be > 0")


def _fixture_text(instance_id: int) -> str:
    name = f"golden-{instance_id:02d}.txt"
    ref = resources.files("fleetmix").joinpath("data", "golden", name)
    if not ref.is_file():
        raise FixtureMissing(f"benchmark fixture for Golden instance {instance_id} not found ({name})")
    return ref.read_text()


def load_golden(instance_id: int) -> BenchmarkRecord:
    inst, head = loads_tabular(_fixture_text(instance_id))
    if "best_known" not in head:
        raise ParseError("fixture lacks a best_known header", field="best_known")
    return BenchmarkRecord(inst, float(head["best_known"]), head.get("source", ""), instance_id)


def load_golden_fixtures(ids: Iterable[int] = GOLDEN_IDS) -> list[BenchmarkRecord]:
    return [load_golden(i) for i in ids]


# ---------------------------------------------------------------- solutions

def dumps_solution(sol: Solution, instance_name: str = "") -> str:
    lines = [f"{SOLUTION_TAG} 1"]
    if instance_name:
        lines.append(f"instance {instance_name}")
    lines.append(f"cost {_f(sol.total_cost)}")
    for r in sol.routes:
        lines.append(f"{r.vehicle_type}: " + ",".join(str(s) for s in r.stops))
    return "\n".join(lines) + "\n"


def save_solution(sol: Solution, path, instance_name: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_solution(sol, instance_name))
    return path


def loads_solution(text: str) -> Solution:
    cost = math.nan
    routes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(SOLUTION_TAG) or line.startswith("instance "):
            continue
        if line.startswith("cost "):
            cost = _num(line.split()[1], lineno, "cost")
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise ParseError(f"expected 'type_id: stop,stop,...', got {line!r}", line=lineno, field="route")
        stops = tuple(_num(s, lineno, "stops", int) for s in tail.replace(" ", "").split(",") if s)
        try:
            routes.append(Route(_num(head.strip(), lineno, "type_id", int), stops))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, field="route") from None
    return Solution(tuple(routes), cost)


def load_solution(path) -> Solution:
    return loads_solution(Path(path).read_text())


# ---------------------------------------------------------------- reports

REPORT_FIELDS = ("solver", "instance", "cost", "seconds", "gap_percent", "best", "best_known")


@dataclass
class RunResult:
    solver: str
    instance: str
    cost: float
    seconds: float
    best_known: float | None = None
    extra: dict = field(default_factory=dict)


def gap_percent(cost: float, best: float) -> float:
    return (cost - best) / best * 100.0


def compute_gaps(results: list[RunResult]) -> list[dict]:
    """Gap of each record vs the best-known constant, else vs the row-wise best cost."""
    if not results:
        raise ValueError("no results to compare")
    row_best: dict[str, float] = {}
    for r in results:
        if math.isfinite(r.cost):
            row_best[r.instance] = min(row_best.get(r.instance, math.inf), r.cost)
    out = []
    for r in results:
        best = r.best_known if r.best_known is not None else row_best.get(r.instance, math.nan)
        gap = gap_percent(r.cost, best) if math.isfinite(r.cost) and best and math.isfinite(best) else math.nan
        out.append({"solver": r.solver, "instance": r.instance, "cost": r.cost, "seconds": r.seconds,
                    "gap_percent": gap, "best": best, "best_known": r.best_known, **r.extra})
    return out


def render_table(records: list[dict]) -> str:
    """Per-solver mean Cost / Time(s) / Gap, then per-instance rows."""
    solvers = list(dict.fromkeys(r["solver"] for r in records))
    lines = [f"{'Method':<28}{'Cost':>12}{'Time (s)':>11}{'Gap':>10}", "-" * 61]
    for s in solvers:
        rows = [r for r in records if r["solver"] == s]
        mc = sum(r["cost"] for r in rows) / len(rows)
        mt = sum(r["seconds"] for r in rows) / len(rows)
        mg = sum(r["gap_percent"] for r in rows) / len(rows)
        lines.append(f"{s:<28}{mc:>12.2f}{mt:>11.2f}{mg:>9.2f}%")
    lines += ["", f"{'Instance':<24}{'Method':<20}{'Cost':>12}{'Best':>12}{'Time (s)':>11}{'Gap':>10}", "-" * 89]
    for r in records:
        lines.append(f"{r['instance']:<24}{r['solver']:<20}{r['cost']:>12.2f}{r['best']:>12.2f}"
                     f"{r['seconds']:>11.2f}{r['gap_percent']:>9.2f}%")
    return "\n".join(lines) + "\n"


def save_run_report(results: list[RunResult], path) -> tuple[Path, Path]:
    """Write ``path`` (JSON, or CSV when the suffix is .csv) plus a ``.txt`` gap table."""
    if not results:
        raise ValueError("cannot write a report without results")
    records = compute_gaps(results)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore")
            w.writeheader()
            w.writerows(records)
    else:
        payload = {"format": "fleetmix-report", "version": 1, "records": records}
        path.write_text(json.dumps(payload, indent=1, allow_nan=True) + "\n")
    table = path.with_suffix(".txt")
    table.write_text(render_table(records))
    return path, table


def load_run_report(path) -> list[RunResult]:
    from .errors import SchemaMismatch

    path = Path(path)
    if path.suffix == ".csv":
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
    else:
        payload = json.loads(path.read_text())
        if payload.get("format") != "fleetmix-report":
            raise SchemaMismatch(f"{path} is not a fleetmix report")
        rows = payload["records"]
    out = []
    for row in rows:
        missing = [k for k in ("solver", "instance", "cost", "seconds") if k not in row]
        if missing:
            raise SchemaMismatch(f"{path}: record lacks {missing}")
        bk = row.get("best_known")
        bk = None if bk in (None, "", "None") else float(bk)
        out.append(RunResult(row["solver"], row["instance"], float(row["cost"]), float(row["seconds"]), bk))
    return out


def results_to_dicts(results: list[RunResult]) -> list[dict]:
    return [asdict(r) for r in results]
