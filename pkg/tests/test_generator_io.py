import math

import numpy as np
import pytest

from fleetmix.errors import FixtureMissing, InvalidInstance, ParseError, SchemaMismatch
from fleetmix.generator import GeneratorConfig, generate_batch, generate_instance, specific_factor
from fleetmix.instance import Instance, Route, Solution
from fleetmix.io import (RunResult, compute_gaps, dumps_instance, dumps_solution, load_golden,
                         load_golden_fixtures, load_instance, load_run_report, loads_instance, loads_solution,
                         loads_tabular, save_instance, save_run_report)

from conftest import toy


def test_generator_deterministic():
    a = generate_instance(GeneratorConfig(n=20, seed=42))
    b = generate_instance(GeneratorConfig(n=20, seed=42))
    assert a == b
    assert a != generate_instance(GeneratorConfig(n=20, seed=43))


def test_generator_ranges_over_many_seeds():
    cfg = GeneratorConfig(n=5)
    for inst in generate_batch(cfg, 10_000, first_seed=0):
        d = inst.demands[1:]
        assert d.min() >= 0.01 and d.max() <= 0.5
        q = inst.capacities
        assert q.min() >= 0.5 and q.max() <= 3.0
        assert (inst.fixed_costs >= q).all() and inst.fixed_costs.min() >= 0.5
        assert 3 <= inst.num_types <= 6
        assert (inst.coords >= 0).all() and (inst.coords <= 1).all()


def test_specific_factor_clamped():
    assert specific_factor(0.6) == 1.0
    assert specific_factor(1.7) == 1.7


def test_streams_are_independent():
    # changing the fleet range must not move customer positions or demands
    a = generate_instance(GeneratorConfig(n=8, seed=5, type_count_range=(3, 3)))
    b = generate_instance(GeneratorConfig(n=8, seed=5, type_count_range=(6, 6)))
    assert a.customers == b.customers and a.depot == b.depot
    assert a.num_types == 3 and b.num_types == 6


def test_generator_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(n=0)
    with pytest.raises(ValueError):
        GeneratorConfig(demand_range=(0.5, 0.1))


def test_instance_round_trip(tmp_path):
    inst = Instance.from_arrays((0, 0), [(3, 4)], [1], [2], [1], [1], name="tri")
    path = save_instance(inst, tmp_path / "tri.fmx")
    assert load_instance(path) == inst
    rand = generate_instance(GeneratorConfig(n=15, seed=9))
    assert loads_instance(dumps_instance(rand)) == rand


def test_truncated_file_names_section():
    text = dumps_instance(generate_instance(GeneratorConfig(n=4, seed=1)))
    cut = text[: text.index("FLEET")]
    with pytest.raises(ParseError, match="FLEET"):
        loads_instance(cut)


def test_demand_above_capacity_rejected():
    text = dumps_instance(toy()).replace("0.2\n", "1.5\n", 1)
    with pytest.raises(InvalidInstance):
        loads_instance(text)


def test_bad_number_reports_line():
    text = dumps_instance(toy()).replace("DEPOT 0.0", "DEPOT zero")
    with pytest.raises(ParseError) as exc:
        loads_instance(text)
    assert exc.value.line == 4


def test_tabular_format():
    inst, head = loads_tabular("name t\nbest_known 3.5\nnodes\n0 0 0 0\n1 3 4 1  # far\nfleet\nA 2 1 1\n")
    assert head["best_known"] == "3.5"
    assert inst.n == 1 and inst.fleet[0].capacity == 2
    with pytest.raises(ParseError, match="fleet"):
        loads_tabular("nodes\n0 0 0 0\n1 1 1 1\n")


def test_golden_records():
    recs = load_golden_fixtures()
    assert [r.instance_id for r in recs] == [3, 4, 5, 6, 13, 14, 15, 16, 17, 18, 19, 20]
    by_id = {r.instance_id: r for r in recs}
    assert by_id[3].best_known_cost == 961.03
    assert by_id[4].best_known_cost == 6437.33
    assert by_id[19].best_known_cost == 8665.08 and by_id[19].instance.n == 100
    with pytest.raises(FixtureMissing):
        load_golden(7)


def test_solution_round_trip():
    inst = Instance.from_arrays((0, 0), [(1, 0), (0, 1), (1, 1)], [0.3, 0.3, 0.3], [1.0], [1], [1])
    sol = Solution.from_routes(inst, [Route(0, (1, 3)), Route(0, (2,))])
    back = loads_solution(dumps_solution(sol, "x"))
    assert back.routes == sol.routes and back.total_cost == sol.total_cost


def test_gap_zero_and_table_row():
    recs = compute_gaps([RunResult("a", "i", 7.0, 0.1)])
    assert recs[0]["gap_percent"] == 0.0
    recs = compute_gaps([RunResult("drl", "fsmvrp-20", 64.05, 1.0, best_known=62.96)])
    assert abs(recs[0]["gap_percent"] - 1.74) <= 0.01


def test_gap_needs_results():
    with pytest.raises(ValueError):
        compute_gaps([])


def test_report_round_trip(tmp_path):
    rs = [RunResult("alns", "i1", 10.0, 0.5), RunResult("tabu", "i1", 11.0, 0.2),
          RunResult("alns", "g3", 970.0, 1.0, best_known=961.03)]
    for name in ("r.json", "r.csv"):
        path, table = save_run_report(rs, tmp_path / name)
        back = load_run_report(path)
        assert [(r.solver, r.instance, r.cost, r.best_known) for r in back] == \
               [(r.solver, r.instance, r.cost, r.best_known) for r in rs]
        assert "alns" in table.read_text()
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(SchemaMismatch):
        load_run_report(tmp_path / "bad.json")
