import json
import subprocess
import sys

import pytest

from fleetmix.cli import main
from fleetmix.instance import validate_solution
from fleetmix.io import load_instance, load_solution

TINY_TRAIN = {"epochs": 1, "steps_per_epoch": 2, "batch_size": 2, "trajectories": 4, "n": 6, "val_size": 4,
              "hyperparams": {"embed_dim": 16, "heads": 2, "encoder_layers": 1, "ff_hidden": 32}}


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    (d / "cfg.json").write_text(json.dumps(TINY_TRAIN))
    assert main(["train", "--config", str(d / "cfg.json"), "--out", str(d / "run"), "--seed", "1"]) == 0
    return d


def test_generate_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["generate", "--n", "20", "--count", "1000", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert len(a) == 1000 and a == b
    inst = load_instance(tmp_path / "a" / sorted(a)[0])
    assert inst.n == 20 and 3 <= inst.num_types <= 6
    assert inst.demands[1:].max() <= 0.5 and inst.capacities.min() >= 0.5


def test_generate_rejects_zero_n(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--n", "0", "--count", "1", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FLEETMIX_SEED", "7")
    main(["generate", "--n", "5", "--count", "2", "--out", str(tmp_path / "env")])
    monkeypatch.delenv("FLEETMIX_SEED")
    main(["generate", "--n", "5", "--count", "2", "--seed", "7", "--out", str(tmp_path / "arg")])
    assert files(tmp_path / "env") == files(tmp_path / "arg")


def test_train_smoke(trained):
    run = trained / "run"
    assert (run / "1.ckpt").is_file() and (run / "curve.csv").is_file()
    man = json.loads((run / "manifest.json").read_text())
    assert man["status"] == "ok" and man["config"]["use_af2"] is True


def test_train_no_af2_and_seeds(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps(TINY_TRAIN))
    for seed in ("1", "2"):
        assert main(["train", "--config", str(tmp_path / "cfg.json"), "--no-af2", "--seed", seed,
                     "--out", str(tmp_path / seed)]) == 0
    man = json.loads((tmp_path / "1" / "manifest.json").read_text())
    assert man["config"]["use_af2"] is False
    c1, c2 = (tmp_path / "1" / "curve.csv").read_text(), (tmp_path / "2" / "curve.csv").read_text()
    assert c1.splitlines()[0] == c2.splitlines()[0] and c1 != c2


def test_train_bad_config(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"trajectories": 1}))
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")]) == 3


def test_solve_deterministic_and_valid(trained, tmp_path):
    main(["generate", "--n", "6", "--count", "4", "--seed", "3", "--out", str(tmp_path / "inst")])
    ck = str(trained / "run" / "1.ckpt")
    for name in ("a", "b"):
        assert main(["solve", "--model", ck, "--instances", str(tmp_path / "inst"), "--out", str(tmp_path / name)]) == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    sols = {k: v for k, v in a.items() if k.endswith(".sol")}
    assert len(sols) == 4 and sols == {k: v for k, v in b.items() if k.endswith(".sol")}
    for name in sols:
        inst = load_instance(tmp_path / "inst" / (name[:-4] + ".txt"))
        assert validate_solution(inst, load_solution(tmp_path / "a" / name)) == []


def test_solve_hyperparam_mismatch(trained, tmp_path):
    (tmp_path / "hp.json").write_text(json.dumps({"embed_dim": 32, "heads": 2, "encoder_layers": 1}))
    main(["generate", "--n", "6", "--count", "1", "--out", str(tmp_path / "inst")])
    rc = main(["solve", "--model", str(trained / "run" / "1.ckpt"), "--hyperparams", str(tmp_path / "hp.json"),
               "--instances", str(tmp_path / "inst"), "--out", str(tmp_path / "o")])
    assert rc == 3


def test_bench_exact_gap_zero(tmp_path):
    main(["generate", "--n", "6", "--count", "3", "--seed", "1", "--out", str(tmp_path / "inst")])
    assert main(["bench", "--solvers", "exact,alns,tabu,ga", "--instances", str(tmp_path / "inst"),
                 "--alns-iterations", "300", "--tabu-iterations", "50", "--ga-generations", "10",
                 "--budget", "30", "--out", str(tmp_path / "b")]) == 0
    recs = json.loads((tmp_path / "b" / "report.json").read_text())["records"]
    assert len(recs) == 12
    assert all(r["gap_percent"] == 0.0 for r in recs if r["solver"] == "exact")
    assert all(r["gap_percent"] >= 0.0 for r in recs)


def test_bench_budget_zero_gives_start(tmp_path):
    from fleetmix.heuristics import initial_solution

    main(["generate", "--n", "7", "--count", "2", "--seed", "5", "--out", str(tmp_path / "inst")])
    assert main(["bench", "--solvers", "alns,tabu,ga", "--instances", str(tmp_path / "inst"), "--budget", "0",
                 "--out", str(tmp_path / "b")]) == 0
    recs = json.loads((tmp_path / "b" / "report.json").read_text())["records"]
    for r in recs:
        inst = load_instance(tmp_path / "inst" / f"{r['instance']}.txt")
        assert r["cost"] == initial_solution(inst).total_cost


def test_bench_golden_row(tmp_path):
    assert main(["bench", "--solvers", "alns", "--instances", "golden:3", "--alns-iterations", "200",
                 "--budget", "60", "--out", str(tmp_path / "g")]) == 0
    rec = json.loads((tmp_path / "g" / "report.json").read_text())["records"][0]
    assert rec["best_known"] == 961.03 and rec["best"] == 961.03
    assert rec["gap_percent"] == pytest.approx((rec["cost"] - 961.03) / 961.03 * 100)


def test_bench_neural_needs_model(tmp_path):
    assert main(["bench", "--solvers", "neural", "--instances", "golden", "--out", str(tmp_path)]) == 2


def test_export_lp(tmp_path):
    main(["generate", "--n", "3", "--count", "2", "--out", str(tmp_path / "inst")])
    assert main(["export-lp", "--instances", str(tmp_path / "inst"), "--out", str(tmp_path / "lp")]) == 0
    assert len(list((tmp_path / "lp").glob("*.lp"))) == 2


def test_report_merge_and_curves(trained, tmp_path):
    main(["generate", "--n", "6", "--count", "2", "--seed", "2", "--out", str(tmp_path / "inst")])
    main(["bench", "--solvers", "alns", "--instances", str(tmp_path / "inst"), "--alns-iterations", "50",
          "--out", str(tmp_path / "h")])
    main(["solve", "--model", str(trained / "run" / "1.ckpt"), "--instances", str(tmp_path / "inst"),
          "--out", str(tmp_path / "n")])
    assert main(["report", "--runs", str(tmp_path / "h"), str(tmp_path / "n"), str(trained / "run"),
                 "--format", "csv", "--out", str(tmp_path / "r")]) == 0
    import csv
    rows = list(csv.DictReader((tmp_path / "r" / "report.csv").open()))
    for inst in {r["instance"] for r in rows}:
        gaps = [float(r["gap_percent"]) for r in rows if r["instance"] == inst]
        assert min(gaps) == 0.0
    curves = (tmp_path / "r" / "curves.csv").read_text().splitlines()
    assert curves[0] == "epoch,run" and len(curves) == 3
    assert main(["report", "--runs", str(tmp_path / "missing")]) == 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fleetmix.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "fleetmix" in out.stdout
