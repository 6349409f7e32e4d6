import io
import json
from pathlib import Path

import pytest

from pipeplan import cli

DATA = Path(__file__).resolve().parent.parent / "data"
NET = str(DATA / "net_balanced3.json")
TIGHT = str(DATA / "cluster_sync_tight.json")
ROOMY = str(DATA / "cluster_sync_roomy.json")
ASYNC_NET = str(DATA / "net_async3.json")
ASYNC = str(DATA / "cluster_async.json")


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_validate_ok():
    code, out, _ = run("validate", NET, TIGHT)
    assert code == 0 and "3 layers" in out


def test_validate_link_count(tmp_path):
    doc = json.loads(Path(TIGHT).read_text())
    doc["link_bandwidth_bytes_per_us"] = doc["link_bandwidth_bytes_per_us"][:1]
    bad = tmp_path / "cluster.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run("validate", NET, str(bad))
    assert code == 1 and "expected N-1 links" in err


def test_validate_zero_time(tmp_path):
    doc = json.loads(Path(NET).read_text())
    doc["layers"][2]["fp_us"]["gpu"] = 0
    bad = tmp_path / "net.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run("validate", str(bad), TIGHT)
    assert code == 1 and "layers[2].fp_us.gpu" in err


def test_malformed_file(tmp_path):
    bad = tmp_path / "net.json"
    bad.write_text("{\"name\": ")
    code, _, err = run("plan", str(bad), TIGHT, "--schedule", "1F1B-SNO", "--micro", "8")
    assert code == 1 and "line 1" in err


def test_lenient_accepts_extra_fields(tmp_path):
    doc = json.loads(Path(NET).read_text())
    doc["notes"] = "profiled on a quiet node"
    path = tmp_path / "net.json"
    path.write_text(json.dumps(doc))
    assert run("validate", str(path), TIGHT)[0] == 1
    assert run("validate", str(path), TIGHT, "--lenient")[0] == 0


def test_plan_writes_file(tmp_path):
    target = tmp_path / "plan.json"
    code, out, _ = run("plan", NET, TIGHT, "--schedule", "1F1B-SNO", "--micro", "8",
                       "-o", str(target), "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert len(report["plan"]["stages"]) == 3
    assert report["estimate"]["minibatch_time_us"] == 324
    assert json.loads(target.read_text()) == report["plan"]


def test_plan_picks_micro_count_from_minibatch():
    code, out, _ = run("plan", NET, ROOMY, "--schedule", "1F1B-SO", "--minibatch", "8",
                       "--format", "json")
    assert code == 0 and json.loads(out)["estimate"]["M"] == 8


def test_plan_oversized_layer():
    code, _, err = run("plan", str(DATA / "net_oversized.json"), TIGHT, "--schedule",
                       "1F1B-SNO", "--micro", "2")
    assert code == 2 and err.startswith("infeasible: memory")


def test_plan_wrong_mode_is_input_error():
    code, _, err = run("plan", NET, TIGHT, "--schedule", "FBP-AS", "--micro", "2")
    assert code == 1 and "async" in err


@pytest.mark.parametrize("cluster,kind", [(TIGHT, "1F1B-SNO"), (ROOMY, "1F1B-SO")])
def test_explore_sync(cluster, kind, tmp_path):
    code, out, _ = run("explore", NET, cluster, "--minibatch", "8", "--format", "json",
                       "-o", str(tmp_path / "best.json"))
    assert code == 0
    assert json.loads(out)["best"]["schedule"] == kind
    assert (tmp_path / "best.json").exists()


def test_explore_async_table():
    code, out, _ = run("explore", ASYNC_NET, ASYNC, "--minibatch", "16", "--micro-set", "4,16")
    assert code == 0
    assert "best: FBP-AS" in out
    assert "1F1B-SNO" not in out.split("rejected:")[0]


def test_explore_no_feasible_plan():
    code, _, err = run("explore", str(DATA / "net_oversized.json"), TIGHT, "--minibatch", "4")
    assert code == 2 and "memory" in err


def test_simulate_prints_makespan(tmp_path):
    gantt = tmp_path / "g.csv"
    code, out, _ = run("simulate", NET, TIGHT, str(DATA / "plan_balanced3.json"),
                       "--schedule", "1F1B-SNO", "--micro", "8", "--gantt", str(gantt))
    assert code == 0 and "makespan 324 us" in out
    rows = gantt.read_text().splitlines()
    # M*2N compute rows plus a SEND and RECV per transfer
    assert len(rows) - 1 == 8 * 2 * 3 + 8 * 2 * 2 * 2


def test_simulate_svg_and_trace(tmp_path):
    code, out, _ = run("simulate", NET, TIGHT, str(DATA / "plan_balanced3.json"),
                       "--schedule", "1F1B-SNO", "--micro", "2", "--trace",
                       "--gantt", str(tmp_path / "g.svg"))
    assert code == 0 and "stage=3 FP" in out
    assert (tmp_path / "g.svg").read_bytes().startswith(b"<svg")


def test_simulate_missing_plan(tmp_path):
    code, _, err = run("simulate", NET, TIGHT, str(tmp_path / "none.json"),
                       "--schedule", "1F1B-SNO", "--micro", "8")
    assert code == 1 and "cannot read" in err


def test_simulate_bad_gantt_suffix(tmp_path):
    code, _, _ = run("simulate", NET, TIGHT, str(DATA / "plan_balanced3.json"),
                     "--schedule", "1F1B-SNO", "--micro", "8", "--gantt", str(tmp_path / "g.png"))
    assert code == 1


@pytest.mark.parametrize("argv", [[], ["plan", NET], ["frobnicate"],
                                  ["plan", NET, TIGHT, "--schedule", "2F2B", "--micro", "2"],
                                  ["plan", NET, TIGHT, "--schedule", "1F1B-SO", "--micro", "0"]])
def test_usage_errors_exit_1(argv, capsys):
    assert cli.main(argv) == 1


def test_manifest(tmp_path):
    manifest = tmp_path / "m.json"
    code, _, _ = run("validate", NET, TIGHT, "--manifest", str(manifest))
    assert code == 0
    doc = json.loads(manifest.read_text())
    assert doc["seed_free"] is True
    assert set(doc["input_digests"]) == {"net_balanced3.json", "cluster_sync_tight.json"}
    assert all(len(v) == 64 for v in doc["input_digests"].values())


def test_version(capsys):
    assert cli.main(["--version"]) == 0
