import json
import subprocess
import sys

import numpy as np
import pytest

from qihier import channels as chn
from qihier import cli
from qihier.distillation import DistillationProblem, build_example_state, build_sdp
from qihier.linalg import SystemLayout
from qihier.sdp import SdpModel, dump_problem


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(out):
    lines = [ln for ln in out.splitlines() if ln.startswith("{")]
    assert len(lines) == 1
    return json.loads(lines[0])


def write_channel(tmp_path, ch, name="ch.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cli.channel_to_dict(ch)))
    return str(path)


# ---------------------------------------------------------------------------
# channel files
# ---------------------------------------------------------------------------


def test_channel_file_round_trip(rng):
    ab = SystemLayout([("A", 2, "A"), ("B", 2, "B")])
    channels = [chn.make_swap(2), chn.nonlocal_incoherent_channel(),
                chn.random_channel(ab, SystemLayout([("B'", 3, "B")]), 2, rng),
                chn.as_choi(chn.random_channel(ab, ab, 3, rng))]
    for ch in channels:
        text = json.dumps(cli.channel_to_dict(ch))
        back = cli.channel_from_dict(json.loads(text))
        assert type(back) is type(ch)
        assert chn.channels_equal(ch, back, tol=0.0)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.update(data=[]), "data"),
    (lambda d: d.update(kind="unitary"), "kind"),
    (lambda d: d.pop("dims_out"), "dims_out"),
    (lambda d: d["dims_in"][1].__setitem__(2, "C"), "dims_in[1]"),
    (lambda d: d["dims_in"][0].__setitem__(1, 0), "dims_in[0]"),
    (lambda d: d["data"][0].__setitem__(3, [1.0]), "data[0][3]"),
    (lambda d: d["data"][0].pop(), "data[0]"),
    (lambda d: d["data"][0].__setitem__(0, [2.0, 0.0]), "data"),
])
def test_malformed_channel_names_first_bad_field(mutate, field):
    d = cli.channel_to_dict(chn.make_swap(2))
    mutate(d)
    with pytest.raises(cli.InputError) as exc:
        cli.channel_from_dict(d)
    assert str(exc.value).startswith(field)


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------


def test_classify_swap(tmp_path, capsys):
    path = write_channel(tmp_path, chn.make_swap(2))
    code, out, _ = run(capsys, "classify", "--channel", path, "--classes", "mio,ppt")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "mio: true"
    assert lines[1].startswith("ppt: false witness=")


def test_classify_io_channel(tmp_path, capsys):
    path = write_channel(tmp_path, chn.nonlocal_incoherent_channel())
    code, out, _ = run(capsys, "classify", "--channel", path, "--classes", "io,mio,qip,cqip", "--json", "-")
    assert code == 0
    verdicts = report(out)["results"]["verdicts"]
    assert [verdicts[c]["member"] for c in ("io", "mio", "qip", "cqip")] == [True, True, False, False]
    assert verdicts["qip"]["witness"]["b"] == 1


def test_classify_empty_kraus_list(tmp_path, capsys):
    d = cli.channel_to_dict(chn.make_swap(2))
    d["data"] = []
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    code, _, err = run(capsys, "classify", "--channel", str(path))
    assert code == 2
    assert "data" in err


def test_classify_unknown_class_and_missing_file(tmp_path, capsys):
    path = write_channel(tmp_path, chn.make_swap(2))
    assert run(capsys, "classify", "--channel", path, "--classes", "sep")[0] == 2
    assert run(capsys, "classify", "--channel", str(tmp_path / "none.json"))[0] == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert run(capsys, "classify", "--channel", str(tmp_path / "junk.json"))[0] == 2


def test_classify_numerical_failure(tmp_path, capsys, monkeypatch):
    def broken(ch, tol):
        raise np.linalg.LinAlgError("eigensolver did not converge")
    monkeypatch.setitem(cli.CLASS_TESTS, "mio", broken)
    path = write_channel(tmp_path, chn.make_swap(2))
    assert run(capsys, "classify", "--channel", path, "--classes", "mio")[0] == 1


def test_tolerance_from_environment(tmp_path, capsys, monkeypatch):
    path = write_channel(tmp_path, chn.make_swap(2))
    monkeypatch.setenv("QIHIER_TOL", "0.01")
    code, out, _ = run(capsys, "classify", "--channel", path, "--classes", "mio", "--json", "-")
    assert code == 0
    assert report(out)["parameters"]["tol"] == 0.01
    monkeypatch.setenv("QIHIER_TOL", "tiny")
    assert run(capsys, "classify", "--channel", path)[0] == 2


# ---------------------------------------------------------------------------
# distill
# ---------------------------------------------------------------------------


def test_distill_qip(capsys):
    code, out, _ = run(capsys, "distill", "--t", "0.25", "--target-rank", "4", "--class", "qip")
    assert code == 0
    rep = report(out)
    assert rep["command"] == "distill"
    assert rep["results"]["value"] == pytest.approx(1.0, abs=1e-4)
    assert rep["certificate"]["passed"]
    assert rep["results"]["verdicts"]["qip"]["member"]
    assert set(rep) == {"command", "parameters", "results", "certificate", "wall_time", "version"}


def test_distill_is_reproducible(capsys):
    args = ("distill", "--t", "0.3", "--target-rank", "2", "--class", "mio")
    a = report(run(capsys, *args)[1])
    b = report(run(capsys, *args)[1])
    assert a["results"] == b["results"]
    assert a["parameters"] == b["parameters"]


def test_distill_bad_t(capsys):
    code, _, err = run(capsys, "distill", "--t", "0.6")
    assert code == 2
    assert "t out of (0, 0.5)" in err


def test_distill_flag_errors(capsys):
    assert run(capsys, "distill")[0] == 2
    assert run(capsys, "distill", "--t", "0.2", "--class", "sep")[0] == 2
    assert run(capsys, "distill", "--t", "0.2", "--target-rank", "0")[0] == 2
    assert run(capsys, "distill", "--t", "0.2", "--tol", "-1")[0] == 2


def test_distill_solver_failure(capsys):
    code, out, _ = run(capsys, "distill", "--t", "0.25", "--max-iters", "1")
    assert code == 1
    assert report(out)["results"]["status"] == "max_iterations"


def test_distill_from_state_file(tmp_path, capsys):
    path = tmp_path / "state.json"
    path.write_text(json.dumps({"dims": [["A", 1, "A"], ["B", 2, "B"]],
                                "vector": [[0.6, 0.0], [0.0, 0.8]]}))
    code, out, _ = run(capsys, "distill", "--state", str(path), "--target-rank", "2",
                       "--objective", "trace", "--json", str(tmp_path / "r.json"))
    assert code == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    # best incoherent-phase correction of (0.6, 0.8i) still has unequal weights
    assert 0 < rep["results"]["value"] < 0.1
    path.write_text(json.dumps({"dims": [["A", 1, "A"], ["B", 2, "B"]], "vector": [[1.0, 0.0], [1.0, 0.0]]}))
    assert run(capsys, "distill", "--state", str(path), "--target-rank", "2")[0] == 2


def test_distill_dump_and_solve_sdp(tmp_path, capsys):
    dump = tmp_path / "p.sdp"
    code, out, _ = run(capsys, "distill", "--t", "0.3", "--target-rank", "2", "--dump-sdp", str(dump))
    assert code == 0
    value = report(out)["results"]["value"]
    code, out, _ = run(capsys, "solve-sdp", str(dump))
    assert code == 0
    rep = report(out)
    assert rep["results"]["primal_objective"] == pytest.approx(value, abs=1e-12)
    assert rep["certificate"]["passed"]


# ---------------------------------------------------------------------------
# solve-sdp
# ---------------------------------------------------------------------------


def test_solve_sdp_failure_and_bad_input(tmp_path, capsys):
    model = SdpModel()
    x = model.add_block("X", 2)
    model.add_scalar_constraint(x.trace(), 1.0)
    model.add_scalar_constraint(x.trace(), 2.0)
    path = tmp_path / "infeasible.sdp"
    with open(path, "w") as fh:
        dump_problem(model.build(), fh)
    code, out, _ = run(capsys, "solve-sdp", str(path))
    assert code == 1
    assert report(out)["results"]["status"] == "infeasible"
    (tmp_path / "bad.sdp").write_text("qihier-sdp 1\nblock X 2\n")
    assert run(capsys, "solve-sdp", str(tmp_path / "bad.sdp"))[0] == 2
    assert run(capsys, "solve-sdp", str(tmp_path / "missing.sdp"))[0] == 2


def test_solve_sdp_iteration_limit(tmp_path, capsys):
    problem, _ = build_sdp(DistillationProblem(build_example_state(0.2), 2))
    path = tmp_path / "p.sdp"
    with open(path, "w") as fh:
        dump_problem(problem, fh)
    assert run(capsys, "solve-sdp", str(path), "--max-iters", "2")[0] == 1


# ---------------------------------------------------------------------------
# hierarchy-demo and sweep
# ---------------------------------------------------------------------------


def test_hierarchy_demo(capsys):
    code, out, _ = run(capsys, "hierarchy-demo")
    assert code == 0
    assert report(out)["results"]["passed"]
    assert run(capsys, "hierarchy-demo", "--tol", "1e-2")[0] == 0


def test_hierarchy_demo_detects_broken_class_test(capsys, monkeypatch):
    import qihier.distillation as dist

    from qihier.verdict import MembershipVerdict

    # a PPT test that never rejects: the SWAP separation must then fail
    monkeypatch.setattr(dist, "is_ppt", lambda ch, tol=1e-8: MembershipVerdict(
        "PPT", True, None, tol, {"min_eigenvalue": 0.0}))
    code, out, _ = run(capsys, "hierarchy-demo")
    assert code == 1
    assert not report(out)["results"]["passed"]


def test_hierarchy_demo_failures(capsys):
    assert run(capsys, "hierarchy-demo", "--max-iters", "1")[0] == 1
    assert run(capsys, "hierarchy-demo", "--tol", "0")[0] == 2


def test_sweep_qip(tmp_path, capsys):
    csv_path = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", "--t-range", "0.1:0.4:0.1", "--class", "qip", "--csv", str(csv_path))
    assert code == 0
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "t,class,M,value,gap"
    assert len(rows) == 5
    assert [float(r.split(",")[0]) for r in rows[1:]] == [0.1, 0.2, 0.3, 0.4]
    assert all(float(r.split(",")[3]) <= 1 + 1e-7 for r in rows[1:])


def test_sweep_class_monotone(capsys):
    code, out, _ = run(capsys, "sweep", "--t-range", "0.2:0.3:0.1", "--class", "qip,qip-ppt",
                       "--target-rank", "2")
    assert code == 0
    rows = [r.split(",") for r in out.splitlines()[1:]]
    values = {(r[0], r[1]): float(r[3]) for r in rows}
    for t in ("0.2", "0.3"):
        assert values[(t, "qip-ppt")] <= values[(t, "qip")] + 2e-7


@pytest.mark.parametrize("rng_text", ["0.1:0.4:0", "0.1:0.6:0.1", "0.3:0.1:0.1", "a:b:c", "0.1:0.2"])
def test_sweep_bad_range(capsys, rng_text):
    assert run(capsys, "sweep", "--t-range", rng_text)[0] == 2


def test_sweep_solver_failure(capsys):
    assert run(capsys, "sweep", "--t-range", "0.2:0.2:0.1", "--max-iters", "1")[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qihier", "distill", "--t", "0.6"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "t out of (0, 0.5)" in proc.stderr
