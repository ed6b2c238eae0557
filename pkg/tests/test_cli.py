import json
import subprocess
import sys

import pytest

from tomomatch.cli import EXIT_INPUT, EXIT_NO_CONSENSUS, EXIT_OK, main
from tomomatch.geometry import Transform4DoF, apply_transform, invert, load_cloud, save_cloud


@pytest.fixture(scope="module")
def maps(tmp_path_factory):
    d = tmp_path_factory.mktemp("maps")
    c = d / "c.ply"
    assert main(["gen", str(c), "--scene", "room", "--seed", "4", "--density", "1500", "--grid", "0.05"]) == EXIT_OK
    cloud = load_cloud(c)
    save_cloud(apply_transform(cloud, Transform4DoF(0.3, -0.2, 0.1, 0.8)), d / "d.ply")
    assert main(["gen", str(d / "other.ply"), "--scene", "room", "--seed", "6", "--density", "1500",
                 "--grid", "0.05"]) == EXIT_OK
    return d


def test_match_outputs_json(maps, tmp_path):
    out = tmp_path / "r.json"
    code = main(["match", str(maps / "c.ply"), str(maps / "d.ply"), "--grid", "0.05", "--seed", "2",
                 "--k", "800", "--t-xy", "0.1", "--t-theta", "0.05", "--min-cluster", "3",
                 "--inlier-threshold", "0.1", "-o", str(out)])
    assert code == EXIT_OK
    res = json.loads(out.read_text())
    expected = Transform4DoF(0.3, -0.2, 0.1, 0.8)
    inv = invert(expected)
    assert res["theta"] == pytest.approx(inv.theta, abs=0.02)
    assert res["x"] == pytest.approx(inv.x, abs=0.1) and res["y"] == pytest.approx(inv.y, abs=0.1)
    assert len(res["matrix"]) == 16 and "timings" not in res


def test_match_no_consensus_exit_code(maps):
    assert main(["match", str(maps / "c.ply"), str(maps / "other.ply")]) == EXIT_NO_CONSENSUS


def test_input_errors(maps, tmp_path):
    assert main(["match", str(maps / "c.ply"), str(tmp_path / "missing.ply")]) == EXIT_INPUT
    bad = tmp_path / "bad.xyz"
    bad.write_text("1 2 nan\n")
    assert main(["slice", str(bad), str(tmp_path / "s")]) == EXIT_INPUT
    with pytest.raises(SystemExit):
        main(["match", "a", "b", "--grid", "-1"])


def test_slice_writes_index(maps, tmp_path):
    assert main(["slice", str(maps / "c.ply"), str(tmp_path / "s"), "--grid", "0.05", "--k", "100"]) == EXIT_OK
    index = json.loads((tmp_path / "s" / "index.json").read_text())
    assert index["grid_size"] == 0.05 and len(index["slices"]) > 40


def test_eval_zero_pairs(tmp_path, capsys):
    conf = tmp_path / "bench.conf"
    conf.write_text("environments =\noutput = %s\n" % (tmp_path / "r.csv"))
    assert main(["eval", str(conf)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["pairs"] == 0
    assert (tmp_path / "r.csv").read_text().startswith("# tomomatch-benchmark")


def test_serve_send_subprocess(maps):
    srv = subprocess.Popen(
        [sys.executable, "-m", "tomomatch.cli", "serve", "--bind", "127.0.0.1:0", "--map", str(maps / "c.ply"),
         "--grid", "0.05"],
        stdout=subprocess.PIPE, text=True,
    )
    try:
        line = srv.stdout.readline()
        assert line.startswith("listening on ")
        peer = line.split()[-1]
        out = subprocess.run(
            [sys.executable, "-m", "tomomatch.cli", "send", "--peer", peer, "--map", str(maps / "d.ply"),
             "--grid", "0.05"],
            capture_output=True, text=True, timeout=300,
        )
        assert out.returncode == EXIT_OK, out.stderr
        local = subprocess.run(
            [sys.executable, "-m", "tomomatch.cli", "match", str(maps / "c.ply"), str(maps / "d.ply"),
             "--grid", "0.05"],
            capture_output=True, text=True, timeout=300,
        )
        assert json.loads(out.stdout) == json.loads(local.stdout)
        mismatch = subprocess.run(
            [sys.executable, "-m", "tomomatch.cli", "send", "--peer", peer, "--map", str(maps / "d.ply"),
             "--grid", "0.1"],
            capture_output=True, text=True, timeout=300,
        )
        assert mismatch.returncode == EXIT_INPUT and "grid-mismatch" in mismatch.stderr
    finally:
        srv.terminate()
        srv.wait(10)
