import json
import subprocess
import sys

import pytest

from critnodes.cli import config_hash, main, parse_scan


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestConfig:
    def test_missing_h(self, tmp_path, capsys):
        code, _, err = run(["eig", "--shape", "square", "--out", str(tmp_path)], capsys)
        assert code == 1 and "h" in err.split(":")[1]

    def test_bad_shape(self, tmp_path, capsys):
        code, _, err = run(["eig", "--shape", "blob", "--h", "0.1", "--out", str(tmp_path)], capsys)
        assert code == 1 and "shape" in err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"h": 0.1, "colour": "red"}))
        code, _, err = run(["eig", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 1 and "colour" in err

    def test_flag_overrides_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"h": 0.5, "shape": "disk"}))
        out = tmp_path / "o"
        code, _, _ = run(["eig", "--config", str(cfg), "--h", "0.125", "--shape", "square", "--out", str(out)],
                         capsys)
        assert code == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["h"] == 0.125 and echoed["shape"] == "square"

    def test_hole_too_coarse(self, tmp_path, capsys):
        code, _, err = run(["hole-flow", "--h", "0.05", "--x0", "0.1,0.1", "--out", str(tmp_path)], capsys)
        assert code == 1 and "h" in err

    def test_x0_shape(self, tmp_path, capsys):
        code, _, err = run(["hole-flow", "--h", "0.02", "--x0", "0.1", "--out", str(tmp_path)], capsys)
        assert code == 1 and "x0" in err

    def test_scan(self):
        assert parse_scan("0:0.88:0.02").tolist()[-1] == 0.88
        assert len(parse_scan("0:0.88:0.02")) == 45

    def test_hash_depends_on_values(self):
        assert config_hash("eig", {"h": 0.1}) != config_hash("eig", {"h": 0.2})
        assert config_hash("eig", {"h": 0.1, "s": 1}) == config_hash("eig", {"s": 1, "h": 0.1})


class TestCommands:
    def test_eig_square(self, tmp_path, capsys):
        code, out, _ = run(["eig", "--shape", "square", "--h", "0.0625", "--out", str(tmp_path), "--svg",
                            "--dump-mask"], capsys)
        assert code == 0
        assert out.startswith("mu2=9.8") and "degenerate=true" in out
        for name in ("eigenpair.csv", "trace.csv", "mask.csv", "psi2.svg", "config.json"):
            assert (tmp_path / name).exists()
        lines = (tmp_path / "eigenpair.csv").read_text().splitlines()
        assert lines[0].startswith("# config_hash=") and lines[1] == "x,y,psi2"
        assert len(lines) == 2 + 256

    def test_eig_disk_degenerate(self, tmp_path, capsys):
        code, out, _ = run(["eig", "--shape", "disk", "--h", "0.05", "--out", str(tmp_path)], capsys)
        assert code == 0 and "degenerate=true" in out

    def test_eig_not_converged(self, tmp_path, capsys):
        code, out, _ = run(["eig", "--h", "0.0625", "--max-steps", "5", "--out", str(tmp_path)], capsys)
        assert code == 2 and "converged=false" in out

    def test_hole_sweep(self, tmp_path, capsys):
        code, out, _ = run(["hole-sweep", "--shape", "disk", "--h", "0.025", "--scan", "0:0.4:0.2",
                            "--out", str(tmp_path), "--svg"], capsys)
        assert code == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[1] == "d,x,y,mu2,gap" and len(lines) == 5
        assert (tmp_path / "sweep.svg").exists()

    def test_hole_flow_equilibrium(self, tmp_path, capsys):
        code, out, _ = run(["hole-flow", "--h", "0.025", "--x0", "0,0", "--inner", "oracle", "--out",
                            str(tmp_path), "--svg"], capsys)
        assert code == 0 and "x*=(0.000000, 0.000000)" in out and "mu2*=" in out and "v_norm=" in out
        assert (tmp_path / "trajectory.svg").exists()

    def test_hole_flow_module_error(self, tmp_path, capsys):
        code, _, err = run(["hole-flow", "--h", "0.025", "--x0", "0.95,0", "--out", str(tmp_path)], capsys)
        assert code == 2 and "not admissible" in err

    def test_nodal_map(self, tmp_path, capsys):
        code, out, _ = run(["nodal-map", "--shape", "square", "--h", "0.03125", "--out", str(tmp_path), "--svg"],
                           capsys)
        assert code == 0 and "regions=2" in out
        for name in ("f.csv", "nodal.csv", "minima.csv", "f.svg", "psi2.svg"):
            assert (tmp_path / name).exists()

    def test_graph_sweep_deterministic(self, tmp_path, capsys):
        args = ["graph-sweep", "--model", "er", "--n", "50", "--p", "0.15", "--seed", "7", "--svg"]
        assert run(args + ["--out", str(tmp_path / "a")], capsys)[0] == 0
        assert run(args + ["--out", str(tmp_path / "b")], capsys)[0] == 0
        rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
        assert rows[1] == "node,lambda2_residual,fiedler_abs,fiedler_rank" and len(rows) == 52
        for name in ("sweep.csv", "edges.txt", "sweep.svg", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_graph_sweep_from_file(self, tmp_path, capsys):
        (tmp_path / "g.txt").write_text("n=5\n0 1\n0 2\n0 3\n0 4\n")
        code, out, _ = run(["graph-sweep", "--edges", str(tmp_path / "g.txt"), "--out", str(tmp_path / "o")],
                           capsys)
        assert code == 0 and "argmin=[0]" in out and "agree=true" in out

    def test_consistency(self, tmp_path, capsys):
        code, out, _ = run(["consistency", "--ns", "60,120", "--samples", "2", "--grid-h", "0.0625",
                            "--out", str(tmp_path), "--svg"], capsys)
        assert code == 0
        assert (tmp_path / "consistency.csv").read_text().splitlines()[1] == \
            "n,mismatch_mean,mismatch_std,control_mean"

    def test_outputs_byte_identical(self, tmp_path, capsys):
        for d in ("a", "b"):
            run(["nodal-map", "--shape", "disk", "--h", "0.0625", "--svg", "--out", str(tmp_path / d)], capsys)
        for name in ("f.csv", "nodal.csv", "minima.csv", "f.svg", "psi2.svg", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "critnodes.cli", "eig", "--shape", "square", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 1 and "h" in proc.stderr
