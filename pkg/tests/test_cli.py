import subprocess
import sys

import numpy as np
import pytest

from hgcompute import io
from hgcompute.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_passes_and_writes_report(tmp_path, capsys):
    code, out, _ = run(["verify", "--seed", "0", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "verify_report.txt").read_text() == out
    assert "FAIL" not in out and out.count("PASS") == 16


def test_verify_fault_injection_fails(capsys):
    code, out, _ = run(["verify", "--seed", "0", "--inject-fault"], capsys)
    assert code == 1
    assert any(line.startswith("FAIL") and "row_stochastic" in line for line in out.splitlines())


def test_demo_scale_n_geometry(tmp_path, capsys):
    code, out, _ = run(["demo", "--seed", "3", "--scale", "N", "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = out.splitlines()
    assert "epsilon 6" in lines and "hyperconv C_in 128 C_out 128" in lines
    assert any(line.startswith("X_mixed vertices 256 channels 128") for line in lines)
    assert any(line.startswith("N3 1x64x32x32") for line in lines)
    for name in ("demo_report.txt", "heatmap_pre_hyperconv.pgm", "heatmap_post_hyperconv.pgm"):
        assert (tmp_path / name).exists()
    assert io.load_pgm_ppm(tmp_path / "heatmap_pre_hyperconv.pgm").shape == (1, 3, 16, 16)


def test_demo_reads_image_and_config(tmp_path, capsys):
    io.write_ppm(tmp_path / "img.ppm", np.random.default_rng(0).integers(0, 256, (3, 64, 64)))
    (tmp_path / "demo.cfg").write_text("scale = N\nmode = low_order\nseed = 5\ncollecting_set = B3,B4,B5\n")
    code, out, _ = run(["demo", "--config", str(tmp_path / "demo.cfg"), "--input", str(tmp_path / "img.ppm")],
                       capsys)
    assert code == 0
    assert "mode low_order" in out and "seed 5" in out and "collecting_set B3,B4,B5" in out
    assert "X_mixed vertices 16 channels 128" in out


@pytest.mark.parametrize("argv", [
    ["demo"],  # no seed
    ["demo", "--seed", "0", "--size", "100"],
    ["demo", "--seed", "0", "--collecting-set", "B9"],
    ["demo", "--seed", "0", "--input", "/nonexistent.pgm"],
    ["hypergraph"],
    ["ablate", "--seed", "0", "--center-separation", "1"],
    ["bench", "--seed", "0", "--vertex-counts", "x"],
])
def test_bad_input_exit_code(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_bench_csv(tmp_path, capsys):
    code, out, err = run(["bench", "--seed", "0", "--vertex-counts", "16,32", "--channels", "4",
                          "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "kernel,V,C,ns_per_op" and len(lines) == 9
    assert "blocked/naive" in err and (tmp_path / "bench.csv").read_text() == out


def test_ablate_and_fit(tmp_path, capsys):
    code, out, err = run(["ablate", "--seed", "0", "--out", str(tmp_path)], capsys)
    assert code == 0 and out.splitlines()[0] == "mode,epsilon,within_cluster_variance,variance_ratio"
    assert out.splitlines()[1].startswith("none,6,") and out.splitlines()[1].endswith(",1")
    assert "high_order <= low_order" in err
    code, out, err = run(["fit", "--seed", "0", "--steps", "10"], capsys)
    assert code == 0 and len(out.splitlines()) == 12
    assert run(["fit", "--seed", "0", "--step", "10"], capsys)[0] == 1


def test_hypergraph_command(tmp_path, capsys):
    x = np.array([[0, 0], [0.5, 0], [10, 10]], dtype=np.float32)
    io.save_tensor(tmp_path / "x.hyt", x)
    code, out, _ = run(["hypergraph", "--input", str(tmp_path / "x.hyt"), "--epsilon", "1",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    assert out.splitlines()[0] == "vertices 3 hyperedges 3 incidences 5 epsilon 1"
    assert (tmp_path / "hypergraph.txt").read_text() == "3 3\n0 1\n0 1\n2\n"
    io.save_tensor(tmp_path / "bad.hyt", np.zeros((2, 2, 2), dtype=np.float32))
    assert run(["hypergraph", "--input", str(tmp_path / "bad.hyt")], capsys)[0] == 2


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "hgcompute", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify" in proc.stdout
