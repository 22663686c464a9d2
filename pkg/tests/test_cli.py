from mmtrack.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from mmtrack.codebook import load_codebook
from mmtrack.sim_harness import read_csv


def _write(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def test_run_writes_csv(tmp_path):
    cfg = _write(tmp_path, "blocks = 2\nsearch_budget = 100\n")
    out = tmp_path / "out.csv"
    assert main(["run", "--config", cfg, "--out", str(out), "--trials", "2", "--seed", "3"]) == EXIT_OK
    rows = read_csv(out)
    assert {r["scheme"] for r in rows} == {"proposed", "independent"}
    assert all(r["trials"] == 2 for r in rows)


def test_unknown_key_exits_with_config_code(tmp_path, capsys):
    cfg = _write(tmp_path, "speed = 3\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG
    assert "'speed'" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG


def test_unwritable_output_is_runtime_error(tmp_path):
    cfg = _write(tmp_path, "blocks = 1\ntrials = 1\nsearch_budget = 50\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "no" / "x.csv")]) == EXIT_RUNTIME


def test_sweep_writes_one_file_per_velocity(tmp_path):
    cfg = _write(tmp_path, "rho = 0.9\ndelta_deg = 2\nblocks = 1\ntrials = 1\nsearch_budget = 50\n")
    assert main(["sweep", "--config", cfg, "--velocities", "1,3", "--out-dir", str(tmp_path / "s")]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "s").iterdir())
    assert names == ["throughput_v1.csv", "throughput_v3.csv"]
    rows = read_csv(tmp_path / "s" / "throughput_v3.csv")
    assert rows[0]["velocity_kmh"] == 3.0
    assert abs(rows[0]["rho"] - 0.903713) < 1e-6


def test_codebook_command(tmp_path):
    out = tmp_path / "cb.txt"
    assert main(["codebook", "--n-rx", "8", "--size", "4", "--budget", "200", "--out", str(out)]) == EXIT_OK
    basis = load_codebook(out)
    assert basis.n_rx == 8 and basis.size == 4 and basis.phase_order == 11
    assert basis.first_power == 0


def test_codebook_bad_phase_order(tmp_path):
    args = ["codebook", "--n-rx", "8", "--size", "4", "--phase-order", "9", "--out", str(tmp_path / "cb.txt")]
    assert main(args) == EXIT_CONFIG
