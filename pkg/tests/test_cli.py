import shutil
import subprocess

import pytest

from frislab.cli import main
from frislab.harness import CSV_HEADER, read_csv

CONFIG = """
[geometry]
n_x = 4
n_z = 4
d_x = 0.5
d_z = 0.5

[frame]
n_r = 2
m = 2
k_sel = 8
phase = q2

[sweep]
snr_db = -20, -10
min_frames = 256
min_bit_errors = 10
max_frames = 1024
seed = 5
correlation = identity
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "sweep.ini"
    p.write_text(CONFIG)
    return p


def test_run_writes_csv(cfg, tmp_path):
    out = tmp_path / "out.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    res = read_csv(out)
    assert all(p.frames >= 256 and p.ber_analytic > 0 for p in res.points)


def test_seed_flag_and_worker_independence(cfg, tmp_path):
    a, b, c = (tmp_path / f"{n}.csv" for n in "abc")
    main(["run", "--config", str(cfg), "--out", str(a), "--seed", "5"])
    main(["run", "--config", str(cfg), "--out", str(b), "--workers", "2"])
    main(["run", "--config", str(cfg), "--out", str(c), "--seed", "0x10"])
    assert a.read_text() == b.read_text()
    assert a.read_text() != c.read_text()


def test_analytic_leaves_simulation_columns_empty(cfg, tmp_path):
    out = tmp_path / "an.csv"
    assert main(["analytic", "--config", str(cfg), "--out", str(out)]) == 0
    rows = [r.split(",") for r in out.read_text().splitlines()[1:]]
    assert len(rows) == 2
    assert all(r[1:6] == [""] * 5 and float(r[6]) > 0 for r in rows)


def test_preset_with_frame_cap(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["preset", "fig2_64", "--out", str(out), "--max-frames", "256"]) == 0
    res = read_csv(out)
    assert len(res.points) == 21
    assert all(p.frames == 256 for p in res.points)
    assert all(p.ber_analytic is None for p in res.points)


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert len(names) == 26 and "fig6_L5" in names and "fig4_k60" in names


def test_errors_map_to_exit_codes(cfg, tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(CONFIG.replace("k_sel = 8", "k_sel = 100"))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    assert "K_sel exceeds N_tot" in capsys.readouterr().err
    assert main(["preset", "nope", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.ini"), "--out", "x.csv"]) == 1


@pytest.mark.parametrize("argv", [["run", "--out", "x.csv"], ["preset", "fig2_64", "--out", "x",
                                                                "--seed", "-1"],
                                  ["preset", "fig2_64", "--out", "x", "--workers", "0"], []])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


@pytest.mark.skipif(shutil.which("frislab") is None, reason="console script not installed")
def test_console_script():
    out = subprocess.run(["frislab", "presets"], capture_output=True, text=True, check=True).stdout
    assert "fig3_sparse_q3" in out
